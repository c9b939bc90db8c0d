//! Scalar abstraction over the floating-point element type.
//!
//! All numeric kernels in this crate are generic over [`Scalar`] so the same
//! code runs in `f32` or `f64`. The shipped pipeline instantiates everything
//! at `f64` (see the type aliases at the crate root); `f32` remains available
//! for experiments where memory pressure matters more than tolerance.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalar usable by every numeric kernel in this crate.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    ///
    /// Panics if the literal is not representable, which cannot happen for
    /// the finite constants used in this crate.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    /// Dense row-major matrix multiply-accumulate: `c = alpha * a @ b + beta * c`.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`. The default is a naive
    /// triple loop; `f32`/`f64` override it with the blocked kernels from
    /// `matrixmultiply`.
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        assert_eq!(a.len(), m * k);
        assert_eq!(b.len(), k * n);
        assert_eq!(c.len(), m * n);
        for row in 0..m {
            let crow = &mut c[row * n..(row + 1) * n];
            if beta == Self::zero() {
                crow.fill(Self::zero());
            } else if beta != Self::one() {
                for v in crow.iter_mut() {
                    *v *= beta;
                }
            }
            for kk in 0..k {
                let aik = alpha * a[row * k + kk];
                if aik == Self::zero() {
                    continue;
                }
                let brow = &b[kk * n..(kk + 1) * n];
                for (cv, bv) in crow.iter_mut().zip(brow) {
                    *cv = *cv + aik * *bv;
                }
            }
        }
    }
}

impl Scalar for f64 {
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        assert_eq!(a.len(), m * k);
        assert_eq!(b.len(), k * n);
        assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Scalar for f32 {
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        assert_eq!(a.len(), m * k);
        assert_eq!(b.len(), k * n);
        assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                for j in 0..n {
                    c[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_product() {
        let m = 3;
        let k = 4;
        let n = 2;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.37 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64) * -0.11 + 0.5).collect();
        let mut c = vec![0.0; m * n];
        f64::gemm(m, k, n, 1.0, &a, &b, 0.0, &mut c);
        let expect = naive_gemm(m, k, n, &a, &b);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gemm_accumulates_with_beta_one() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        // c = a*b + c, treating a as 1x2, b as 2x1 -> c is 1x1.
        let mut c = [10.0];
        f64::gemm(1, 2, 1, 1.0, &a, &b, 1.0, &mut c);
        assert!((c[0] - (10.0 + 11.0)).abs() < 1e-14);
    }

    #[test]
    fn lit_round_trips() {
        let x: f64 = Scalar::lit(0.95);
        assert_eq!(x, 0.95);
        let y: f32 = Scalar::lit(0.5);
        assert_eq!(y, 0.5);
    }
}
