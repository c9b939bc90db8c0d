//! Small dense and sparse linear-algebra kernels shared by the geomodel
//! sampler and the flow solver.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("conjugate gradient failed to reach tolerance {tol} in {iters} iterations (residual {residual})")]
    CgDidNotConverge { iters: usize, tol: f64, residual: f64 },
}

/// In-place lower Cholesky factorization of a dense symmetric matrix stored
/// row-major. On success `a` holds L in its lower triangle (upper triangle is
/// left untouched).
pub fn cholesky_in_place<T: Scalar>(a: &mut [T], n: usize) -> Result<(), LinalgError> {
    assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag = diag - a[j * n + k] * a[j * n + k];
        }
        if diag <= T::zero() {
            return Err(LinalgError::NotPositiveDefinite {
                row: j,
                pivot: diag.to_f64().unwrap_or(f64::NAN),
            });
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    Ok(())
}

/// Computes `y = L z` for a lower-triangular factor produced by
/// [`cholesky_in_place`].
pub fn lower_triangular_apply<T: Scalar>(l: &[T], n: usize, z: &[T], y: &mut [T]) {
    assert_eq!(z.len(), n);
    assert_eq!(y.len(), n);
    for i in 0..n {
        let mut s = T::zero();
        for k in 0..=i {
            s = s + l[i * n + k] * z[k];
        }
        y[i] = s;
    }
}

/// Compressed sparse row matrix. Rows are stored in index order; columns
/// within a row follow insertion order, which this crate keeps sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    /// Builds a CSR matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet out of bounds");
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    let n = values.len();
                    values[n - 1] = values[n - 1] + v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Csr { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let mut s = T::zero();
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                s = s + self.values[idx] * x[self.col_idx[idx]];
            }
            y[r] = s;
        }
    }

    /// Dense `n_rows x d` product `Y = A X` with X stored row-major.
    pub fn mul_dense(&self, x: &[T], d: usize, y: &mut [T]) {
        assert_eq!(x.len(), self.n_cols * d);
        assert_eq!(y.len(), self.n_rows * d);
        y.fill(T::zero());
        for r in 0..self.n_rows {
            let yrow = &mut y[r * d..(r + 1) * d];
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.values[idx];
                let xrow = &x[self.col_idx[idx] * d..self.col_idx[idx] * d + d];
                for (yv, xv) in yrow.iter_mut().zip(xrow) {
                    *yv = *yv + v * *xv;
                }
            }
        }
    }

    /// Transposed matrix with sorted columns.
    pub fn transpose(&self) -> Csr<T> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((self.col_idx[idx], r, self.values[idx]));
            }
        }
        Csr::from_triplets(self.n_cols, self.n_rows, &triplets)
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[r * self.n_cols + self.col_idx[idx]] = self.values[idx];
            }
        }
        out
    }
}

/// Jacobi-preconditioned conjugate gradient for a symmetric positive-definite
/// system `A x = b`, optionally warm-started from `x0`. Converges when
/// `||b - A x|| <= tol * ||b||` (absolute `tol` when `b = 0`). Deterministic:
/// fixed iteration order, no threading.
pub fn pcg<T: Scalar>(
    a: &Csr<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<T>, LinalgError> {
    let n = b.len();
    assert_eq!(a.n_rows, n);
    let tol_t = T::lit(tol);
    let norm_b = dot(b, b).sqrt();
    let target = if norm_b > T::zero() { tol_t * norm_b } else { tol_t };

    let mut inv_diag = vec![T::one(); n];
    for r in 0..n {
        for idx in a.row_ptr[r]..a.row_ptr[r + 1] {
            if a.col_idx[idx] == r && a.values[idx] != T::zero() {
                inv_diag[r] = T::one() / a.values[idx];
            }
        }
    }

    let mut x = match x0 {
        Some(guess) => {
            assert_eq!(guess.len(), n);
            guess.to_vec()
        }
        None => vec![T::zero(); n],
    };
    let mut r = b.to_vec();
    if x0.is_some() {
        let mut ax = vec![T::zero(); n];
        a.mul_vec(&x, &mut ax);
        for i in 0..n {
            r[i] = r[i] - ax[i];
        }
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];

    for _ in 0..max_iters {
        let res = dot(&r, &r).sqrt();
        if res <= target {
            return Ok(x);
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt();
    if res <= target {
        return Ok(x);
    }
    Err(LinalgError::CgDidNotConverge {
        iters: max_iters,
        tol,
        residual: res.to_f64().unwrap_or(f64::NAN),
    })
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s = s + *x * *y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_spd_matrix() {
        // A = L0 L0^T with a simple L0.
        let l0: [f64; 9] = [2.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.5, -1.0, 1.5];
        let n = 3;
        let mut a = vec![0.0; 9];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    a[i * n + j] += l0[i * n + k] * l0[j * n + k];
                }
            }
        }
        let mut f = a.clone();
        cholesky_in_place(&mut f, n).unwrap();
        for i in 0..n {
            for j in 0..=i {
                assert!((f[i * n + j] - l0[i * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(matches!(
            cholesky_in_place(&mut a, 2),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn pcg_solves_laplacian_chain() {
        // Tridiagonal SPD system from a 1-D Poisson stencil.
        let n = 40;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 2.0));
            if i > 0 {
                trip.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
            }
        }
        let a = Csr::from_triplets(n, n, &trip);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x_true, &mut b);
        let x = pcg(&a, &b, None, 1e-12, 10 * n).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-9);
        }
        // A warm start at the exact solution returns it unchanged.
        let warm = pcg(&a, &b, Some(&x), 1e-10, 10 * n).unwrap();
        assert_eq!(warm, x);
    }

    #[test]
    fn csr_sums_duplicate_triplets() {
        let a = Csr::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 5.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.to_dense(), vec![0.0, 3.0, 5.0, 0.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let a = Csr::from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -2.0), (1, 1, 4.0)]);
        let att = a.transpose().transpose();
        assert_eq!(a, att);
    }
}
