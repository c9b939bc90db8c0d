//! Dense tensors with tape-based reverse-mode automatic differentiation.
//!
//! [`Tensor`] is a plain row-major value of rank at most 2. Differentiable
//! computations run on a [`Tape`]: leaves are registered with
//! [`Tape::leaf`] / [`Tape::constant`], every operation records its inputs
//! and backward rule, and [`Tape::backward`] walks the record in exact
//! reverse order, accumulating each leaf's gradient over all of its uses.
//!
//! Shape mismatches and out-of-range indices are programming errors and
//! panic with a descriptive message; numeric failure modes (non-finite
//! losses) are surfaced by the callers that can observe them.

mod check;
mod tape;

pub use check::grad_check;
pub use tape::{Activation, Tape, Var};

use crate::scalar::Scalar;

/// A dense row-major matrix (rank 2), vector (n x 1 or 1 x n), or scalar
/// (1 x 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Tensor { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        assert!(n > 0, "need at least one row");
        let d = rows[0].len();
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            assert_eq!(r.len(), d, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor { rows: n, cols: d, data }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    /// A 1 x d row vector (the layout used for biases and gains).
    pub fn row(data: Vec<T>) -> Self {
        Tensor { rows: 1, cols: data.len(), data }
    }

    /// An n x 1 column vector (the layout used for per-cell fields).
    pub fn column(data: Vec<T>) -> Self {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row_slice(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single entry of a 1 x 1 tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_and_accessors() {
        let t = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.shape(), (2, 3));
        assert_eq!(t.get(1, 2), 6.0);
        assert_eq!(t.row_slice(0), &[1.0, 2.0, 3.0]);
        assert_eq!(Tensor::scalar(7.0).item(), 7.0);
        assert_eq!(Tensor::<f64>::column(vec![1.0, 2.0]).shape(), (2, 1));
        assert_eq!(Tensor::<f64>::row(vec![1.0, 2.0]).shape(), (1, 2));
    }

    #[test]
    #[should_panic(expected = "data length")]
    fn bad_shape_panics() {
        let _ = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0]);
    }
}
