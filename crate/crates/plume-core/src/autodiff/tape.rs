//! The operation tape and its backward rules.

use super::Tensor;
use crate::linalg::Csr;
use crate::scalar::Scalar;
use std::rc::Rc;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

enum Op<T> {
    Leaf { requires_grad: bool },
    Matmul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    RowMul(Var, Var),
    Scale(Var, T),
    /// Elementwise `x * mul + add` with scalar constants.
    Axpb { x: Var, mul: T, add: T },
    Act(Activation, Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor<T>, inv_std: Vec<T> },
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather { x: Var, rows: Rc<Vec<usize>> },
    ScatterSum { x: Var, targets: Rc<Vec<usize>> },
    Spmm { s: Rc<Csr<T>>, x: Var },
    Clamp { x: Var, lo: T, hi: T },
    Sum(Var),
    Sqrt(Var),
    Rmse { pred: Var, target: Rc<Tensor<T>> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Ordered record of primitive operations; backward traverses it in exact
/// reverse, summing each node's gradient over all of its uses. One tape is
/// single-threaded; independent tapes may run in parallel.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Registers a differentiable leaf (a parameter or trainable input).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf { requires_grad: true })
    }

    /// Registers a non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf { requires_grad: false })
    }

    /// `x @ w` for `x: [n, k]`, `w: [k, m]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let (n, k) = self.value(x).shape();
        let (k2, m) = self.value(w).shape();
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(n, m);
        T::gemm(n, k, m, T::one(), self.value(x).data(), self.value(w).data(), T::zero(), out.data_mut());
        self.push(out, Op::Matmul(x, w))
    }

    /// Adds a `1 x d` bias row to every row of `x: [n, d]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (n, d) = self.value(x).shape();
        assert_eq!(self.value(b).shape(), (1, d), "bias must be 1 x {d}");
        let mut out = self.value(x).clone();
        for r in 0..n {
            let row = &mut out.data_mut()[r * d..(r + 1) * d];
            for (o, bv) in row.iter_mut().zip(self.nodes[b.0].value.data()) {
                *o = *o + *bv;
            }
        }
        self.push(out, Op::AddBias(x, b))
    }

    /// `x @ w + b`: the affine map with row-broadcast bias.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o = *o + *v;
        }
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub shape mismatch");
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o = *o - *v;
        }
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shape mismatch");
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o = *o * *v;
        }
        self.push(out, Op::Mul(a, b))
    }

    /// Multiplies every row of `x: [n, d]` elementwise by a `1 x d` vector.
    pub fn row_mul(&mut self, x: Var, v: Var) -> Var {
        let (n, d) = self.value(x).shape();
        assert_eq!(self.value(v).shape(), (1, d), "row vector must be 1 x {d}");
        let mut out = self.value(x).clone();
        for r in 0..n {
            let row = &mut out.data_mut()[r * d..(r + 1) * d];
            for (o, vv) in row.iter_mut().zip(self.nodes[v.0].value.data()) {
                *o = *o * *vv;
            }
        }
        self.push(out, Op::RowMul(x, v))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    /// Elementwise `x * mul + add` with scalar constants (normalization).
    pub fn axpb(&mut self, x: Var, mul: T, add: T) -> Var {
        let out = self.value(x).map(|v| v * mul + add);
        self.push(out, Op::Axpb { x, mul, add })
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let out = match kind {
            Activation::Relu => self.value(x).map(|v| v.max(T::zero())),
            Activation::Sigmoid => self.value(x).map(|v| T::one() / (T::one() + (-v).exp())),
            Activation::Tanh => self.value(x).map(|v| v.tanh()),
        };
        self.push(out, Op::Act(kind, x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(Activation::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    /// Row-wise layer normalization with affine gain `gamma` and shift `beta`
    /// (`1 x d` each), using biased variance and `eps = 1e-5` regularization.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        self.layer_norm_eps(x, gamma, beta, T::lit(1e-5))
    }

    pub fn layer_norm_eps(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let (n, d) = self.value(x).shape();
        assert!(d >= 1);
        assert_eq!(self.value(gamma).shape(), (1, d), "gamma must be 1 x {d}");
        assert_eq!(self.value(beta).shape(), (1, d), "beta must be 1 x {d}");
        let dim = T::from_usize(d).unwrap();
        let mut xhat = Tensor::zeros(n, d);
        let mut inv_std = vec![T::zero(); n];
        let mut out = Tensor::zeros(n, d);
        for r in 0..n {
            let row = self.value(x).row_slice(r);
            let mut mean = T::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean / dim;
            let mut var = T::zero();
            for &v in row {
                var = var + (v - mean) * (v - mean);
            }
            var = var / dim;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[r] = istd;
            for c in 0..d {
                let h = (row[c] - mean) * istd;
                xhat.set(r, c, h);
                let g = self.nodes[gamma.0].value.data()[c];
                let b = self.nodes[beta.0].value.data()[c];
                out.set(r, c, h * g + b);
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Concatenates along the feature (column) dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(n, total);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), n, "concat row mismatch");
            let c = t.cols();
            for r in 0..n {
                let src = &self.value(p).data()[r * c..(r + 1) * c];
                out.data_mut()[r * total + offset..r * total + offset + c].copy_from_slice(src);
            }
            offset += c;
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Stacks blocks of rows (same column count).
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let d = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(total * d);
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), d, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
        }
        self.push(Tensor::from_vec(total, d, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Selects rows of `x` by index (duplicates allowed). Backward scatters
    /// gradient rows back with summation.
    pub fn gather(&mut self, x: Var, rows: Rc<Vec<usize>>) -> Var {
        let (n, d) = self.value(x).shape();
        let mut out = Tensor::zeros(rows.len(), d);
        for (k, &r) in rows.iter().enumerate() {
            assert!(r < n, "gather row {r} out of range {n}");
            let src = &self.value(x).data()[r * d..(r + 1) * d];
            out.data_mut()[k * d..(k + 1) * d].copy_from_slice(src);
        }
        self.push(out, Op::Gather { x, rows })
    }

    /// Sums message rows into their target rows: row `i` of the result is the
    /// sum of `messages[e]` over all `e` with `targets[e] == i`; rows with no
    /// incoming message stay zero.
    pub fn scatter_sum(&mut self, messages: Var, targets: Rc<Vec<usize>>, n_rows: usize) -> Var {
        let (m, d) = self.value(messages).shape();
        assert_eq!(targets.len(), m, "one target per message row");
        let mut out = Tensor::zeros(n_rows, d);
        for (e, &t) in targets.iter().enumerate() {
            assert!(t < n_rows, "scatter target {t} out of range {n_rows}");
            let src = &self.value(messages).data()[e * d..(e + 1) * d];
            let dst = &mut out.data_mut()[t * d..(t + 1) * d];
            for (o, v) in dst.iter_mut().zip(src) {
                *o = *o + *v;
            }
        }
        self.push(out, Op::ScatterSum { x: messages, targets })
    }

    /// Sparse-dense product `S @ x`. Backward: `dx = S^T @ dy`.
    pub fn spmm(&mut self, s: Rc<Csr<T>>, x: Var) -> Var {
        let (n, d) = self.value(x).shape();
        assert_eq!(s.n_cols, n, "spmm dimension mismatch");
        let mut out = Tensor::zeros(s.n_rows, d);
        s.mul_dense(self.value(x).data(), d, out.data_mut());
        self.push(out, Op::Spmm { s, x })
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        self.push(out, Op::Clamp { x, lo, hi })
    }

    /// Sum of all entries as a 1 x 1 scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let mut s = T::zero();
        for &v in self.value(x).data() {
            s = s + v;
        }
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Elementwise square root; the gradient at an exact zero is taken as 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.sqrt());
        self.push(out, Op::Sqrt(x))
    }

    /// Root-mean-square error `sqrt(sum((pred - target)^2) / n)` against a
    /// constant target of identical shape. The gradient at an exact zero
    /// error is 0 by convention.
    pub fn rmse(&mut self, pred: Var, target: Rc<Tensor<T>>) -> Var {
        assert_eq!(self.value(pred).shape(), target.shape(), "rmse shape mismatch");
        let n = T::from_usize(target.len()).unwrap();
        let mut sse = T::zero();
        for (&p, &t) in self.value(pred).data().iter().zip(target.data()) {
            sse = sse + (p - t) * (p - t);
        }
        self.push(Tensor::scalar((sse / n).sqrt()), Op::Rmse { pred, target })
    }

    /// Backpropagates from a scalar root with seed 1.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        self.backward_seeded(&[(root, T::one())])
    }

    /// Backpropagates from several roots at once, each scaled by its seed.
    /// Every root must be a 1 x 1 scalar.
    pub fn backward_seeded(&self, seeds: &[(Var, T)]) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for &(root, seed) in seeds {
            assert_eq!(self.value(root).shape(), (1, 1), "backward roots must be scalars");
            match &mut grads[root.0] {
                Some(g) => g.data_mut()[0] = g.data_mut()[0] + seed,
                slot => *slot = Some(Tensor::scalar(seed)),
            }
        }

        for id in (0..self.nodes.len()).rev() {
            let Some(gout) = grads[id].take() else { continue };
            self.propagate(id, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, update: impl FnOnce(&mut Tensor<T>)) {
        // Constant leaves are gradient sinks; interior nodes always receive
        // gradient so the chain can continue past them.
        if let Op::Leaf { requires_grad: false } = self.nodes[v.0].op {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            let (r, c) = self.nodes[v.0].value.shape();
            *slot = Some(Tensor::zeros(r, c));
        }
        update(slot.as_mut().unwrap());
    }

    fn propagate(&self, id: usize, gout: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &self.nodes[id].op {
            Op::Leaf { .. } => {}
            Op::Matmul(x, w) => {
                let (n, k) = self.value(*x).shape();
                let m = self.value(*w).cols();
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                self.accumulate(grads, *x, |gx| {
                    gemm_nt(n, m, k, gout.data(), wv, gx.data_mut());
                });
                self.accumulate(grads, *w, |gw| {
                    gemm_tn(k, n, m, xv, gout.data(), gw.data_mut());
                });
            }
            Op::AddBias(x, b) => {
                let (n, d) = self.value(*x).shape();
                self.accumulate(grads, *x, |gx| add_into(gx.data_mut(), gout.data()));
                self.accumulate(grads, *b, |gb| {
                    for r in 0..n {
                        for c in 0..d {
                            gb.data_mut()[c] = gb.data_mut()[c] + gout.get(r, c);
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |g| add_into(g.data_mut(), gout.data()));
                self.accumulate(grads, *b, |g| add_into(g.data_mut(), gout.data()));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |g| add_into(g.data_mut(), gout.data()));
                self.accumulate(grads, *b, |g| {
                    for (o, v) in g.data_mut().iter_mut().zip(gout.data()) {
                        *o = *o - *v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.accumulate(grads, *a, |g| {
                    for i in 0..bv.len() {
                        g.data_mut()[i] = g.data_mut()[i] + gout.data()[i] * bv[i];
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for i in 0..av.len() {
                        g.data_mut()[i] = g.data_mut()[i] + gout.data()[i] * av[i];
                    }
                });
            }
            Op::RowMul(x, v) => {
                let (n, d) = self.value(*x).shape();
                let xv = self.value(*x).data();
                let vv = self.value(*v).data();
                self.accumulate(grads, *x, |g| {
                    for r in 0..n {
                        for c in 0..d {
                            let i = r * d + c;
                            g.data_mut()[i] = g.data_mut()[i] + gout.data()[i] * vv[c];
                        }
                    }
                });
                self.accumulate(grads, *v, |g| {
                    for r in 0..n {
                        for c in 0..d {
                            let i = r * d + c;
                            g.data_mut()[c] = g.data_mut()[c] + gout.data()[i] * xv[i];
                        }
                    }
                });
            }
            Op::Scale(x, c) => {
                let c = *c;
                self.accumulate(grads, *x, |g| {
                    for (o, v) in g.data_mut().iter_mut().zip(gout.data()) {
                        *o = *o + *v * c;
                    }
                });
            }
            Op::Axpb { x, mul, .. } => {
                let m = *mul;
                self.accumulate(grads, *x, |g| {
                    for (o, v) in g.data_mut().iter_mut().zip(gout.data()) {
                        *o = *o + *v * m;
                    }
                });
            }
            Op::Act(kind, x) => {
                let out = &self.nodes[id].value;
                let kind = *kind;
                self.accumulate(grads, *x, |g| {
                    for i in 0..out.len() {
                        let local = match kind {
                            Activation::Relu => {
                                if out.data()[i] > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Activation::Sigmoid => {
                                let s = out.data()[i];
                                s * (T::one() - s)
                            }
                            Activation::Tanh => {
                                let t = out.data()[i];
                                T::one() - t * t
                            }
                        };
                        g.data_mut()[i] = g.data_mut()[i] + gout.data()[i] * local;
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let (n, d) = xhat.shape();
                let dim = T::from_usize(d).unwrap();
                let gv = self.value(*gamma).data();
                self.accumulate(grads, *beta, |g| {
                    for r in 0..n {
                        for c in 0..d {
                            g.data_mut()[c] = g.data_mut()[c] + gout.get(r, c);
                        }
                    }
                });
                self.accumulate(grads, *gamma, |g| {
                    for r in 0..n {
                        for c in 0..d {
                            g.data_mut()[c] = g.data_mut()[c] + gout.get(r, c) * xhat.get(r, c);
                        }
                    }
                });
                self.accumulate(grads, *x, |g| {
                    for r in 0..n {
                        // dxhat = gout * gamma; standard layer-norm backward per row.
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for c in 0..d {
                            let dh = gout.get(r, c) * gv[c];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * xhat.get(r, c);
                        }
                        mean_dh = mean_dh / dim;
                        mean_dh_h = mean_dh_h / dim;
                        for c in 0..d {
                            let dh = gout.get(r, c) * gv[c];
                            let dx = inv_std[r] * (dh - mean_dh - xhat.get(r, c) * mean_dh_h);
                            let i = r * d + c;
                            g.data_mut()[i] = g.data_mut()[i] + dx;
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let n = self.nodes[id].value.rows();
                let total = self.nodes[id].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    self.accumulate(grads, p, |g| {
                        for r in 0..n {
                            for j in 0..c {
                                let i = r * c + j;
                                g.data_mut()[i] = g.data_mut()[i] + gout.data()[r * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let d = self.nodes[id].value.cols();
                let mut row0 = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    self.accumulate(grads, p, |g| {
                        let src = &gout.data()[row0 * d..(row0 + r) * d];
                        add_into(g.data_mut(), src);
                    });
                    row0 += r;
                }
            }
            Op::Gather { x, rows } => {
                let d = self.nodes[id].value.cols();
                self.accumulate(grads, *x, |g| {
                    for (k, &r) in rows.iter().enumerate() {
                        for c in 0..d {
                            g.data_mut()[r * d + c] = g.data_mut()[r * d + c] + gout.data()[k * d + c];
                        }
                    }
                });
            }
            Op::ScatterSum { x, targets } => {
                let d = self.nodes[id].value.cols();
                self.accumulate(grads, *x, |g| {
                    for (e, &t) in targets.iter().enumerate() {
                        for c in 0..d {
                            g.data_mut()[e * d + c] = g.data_mut()[e * d + c] + gout.data()[t * d + c];
                        }
                    }
                });
            }
            Op::Spmm { s, x } => {
                let d = self.nodes[id].value.cols();
                let st = s.transpose();
                self.accumulate(grads, *x, |g| {
                    let mut gx = vec![T::zero(); g.len()];
                    st.mul_dense(gout.data(), d, &mut gx);
                    add_into(g.data_mut(), &gx);
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x).data();
                let (lo, hi) = (*lo, *hi);
                self.accumulate(grads, *x, |g| {
                    for i in 0..xv.len() {
                        if xv[i] > lo && xv[i] < hi {
                            g.data_mut()[i] = g.data_mut()[i] + gout.data()[i];
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let go = gout.item();
                self.accumulate(grads, *x, |g| {
                    for o in g.data_mut() {
                        *o = *o + go;
                    }
                });
            }
            Op::Sqrt(x) => {
                let out = &self.nodes[id].value;
                let half = T::lit(0.5);
                self.accumulate(grads, *x, |g| {
                    for i in 0..out.len() {
                        let o = out.data()[i];
                        if o > T::zero() {
                            g.data_mut()[i] = g.data_mut()[i] + gout.data()[i] * half / o;
                        }
                    }
                });
            }
            Op::Rmse { pred, target } => {
                let go = gout.item();
                let r = self.nodes[id].value.item();
                if r > T::zero() {
                    let n = T::from_usize(target.len()).unwrap();
                    let pv = self.value(*pred).data();
                    let tv = target.data();
                    self.accumulate(grads, *pred, |g| {
                        for i in 0..tv.len() {
                            g.data_mut()[i] = g.data_mut()[i] + go * (pv[i] - tv[i]) / (n * r);
                        }
                    });
                }
            }
        }
    }
}

/// Gradient buffers produced by a backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root(s) with respect to `v`; `None` when no gradient
    /// reached it (unused, or registered without `requires_grad`).
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (o, v) in dst.iter_mut().zip(src) {
        *o = *o + *v;
    }
}

/// `c += a @ b^T` where `a: [m, k_dim]`, `b` stored as `[n, k_dim]`.
fn gemm_nt<T: Scalar>(m: usize, k_dim: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    // b viewed as its transpose [k_dim, n]: element (r, col) = b[col * k_dim + r].
    let mut bt = vec![T::zero(); k_dim * n];
    for r in 0..k_dim {
        for col in 0..n {
            bt[r * n + col] = b[col * k_dim + r];
        }
    }
    T::gemm(m, k_dim, n, T::one(), a, &bt, T::one(), c);
}

/// `c += a^T @ b` where `a` stored as `[k_dim, m]`, `b: [k_dim, n]`.
fn gemm_tn<T: Scalar>(m: usize, k_dim: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    let mut at = vec![T::zero(); m * k_dim];
    for r in 0..m {
        for col in 0..k_dim {
            at[r * k_dim + col] = a[col * m + r];
        }
    }
    T::gemm(m, k_dim, n, T::one(), &at, b, T::one(), c);
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn affine_identity_and_hand_case() {
        let mut tape = Tape::new();
        let x = tape.leaf(T64::from_vec(1, 2, vec![1.0, 2.0]));
        let w_id = tape.leaf(T64::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let b0 = tape.leaf(T64::row(vec![0.0, 0.0]));
        let y = tape.affine(x, w_id, b0);
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let w1 = tape.leaf(T64::from_vec(2, 1, vec![1.0, 1.0]));
        let b1 = tape.leaf(T64::row(vec![1.0]));
        let z = tape.affine(x, w1, b1);
        assert_eq!(tape.value(z).data(), &[4.0]);
    }

    #[test]
    fn activation_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(T64::row(vec![0.0, -3.0, 3.0]));
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).data()[0], 0.5);
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn layer_norm_hand_case() {
        let mut tape = Tape::new();
        let x = tape.leaf(T64::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let g = tape.leaf(T64::row(vec![1.0, 1.0, 1.0]));
        let b = tape.leaf(T64::row(vec![0.0, 0.0, 0.0]));
        let y = tape.layer_norm_eps(x, g, b, 1e-12);
        let v = tape.value(y).data();
        assert!((v[0] + 1.22474).abs() < 1e-4);
        assert!(v[1].abs() < 1e-9);
        assert!((v[2] - 1.22474).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(T64::from_vec(1, 4, vec![2.5; 4]));
        let g = tape.leaf(T64::row(vec![1.0; 4]));
        let b = tape.leaf(T64::row(vec![0.0; 4]));
        let y = tape.layer_norm(x, g, b);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scatter_sum_hand_case() {
        let mut tape = Tape::new();
        let msgs = tape.leaf(T64::from_vec(2, 1, vec![1.0, 2.0]));
        let out = tape.scatter_sum(msgs, Rc::new(vec![1, 1]), 3);
        assert_eq!(tape.value(out).data(), &[0.0, 3.0, 0.0]);
    }

    #[test]
    fn scatter_sum_empty_is_zero() {
        let mut tape = Tape::new();
        let msgs = tape.leaf(T64::zeros(0, 2));
        let out = tape.scatter_sum(msgs, Rc::new(vec![]), 3);
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scatter_sum_order_invariant() {
        let mut tape = Tape::new();
        let a = tape.leaf(T64::from_vec(3, 1, vec![1.0, 2.0, 4.0]));
        let out1 = tape.scatter_sum(a, Rc::new(vec![0, 1, 0]), 2);
        let b = tape.leaf(T64::from_vec(3, 1, vec![4.0, 1.0, 2.0]));
        let out2 = tape.scatter_sum(b, Rc::new(vec![0, 0, 1]), 2);
        assert_eq!(tape.value(out1).data(), tape.value(out2).data());
    }

    #[test]
    fn spmm_matches_dense() {
        let mut tape = Tape::new();
        let s = Rc::new(Csr::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]));
        let x = tape.leaf(T64::from_vec(2, 1, vec![1.0, 0.0]));
        let y = tape.spmm(s.clone(), x);
        assert_eq!(tape.value(y).data(), &[0.0, 1.0]);

        let id = Rc::new(Csr::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]));
        let z = tape.spmm(id, x);
        assert_eq!(tape.value(z).data(), tape.value(x).data());
    }

    #[test]
    fn rmse_values() {
        let mut tape = Tape::new();
        let p = tape.leaf(T64::column(vec![3.0, 4.0]));
        let y = tape.rmse(p, Rc::new(T64::column(vec![0.0, 0.0])));
        assert!((tape.value(y).item() - 12.5f64.sqrt()).abs() < 1e-12);

        let q = tape.leaf(T64::column(vec![1.0, 2.0]));
        let z = tape.rmse(q, Rc::new(T64::column(vec![1.0, 2.0])));
        assert_eq!(tape.value(z).item(), 0.0);
        // Gradient at exact equality is zero by convention.
        let grads = tape.backward(z);
        assert!(grads.get(q).is_none() || grads.get(q).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_accumulates_over_reuse() {
        // f = sum(x * x) + sum(x): df/dx = 2x + 1.
        let mut tape = Tape::new();
        let x = tape.leaf(T64::row(vec![1.5, -2.0]));
        let xx = tape.mul(x, x);
        let s1 = tape.sum(xx);
        let s2 = tape.sum(x);
        let f = tape.add(s1, s2);
        let grads = tape.backward(f);
        let g = grads.get(x).unwrap();
        assert!((g.data()[0] - 4.0).abs() < 1e-12);
        assert!((g.data()[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(T64::row(vec![2.0]));
        let c = tape.constant(T64::row(vec![3.0]));
        let y = tape.mul(x, c);
        let s = tape.sum(y);
        let grads = tape.backward(s);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data()[0], 3.0);
    }

    #[test]
    fn gather_backward_scatters() {
        let mut tape = Tape::new();
        let x = tape.leaf(T64::from_vec(2, 1, vec![5.0, 7.0]));
        let g = tape.gather(x, Rc::new(vec![0, 0, 1]));
        let s = tape.sum(g);
        let grads = tape.backward(s);
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 1.0]);
    }

    #[test]
    #[should_panic(expected = "matmul inner dims")]
    fn matmul_shape_mismatch_panics() {
        let mut tape = Tape::new();
        let a = tape.leaf(T64::zeros(2, 3));
        let b = tape.leaf(T64::zeros(2, 3));
        let _ = tape.matmul(a, b);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn scatter_out_of_range_panics() {
        let mut tape = Tape::new();
        let m = tape.leaf(T64::zeros(1, 1));
        let _ = tape.scatter_sum(m, Rc::new(vec![5]), 2);
    }
}
