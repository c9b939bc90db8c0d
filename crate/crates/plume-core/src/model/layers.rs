//! Tape-level forward passes of the model components.

use super::{ChebStack, LstmParams, MlpParams, ModelParams};
use crate::autodiff::{Tape, Var};
use crate::linalg::Csr;
use crate::scalar::Scalar;
use std::collections::BTreeSet;
use std::rc::Rc;

/// Parameter handles registered on a tape, mirroring [`ModelParams`].
pub struct TapeVars {
    pub encoder_node: MlpVars,
    pub encoder_edge: MlpVars,
    pub processor: Vec<(MlpVars, MlpVars)>,
    pub lstm: Option<LstmVars>,
    pub decoder: DecoderVars,
}

pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub gamma: Var,
    pub beta: Var,
}

pub struct DecoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub struct ChebVars {
    pub weights: Vec<Var>,
}

pub struct LstmVars {
    pub w_xi: ChebVars,
    pub w_hi: ChebVars,
    pub w_xf: ChebVars,
    pub w_hf: ChebVars,
    pub w_xc: ChebVars,
    pub w_hc: ChebVars,
    pub w_xo: ChebVars,
    pub w_ho: ChebVars,
    pub b_i: Var,
    pub b_f: Var,
    pub b_c: Var,
    pub b_o: Var,
    pub w_co: Var,
}

impl TapeVars {
    /// Registers every parameter as a differentiable leaf.
    pub fn leaves<T: Scalar>(tape: &mut Tape<T>, params: &ModelParams<T>) -> Self {
        Self::register(tape, params, true)
    }

    /// Registers every parameter as a constant (inference).
    pub fn constants<T: Scalar>(tape: &mut Tape<T>, params: &ModelParams<T>) -> Self {
        Self::register(tape, params, false)
    }

    fn register<T: Scalar>(tape: &mut Tape<T>, params: &ModelParams<T>, grad: bool) -> Self {
        let mut reg = |t: &crate::autodiff::Tensor<T>| {
            if grad {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let mut mlp = |m: &MlpParams<T>, reg: &mut dyn FnMut(&crate::autodiff::Tensor<T>) -> Var| MlpVars {
            w1: reg(&m.w1),
            b1: reg(&m.b1),
            w2: reg(&m.w2),
            b2: reg(&m.b2),
            gamma: reg(&m.gamma),
            beta: reg(&m.beta),
        };
        let encoder_node = mlp(&params.encoder_node, &mut reg);
        let encoder_edge = mlp(&params.encoder_edge, &mut reg);
        let processor = params
            .processor
            .iter()
            .map(|(e, n)| (mlp(e, &mut reg), mlp(n, &mut reg)))
            .collect();
        let mut cheb = |s: &ChebStack<T>, reg: &mut dyn FnMut(&crate::autodiff::Tensor<T>) -> Var| ChebVars {
            weights: s.weights.iter().map(|w| reg(w)).collect(),
        };
        let lstm = params.lstm.as_ref().map(|l: &LstmParams<T>| LstmVars {
            w_xi: cheb(&l.w_xi, &mut reg),
            w_hi: cheb(&l.w_hi, &mut reg),
            w_xf: cheb(&l.w_xf, &mut reg),
            w_hf: cheb(&l.w_hf, &mut reg),
            w_xc: cheb(&l.w_xc, &mut reg),
            w_hc: cheb(&l.w_hc, &mut reg),
            w_xo: cheb(&l.w_xo, &mut reg),
            w_ho: cheb(&l.w_ho, &mut reg),
            b_i: reg(&l.b_i),
            b_f: reg(&l.b_f),
            b_c: reg(&l.b_c),
            b_o: reg(&l.b_o),
            w_co: reg(&l.w_co),
        });
        let decoder = DecoderVars {
            w1: reg(&params.decoder.w1),
            b1: reg(&params.decoder.b1),
            w2: reg(&params.decoder.w2),
            b2: reg(&params.decoder.b2),
        };
        TapeVars { encoder_node, encoder_edge, processor, lstm, decoder }
    }

    /// Tape handles in the same order as `ModelParams::for_each_param`.
    pub fn flat(&self) -> Vec<Var> {
        let mut out = Vec::new();
        let mlp = |m: &MlpVars, out: &mut Vec<Var>| {
            out.extend([m.w1, m.b1, m.w2, m.b2, m.gamma, m.beta]);
        };
        mlp(&self.encoder_node, &mut out);
        mlp(&self.encoder_edge, &mut out);
        for (e, n) in &self.processor {
            mlp(e, &mut out);
            mlp(n, &mut out);
        }
        if let Some(l) = &self.lstm {
            for stack in [&l.w_xi, &l.w_hi, &l.w_xf, &l.w_hf, &l.w_xc, &l.w_hc, &l.w_xo, &l.w_ho] {
                out.extend(stack.weights.iter().copied());
            }
            out.extend([l.b_i, l.b_f, l.b_c, l.b_o, l.w_co]);
        }
        out.extend([self.decoder.w1, self.decoder.b1, self.decoder.w2, self.decoder.b2]);
        out
    }
}

/// `Linear -> ReLU -> Linear -> LayerNorm`.
pub(crate) fn mlp_forward<T: Scalar>(tape: &mut Tape<T>, m: &MlpVars, x: Var) -> Var {
    let h = tape.affine(x, m.w1, m.b1);
    let h = tape.relu(h);
    let h = tape.affine(h, m.w2, m.b2);
    tape.layer_norm(h, m.gamma, m.beta)
}

/// Encodes physical node and edge features into latent vectors.
pub fn encode<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &TapeVars,
    node_feats: Var,
    edge_feats: Var,
) -> (Var, Var) {
    (
        mlp_forward(tape, &vars.encoder_node, node_feats),
        mlp_forward(tape, &vars.encoder_edge, edge_feats),
    )
}

/// Runs the message-passing processor and returns the final node latents.
///
/// Per layer: `e' = mlp_e([e, v_from, v_to]) + e`, then
/// `v' = mlp_v([v, sum of e' over edges leaving each node]) + v` — residual
/// connections on both streams.
pub fn process<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &TapeVars,
    v0: Var,
    e0: Var,
    from: &Rc<Vec<usize>>,
    to: &Rc<Vec<usize>>,
    n_nodes: usize,
) -> Var {
    let mut v = v0;
    let mut e = e0;
    for (edge_mlp, node_mlp) in &vars.processor {
        let v_from = tape.gather(v, from.clone());
        let v_to = tape.gather(v, to.clone());
        let e_in = tape.concat(&[e, v_from, v_to]);
        let e_upd = mlp_forward(tape, edge_mlp, e_in);
        e = tape.add(e_upd, e);

        let agg = tape.scatter_sum(e, from.clone(), n_nodes);
        let v_in = tape.concat(&[v, agg]);
        let v_upd = mlp_forward(tape, node_mlp, v_in);
        v = tape.add(v_upd, v);
    }
    v
}

/// Rescaled symmetrically-normalized graph Laplacian used by the Chebyshev
/// filters: with `lambda_max` fixed at 2, `L~ = -D^{-1/2} A D^{-1/2}`.
/// Isolated nodes get an all-zero row.
pub fn scaled_laplacian<T: Scalar>(edges: &[(usize, usize)], n_nodes: usize) -> Csr<T> {
    let undirected: BTreeSet<(usize, usize)> = edges
        .iter()
        .flat_map(|&(i, j)| [(i, j), (j, i)])
        .filter(|&(i, j)| i != j)
        .collect();
    let mut degree = vec![0usize; n_nodes];
    for &(i, _) in &undirected {
        degree[i] += 1;
    }
    let triplets: Vec<(usize, usize, T)> = undirected
        .iter()
        .map(|&(i, j)| {
            let d = T::from_usize(degree[i] * degree[j]).unwrap().sqrt();
            (i, j, -T::one() / d)
        })
        .collect();
    Csr::from_triplets(n_nodes, n_nodes, &triplets)
}

/// Chebyshev spectral filter `sum_k T_k(L~) X W_k` via the three-term
/// recurrence, applying `L~` as sparse products only.
pub fn cheb_conv<T: Scalar>(tape: &mut Tape<T>, x: Var, stack: &ChebVars, lap: &Rc<Csr<T>>) -> Var {
    let k = stack.weights.len();
    assert!(k >= 1, "Chebyshev order must be >= 1");
    let mut acc = tape.matmul(x, stack.weights[0]);
    if k == 1 {
        return acc;
    }
    let mut t_prev = x; // T_0 X
    let mut t_cur = tape.spmm(lap.clone(), x); // T_1 X
    let term = tape.matmul(t_cur, stack.weights[1]);
    acc = tape.add(acc, term);
    for w in &stack.weights[2..] {
        // T_k = 2 L~ T_{k-1} - T_{k-2}
        let lt = tape.spmm(lap.clone(), t_cur);
        let lt2 = tape.scale(lt, T::lit(2.0));
        let t_next = tape.sub(lt2, t_prev);
        let term = tape.matmul(t_next, *w);
        acc = tape.add(acc, term);
        t_prev = t_cur;
        t_cur = t_next;
    }
    acc
}

/// One step of the graph-convolutional LSTM cell. Returns `(C', H')`.
pub fn gconv_lstm_step<T: Scalar>(
    tape: &mut Tape<T>,
    lstm: &LstmVars,
    v: Var,
    state: (Var, Var),
    lap: &Rc<Csr<T>>,
) -> (Var, Var) {
    let (c_prev, h_prev) = state;
    let gate_pre = |tape: &mut Tape<T>, wx: &ChebVars, wh: &ChebVars, b: Var| {
        let gx = cheb_conv(tape, v, wx, lap);
        let gh = cheb_conv(tape, h_prev, wh, lap);
        let s = tape.add(gx, gh);
        tape.add_bias(s, b)
    };
    let i_pre = gate_pre(tape, &lstm.w_xi, &lstm.w_hi, lstm.b_i);
    let i = tape.sigmoid(i_pre);
    let f_pre = gate_pre(tape, &lstm.w_xf, &lstm.w_hf, lstm.b_f);
    let f = tape.sigmoid(f_pre);
    let g_pre = gate_pre(tape, &lstm.w_xc, &lstm.w_hc, lstm.b_c);
    let g = tape.tanh(g_pre);
    let keep = tape.mul(f, c_prev);
    let write = tape.mul(i, g);
    let c_new = tape.add(keep, write);
    // Peephole: elementwise weight on the fresh cell state.
    let peep = tape.row_mul(c_new, lstm.w_co);
    let o_pre0 = gate_pre(tape, &lstm.w_xo, &lstm.w_ho, lstm.b_o);
    let o_pre = tape.add(o_pre0, peep);
    let o = tape.sigmoid(o_pre);
    let c_t = tape.tanh(c_new);
    let h_new = tape.mul(o, c_t);
    (c_new, h_new)
}

/// Maps node latents to the scalar output channel (normalized label space).
pub fn decode<T: Scalar>(tape: &mut Tape<T>, dec: &DecoderVars, h: Var) -> Var {
    let y = tape.affine(h, dec.w1, dec.b1);
    let y = tape.relu(y);
    tape.affine(y, dec.w2, dec.b2)
}
