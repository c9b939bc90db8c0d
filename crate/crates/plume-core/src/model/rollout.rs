//! Autoregressive rollout in normalized space, shared by training (on a
//! gradient tape) and inference.

use super::layers::{decode, gconv_lstm_step, mlp_forward, process, scaled_laplacian, TapeVars};
use crate::autodiff::{Tape, Tensor, Var};
use crate::graph::{GraphSample, NormStats};
use crate::metrics::RolloutResult;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use std::rc::Rc;

/// Recurrent state handles carried across rollout steps.
pub struct RecurrentVars {
    pub c: Var,
    pub h: Var,
}

fn normalized_static<T: Scalar>(sample: &GraphSample<T>, stats: &NormStats<T>, step: usize) -> Tensor<T> {
    let (n, d) = sample.node_static.shape();
    let ch = stats.node_static_stats(step);
    let mut out = Tensor::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            out.set(r, c, ch[c].apply(sample.node_static.get(r, c)));
        }
    }
    out
}

fn normalized_edges<T: Scalar>(sample: &GraphSample<T>, stats: &NormStats<T>) -> Tensor<T> {
    let (m, d) = sample.edge_features.shape();
    let ch = stats.edge_stats();
    let mut out = Tensor::zeros(m, d);
    for r in 0..m {
        for c in 0..d {
            out.set(r, c, ch[c].apply(sample.edge_features.get(r, c)));
        }
    }
    out
}

/// Builds the gas relative-permeability node channel from a normalized
/// saturation handle, on the tape: de-normalize, clamp to the physical
/// saturation range, apply the quadratic Brooks-Corey curve, re-normalize.
fn relperm_channel_var<T: Scalar>(
    tape: &mut Tape<T>,
    sample: &GraphSample<T>,
    stats: &NormStats<T>,
    sat_norm: Var,
    source_step: usize,
    input_step: usize,
) -> Var {
    let label = stats.label_stats(source_step);
    let phys = tape.axpb(sat_norm, label.std, label.mean);
    let s_max = sample.fluid.s_gas_max;
    let clamped = tape.clamp(phys, T::zero(), s_max);
    let sq = tape.mul(clamped, clamped);
    let kr = tape.scale(sq, sample.fluid.krg_end / (s_max * s_max));
    let kr_stats = stats
        .relperm_stats(input_step)
        .expect("relperm statistics missing for a relperm-configured sample");
    tape.axpb(kr, T::one() / kr_stats.std, -kr_stats.mean / kr_stats.std)
}

struct StepContext<T> {
    from: Rc<Vec<usize>>,
    to: Rc<Vec<usize>>,
    lap: Option<Rc<crate::linalg::Csr<T>>>,
    e_latent: Var,
}

fn prepare<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &TapeVars,
    sample: &GraphSample<T>,
    stats: &NormStats<T>,
) -> StepContext<T> {
    let from = Rc::new(sample.edges.iter().map(|&(i, _)| i).collect::<Vec<_>>());
    let to = Rc::new(sample.edges.iter().map(|&(_, j)| j).collect::<Vec<_>>());
    let lap = vars
        .lstm
        .as_ref()
        .map(|_| Rc::new(scaled_laplacian::<T>(&sample.edges, sample.n_cells)));
    // Edge features are time-invariant; encode them once and reuse the latent.
    let e_phys = tape.constant(normalized_edges(sample, stats));
    let e_latent = mlp_forward(tape, &vars.encoder_edge, e_phys);
    StepContext { from, to, lap, e_latent }
}

fn forward_one<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &TapeVars,
    sample: &GraphSample<T>,
    ctx: &StepContext<T>,
    x: Var,
    state: &mut Option<RecurrentVars>,
) -> Var {
    let v0 = mlp_forward(tape, &vars.encoder_node, x);
    let v_m = process(tape, vars, v0, ctx.e_latent, &ctx.from, &ctx.to, sample.n_cells);
    let latent = match (&vars.lstm, state.as_mut()) {
        (Some(lstm), Some(rec)) => {
            let lap = ctx.lap.as_ref().expect("laplacian prepared for the recurrent variant");
            let (c, h) = gconv_lstm_step(tape, lstm, v_m, (rec.c, rec.h), lap);
            rec.c = c;
            rec.h = h;
            h
        }
        _ => v_m,
    };
    decode(tape, &vars.decoder, latent)
}

/// Rolls the model out for `n_steps` on the tape, returning the normalized
/// prediction handle of every step (step `n + 1` prediction at index `n`).
///
/// Starts from the true normalized initial state with zero recurrent
/// memories. With `teacher_force`, the dynamic input channel is reset to the
/// true normalized label after every step instead of the model's own
/// prediction.
pub fn rollout_normalized<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &TapeVars,
    sample: &GraphSample<T>,
    stats: &NormStats<T>,
    n_steps: usize,
    teacher_force: bool,
) -> Vec<Var> {
    assert!(n_steps >= 1, "rollout needs at least one step");
    let ctx = prepare(tape, vars, sample, stats);
    let relperm = sample.feature_config.includes_relperm();

    let y0 = stats.apply_label(sample.state(0), 0);
    let mut prev = tape.constant(Tensor::column(y0));
    let mut prev_step = 0usize;
    // Source of the relative-permeability channel: one step behind the
    // dynamic channel; the initial state feeds itself at step 0.
    let mut prev2 = prev;
    let mut prev2_step = 0usize;

    let mut state = vars.lstm.as_ref().map(|_| {
        let c = tape.constant(Tensor::zeros(sample.n_cells, tape_latent(vars, tape)));
        let h = tape.constant(Tensor::zeros(sample.n_cells, tape_latent(vars, tape)));
        RecurrentVars { c, h }
    });

    let mut outputs = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let static_n = tape.constant(normalized_static(sample, stats, n));
        let x = if relperm {
            let kr = relperm_channel_var(tape, sample, stats, prev2, prev2_step, n);
            tape.concat(&[static_n, prev, kr])
        } else {
            tape.concat(&[static_n, prev])
        };
        let y = forward_one(tape, vars, sample, &ctx, x, &mut state);
        outputs.push(y);

        prev2 = prev;
        prev2_step = prev_step;
        if teacher_force && n + 1 < n_steps {
            let label = stats.apply_label(sample.state(n + 1), n + 1);
            prev = tape.constant(Tensor::column(label));
        } else {
            prev = y;
        }
        prev_step = n + 1;
    }
    outputs
}

fn tape_latent<T: Scalar>(vars: &TapeVars, tape: &Tape<T>) -> usize {
    tape.value(vars.decoder.w1).rows()
}

/// One next-step prediction from a given normalized dynamic channel at
/// `step` (the noise-injected training path of the baseline variant, which
/// carries no recurrent state).
pub fn single_step_normalized<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &TapeVars,
    sample: &GraphSample<T>,
    stats: &NormStats<T>,
    dynamic_norm: Var,
    step: usize,
) -> Var {
    let ctx = prepare(tape, vars, sample, stats);
    let static_n = tape.constant(normalized_static(sample, stats, step));
    let x = if sample.feature_config.includes_relperm() {
        let source = step.saturating_sub(1);
        let label = stats.label_stats(source);
        let sat_norm = tape.constant(Tensor::column(label.apply_slice(sample.state(source))));
        let kr = relperm_channel_var(tape, sample, stats, sat_norm, source, step);
        tape.concat(&[static_n, dynamic_norm, kr])
    } else {
        tape.concat(&[static_n, dynamic_norm])
    };
    let mut state = None;
    forward_one(tape, vars, sample, &ctx, x, &mut state)
}

/// Full inference rollout: runs the model for `n_steps`, de-normalizes each
/// step, and pairs predictions with the stored ground truth.
pub fn rollout<T: Scalar>(
    params: &ModelParams<T>,
    sample: &GraphSample<T>,
    stats: &NormStats<T>,
    n_steps: usize,
) -> RolloutResult<T> {
    assert!(n_steps >= 1, "rollout needs at least one step");
    assert!(
        n_steps <= sample.n_t(),
        "sample holds {} steps of truth, requested {n_steps}",
        sample.n_t()
    );
    let mut tape = Tape::new();
    let vars = TapeVars::constants(&mut tape, params);
    let outputs = rollout_normalized(&mut tape, &vars, sample, stats, n_steps, false);
    let predicted: Vec<Vec<T>> = outputs
        .iter()
        .enumerate()
        .map(|(n, &y)| stats.invert_label(tape.value(y).data(), n + 1))
        .collect();
    let truth: Vec<Vec<T>> = (1..=n_steps).map(|n| sample.state(n).to_vec()).collect();
    RolloutResult { variable: sample.variable, predicted, truth }
}
