//! Detrending normalization: per-time-step z-scoring with statistics pooled
//! over the training samples, plus time-pooled fallback statistics for
//! extrapolated steps beyond the training horizon.

use super::{GraphError, GraphSample, N_STATIC};
use crate::scalar::Scalar;
use crate::sim::{relperm, Phase};
use serde::{Deserialize, Serialize};

/// Floor applied to every fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Mean and (floored) standard deviation of one feature channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> ChannelStats<T> {
    /// z-score.
    pub fn apply(&self, x: T) -> T {
        (x - self.mean) / self.std
    }

    /// Exact inverse of [`ChannelStats::apply`].
    pub fn invert(&self, z: T) -> T {
        z * self.std + self.mean
    }

    pub fn apply_slice(&self, xs: &[T]) -> Vec<T> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, zs: &[T]) -> Vec<T> {
        zs.iter().map(|&z| self.invert(z)).collect()
    }
}

/// Fitted normalization statistics. Per-step entries cover snapshot indices
/// `0..=n_t_train`; any later step falls back to the time-pooled statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormStats<T> {
    pub n_t_train: usize,
    node_static: Vec<Vec<ChannelStats<T>>>,
    label: Vec<ChannelStats<T>>,
    relperm: Option<Vec<ChannelStats<T>>>,
    /// Edge features are time-invariant, so one pooled entry per channel.
    edge: Vec<ChannelStats<T>>,
    node_static_pooled: Vec<ChannelStats<T>>,
    label_pooled: ChannelStats<T>,
    relperm_pooled: Option<ChannelStats<T>>,
}

impl<T: Scalar> NormStats<T> {
    pub fn node_static_stats(&self, step: usize) -> &[ChannelStats<T>] {
        if step <= self.n_t_train {
            &self.node_static[step]
        } else {
            &self.node_static_pooled
        }
    }

    pub fn label_stats(&self, step: usize) -> &ChannelStats<T> {
        if step <= self.n_t_train {
            &self.label[step]
        } else {
            &self.label_pooled
        }
    }

    pub fn relperm_stats(&self, step: usize) -> Option<&ChannelStats<T>> {
        if step <= self.n_t_train {
            self.relperm.as_ref().map(|v| &v[step])
        } else {
            self.relperm_pooled.as_ref()
        }
    }

    pub fn edge_stats(&self) -> &[ChannelStats<T>] {
        &self.edge
    }

    /// Whether `step` uses the time-pooled fallback statistics.
    pub fn uses_fallback(&self, step: usize) -> bool {
        step > self.n_t_train
    }

    /// Pooled physical standard deviation of the dynamic variable over the
    /// training window (the base for noise injection).
    pub fn label_physical_std(&self) -> T {
        self.label_pooled.std
    }

    /// z-scores a snapshot of the dynamic variable at `step`.
    pub fn apply_label(&self, values: &[T], step: usize) -> Vec<T> {
        self.label_stats(step).apply_slice(values)
    }

    /// De-normalizes a snapshot of the dynamic variable at `step`.
    pub fn invert_label(&self, values: &[T], step: usize) -> Vec<T> {
        self.label_stats(step).invert_slice(values)
    }
}

fn fit_channel<T: Scalar>(values: &[T]) -> ChannelStats<T> {
    let n = T::from_usize(values.len()).unwrap();
    let mut mean = T::zero();
    for &v in values {
        mean = mean + v;
    }
    mean = mean / n;
    let mut var = T::zero();
    for &v in values {
        var = var + (v - mean) * (v - mean);
    }
    var = var / n;
    ChannelStats { mean, std: var.sqrt().max(T::lit(STD_FLOOR)) }
}

/// The relative-permeability channel value at input step `step`: the gas
/// relative permeability of the previous state (the initial state feeds
/// itself at step 0).
pub fn relperm_channel<T: Scalar>(sample: &GraphSample<T>, step: usize) -> Vec<T> {
    let source = if step == 0 { 0 } else { step - 1 };
    sample.states[source]
        .iter()
        .map(|&s| relperm(Phase::Gas, s, &sample.fluid))
        .collect()
}

/// Fits detrending statistics over the training samples for snapshot indices
/// `0..=n_t_train`. Requires at least two samples and a shared feature
/// configuration.
pub fn detrend_fit<T: Scalar>(
    samples: &[GraphSample<T>],
    n_t_train: usize,
) -> Result<NormStats<T>, GraphError> {
    if samples.len() < 2 {
        return Err(GraphError::DegenerateStats(format!(
            "need at least 2 training samples, got {}",
            samples.len()
        )));
    }
    let config = samples[0].feature_config;
    let n_e = config.edge_width();
    for (i, s) in samples.iter().enumerate() {
        if s.feature_config != config {
            return Err(GraphError::InvalidConfig(format!("sample {i} has a different feature config")));
        }
        if s.n_t() < n_t_train {
            return Err(GraphError::DegenerateStats(format!(
                "sample {i} has {} steps, need {n_t_train}",
                s.n_t()
            )));
        }
    }

    let steps = n_t_train + 1;
    let mut node_static = Vec::with_capacity(steps);
    let mut label = Vec::with_capacity(steps);
    let mut relperm_stats: Option<Vec<ChannelStats<T>>> =
        config.includes_relperm().then(Vec::new);

    // Static channels do not vary in time, so gather them once.
    let mut static_cols: Vec<Vec<T>> = vec![Vec::new(); N_STATIC];
    for s in samples {
        for r in 0..s.n_cells {
            for (c, col) in static_cols.iter_mut().enumerate() {
                col.push(s.node_static.get(r, c));
            }
        }
    }
    let static_step: Vec<ChannelStats<T>> = static_cols.iter().map(|col| fit_channel(col)).collect();

    let mut label_all: Vec<T> = Vec::new();
    let mut relperm_all: Vec<T> = Vec::new();
    for step in 0..steps {
        node_static.push(static_step.clone());
        let mut vals = Vec::new();
        for s in samples {
            vals.extend_from_slice(&s.states[step]);
        }
        label_all.extend_from_slice(&vals);
        label.push(fit_channel(&vals));
        if let Some(rp) = relperm_stats.as_mut() {
            let mut kr = Vec::new();
            for s in samples {
                kr.extend(relperm_channel(s, step));
            }
            relperm_all.extend_from_slice(&kr);
            rp.push(fit_channel(&kr));
        }
    }

    let mut edge_cols: Vec<Vec<T>> = vec![Vec::new(); n_e];
    for s in samples {
        for e in 0..s.n_edges() {
            for (c, col) in edge_cols.iter_mut().enumerate() {
                col.push(s.edge_features.get(e, c));
            }
        }
    }
    let edge: Vec<ChannelStats<T>> = edge_cols.iter().map(|col| fit_channel(col)).collect();

    let relperm_pooled = if relperm_all.is_empty() { None } else { Some(fit_channel(&relperm_all)) };
    Ok(NormStats {
        n_t_train,
        node_static,
        label: label.clone(),
        relperm: relperm_stats,
        edge,
        node_static_pooled: static_step,
        label_pooled: fit_channel(&label_all),
        relperm_pooled,
    })
}
