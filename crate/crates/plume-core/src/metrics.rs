//! Rollout error metrics and ensemble summaries.

use crate::graph::DynVar;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("ensemble summary of an empty list")]
    EmptyEnsemble,
    #[error("metric applies to {expected} results, got {found}")]
    WrongVariable { expected: &'static str, found: &'static str },
}

/// Prediction and ground truth of one autoregressive rollout, in physical
/// units. Entry `n` of each field corresponds to time step `n + 1` (the
/// initial state is not stored: it is shared by construction).
#[derive(Debug, Clone)]
pub struct RolloutResult<T> {
    pub variable: DynVar,
    pub predicted: Vec<Vec<T>>,
    pub truth: Vec<Vec<T>>,
}

impl<T: Scalar> RolloutResult<T> {
    pub fn n_t(&self) -> usize {
        self.predicted.len()
    }

    /// Restricts the result to the first `n_t` steps.
    pub fn truncated(&self, n_t: usize) -> Self {
        assert!(n_t >= 1 && n_t <= self.n_t(), "truncation horizon out of range");
        RolloutResult {
            variable: self.variable,
            predicted: self.predicted[..n_t].to_vec(),
            truth: self.truth[..n_t].to_vec(),
        }
    }
}

/// Saturation threshold of the plume indicator.
const PLUME_THRESHOLD: f64 = 0.01;

/// Mean absolute saturation error restricted to plume cells: cells where the
/// truth or the prediction exceeds 0.01 in magnitude. Returns 0 when the
/// indicator never fires (empty plume on both sides).
pub fn plume_saturation_error<T: Scalar>(result: &RolloutResult<T>) -> Result<T, MetricsError> {
    if result.variable != DynVar::Saturation {
        return Err(MetricsError::WrongVariable {
            expected: "saturation",
            found: result.variable.as_str(),
        });
    }
    let thr = T::lit(PLUME_THRESHOLD);
    let mut count = 0usize;
    let mut total = T::zero();
    for (pred, truth) in result.predicted.iter().zip(&result.truth) {
        assert_eq!(pred.len(), truth.len(), "prediction/truth length mismatch");
        for (&p, &t) in pred.iter().zip(truth) {
            if t > thr || p.abs() > thr {
                count += 1;
                total = total + (t - p).abs();
            }
        }
    }
    if count == 0 {
        return Ok(T::zero());
    }
    Ok(total / T::from_usize(count).unwrap())
}

/// Mean absolute pressure error relative to the initial reservoir pressure,
/// averaged over all cells and steps.
pub fn pressure_relative_error<T: Scalar>(
    result: &RolloutResult<T>,
    p_init: T,
) -> Result<T, MetricsError> {
    if result.variable != DynVar::Pressure {
        return Err(MetricsError::WrongVariable {
            expected: "pressure",
            found: result.variable.as_str(),
        });
    }
    assert!(p_init > T::zero(), "initial pressure must be positive");
    let mut total = T::zero();
    let mut count = 0usize;
    for (pred, truth) in result.predicted.iter().zip(&result.truth) {
        assert_eq!(pred.len(), truth.len(), "prediction/truth length mismatch");
        for (&p, &t) in pred.iter().zip(truth) {
            total = total + (t - p).abs() / p_init;
            count += 1;
        }
    }
    Ok(total / T::from_usize(count).unwrap())
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary<T> {
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
}

pub fn ensemble_summary<T: Scalar>(values: &[T]) -> Result<EnsembleSummary<T>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyEnsemble);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let quantile = |p: f64| -> T {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = T::lit(pos - lo as f64);
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    };
    Ok(EnsembleSummary {
        min: sorted[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        max: sorted[sorted.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sat_result(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> RolloutResult<f64> {
        RolloutResult { variable: DynVar::Saturation, predicted: pred, truth }
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let r = sat_result(vec![vec![0.5, 0.2]], vec![vec![0.5, 0.2]]);
        assert_eq!(plume_saturation_error(&r).unwrap(), 0.0);
        let rp = RolloutResult {
            variable: DynVar::Pressure,
            predicted: vec![vec![1e7; 3]],
            truth: vec![vec![1e7; 3]],
        };
        assert_eq!(pressure_relative_error(&rp, 1e7).unwrap(), 0.0);
    }

    #[test]
    fn plume_error_hand_case_indicator_truth_side() {
        // Truth {0.5, 0.0}, prediction {0.4, 0.005}: only the first cell
        // fires, delta = |0.5 - 0.4| / 1 = 0.1.
        let r = sat_result(vec![vec![0.4, 0.005]], vec![vec![0.5, 0.0]]);
        let d = plume_saturation_error(&r).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn plume_error_hand_case_indicator_prediction_side() {
        // Truth zero everywhere, prediction 0.02 in one cell: the indicator
        // fires on the prediction side, delta = 0.02.
        let r = sat_result(vec![vec![0.02, 0.0, 0.0]], vec![vec![0.0, 0.0, 0.0]]);
        let d = plume_saturation_error(&r).unwrap();
        assert!((d - 0.02).abs() < 1e-15);
    }

    #[test]
    fn empty_plume_defaults_to_zero() {
        let r = sat_result(vec![vec![0.0, 0.005]], vec![vec![0.0, 0.0]]);
        assert_eq!(plume_saturation_error(&r).unwrap(), 0.0);
    }

    #[test]
    fn pressure_error_hand_case() {
        // p_init = 10 MPa, truth 11 MPa, prediction 10.9 MPa: 0.1 MPa / 10 MPa.
        let r = RolloutResult {
            variable: DynVar::Pressure,
            predicted: vec![vec![10.9e6]],
            truth: vec![vec![11.0e6]],
        };
        let d: f64 = pressure_relative_error(&r, 10e6).unwrap();
        assert!((d - 0.01).abs() < 1e-12);
    }

    #[test]
    fn pressure_error_is_linear_in_mismatch() {
        let r1 = RolloutResult {
            variable: DynVar::Pressure,
            predicted: vec![vec![1.05e7, 0.95e7]],
            truth: vec![vec![1.1e7, 0.9e7]],
        };
        let r2 = RolloutResult {
            variable: DynVar::Pressure,
            predicted: vec![vec![1.0e7, 1.0e7]],
            truth: vec![vec![1.1e7, 0.9e7]],
        };
        let d1: f64 = pressure_relative_error(&r1, 1e7).unwrap();
        let d2: f64 = pressure_relative_error(&r2, 1e7).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-12);
    }

    #[test]
    fn wrong_variable_rejected() {
        let r = sat_result(vec![vec![0.1]], vec![vec![0.1]]);
        assert!(pressure_relative_error(&r, 1e7).is_err());
    }

    #[test]
    fn summary_of_singleton() {
        let s = ensemble_summary(&[0.1]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (0.1, 0.1, 0.1, 0.1, 0.1));
    }

    #[test]
    fn summary_hand_quartiles() {
        let s = ensemble_summary(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(s.min, 1.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.max, 5.0);
    }

    #[test]
    fn summary_is_permutation_invariant() {
        let a = ensemble_summary(&[0.3, 0.1, 0.7, 0.2]).unwrap();
        let b = ensemble_summary(&[0.7, 0.2, 0.3, 0.1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_ensemble_is_an_error() {
        assert!(matches!(ensemble_summary::<f64>(&[]), Err(MetricsError::EmptyEnsemble)));
    }
}
