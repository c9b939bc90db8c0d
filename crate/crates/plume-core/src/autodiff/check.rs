//! Central-finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("function value is not finite at entry {entry} of parameter {param}")]
    NonFinite { param: usize, entry: usize },
}

/// Compares tape gradients of a scalar-valued function against central
/// finite differences, entry by entry.
///
/// `f` receives a fresh tape and one leaf [`Var`] per parameter and must
/// return a scalar. Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<T, F>(params: &[Tensor<T>], eps: f64, f: F) -> Result<f64, CheckError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Var,
{
    let eval = |values: &[Tensor<T>]| -> T {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };

    // Analytic gradients in one reverse pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let base = tape.value(out).item();
    if !base.is_finite() {
        return Err(CheckError::NonFinite { param: 0, entry: 0 });
    }
    let grads = tape.backward(out);

    let step = T::lit(eps);
    let mut worst = 0.0f64;
    let mut values: Vec<Tensor<T>> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for entry in 0..param.len() {
            let orig = param.data()[entry];
            values[pi].data_mut()[entry] = orig + step;
            let plus = eval(&values);
            values[pi].data_mut()[entry] = orig - step;
            let minus = eval(&values);
            values[pi].data_mut()[entry] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(CheckError::NonFinite { param: pi, entry });
            }
            let numeric = ((plus - minus) / (T::lit(2.0) * step)).to_f64().unwrap();
            let analytic = grads
                .get(vars[pi])
                .map(|g| g.data()[entry])
                .unwrap_or(T::zero())
                .to_f64()
                .unwrap();
            let rel = (analytic - numeric).abs() / numeric.abs().max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
    }

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_vec(2, 3, vec![0.3, -0.7, 1.1, 0.2, 0.9, -0.4]);
        let err = grad_check(&[x], 1e-6, |tape, vars| tape.sum(vars[0])).unwrap();
        assert!(err < 1e-9, "linear gradient should be exact, got {err}");
    }

    #[test]
    fn affine_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(3, 4, &mut rng);
        let w = random_tensor(4, 2, &mut rng);
        let b = random_tensor(1, 2, &mut rng);
        let err = grad_check(&[x, w, b], 1e-6, |tape, v| {
            let y = tape.affine(v[0], v[1], v[2]);
            tape.sum(y)
        })
        .unwrap();
        assert!(err < 1e-6, "affine grad error {err}");
    }

    #[test]
    fn tanh_gradient_at_spec_point() {
        let x = Tensor::scalar(0.37);
        let err = grad_check(&[x], 1e-6, |tape, v| {
            let y = tape.tanh(v[0]);
            tape.sum(y)
        })
        .unwrap();
        assert!(err < 1e-7, "tanh grad error {err}");
    }

    #[test]
    fn layer_norm_gradient_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(3, 5, &mut rng);
        let g = random_tensor(1, 5, &mut rng);
        let b = random_tensor(1, 5, &mut rng);
        let err = grad_check(&[x, g, b], 1e-6, |tape, v| {
            let y = tape.layer_norm(v[0], v[1], v[2]);
            let y2 = tape.mul(y, y);
            tape.sum(y2)
        })
        .unwrap();
        assert!(err < 1e-5, "layer_norm grad error {err}");
    }

    #[test]
    fn rmse_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_tensor(6, 1, &mut rng);
        let target = Rc::new(random_tensor(6, 1, &mut rng));
        let err = grad_check(&[p], 1e-6, move |tape, v| tape.rmse(v[0], target.clone())).unwrap();
        assert!(err < 1e-6, "rmse grad error {err}");
    }

    #[test]
    fn every_primitive_passes_on_random_inputs() {
        // The composite touches matmul, bias, activations, layer norm,
        // concat, gather, scatter, spmm, clamp, row ops, sqrt and rmse.
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = random_tensor(4, 3, &mut rng);
            let w = random_tensor(3, 3, &mut rng);
            let b = random_tensor(1, 3, &mut rng);
            let g = random_tensor(1, 3, &mut rng);
            let v = random_tensor(1, 3, &mut rng);
            let lap = Rc::new(crate::linalg::Csr::from_triplets(
                4,
                4,
                &[(0, 1, -0.5), (1, 0, -0.5), (2, 3, -1.0), (3, 2, -1.0), (0, 0, 0.3)],
            ));
            let target = Rc::new(random_tensor(4, 1, &mut rng));
            let idx = Rc::new(vec![0usize, 2, 2, 3]);
            let tgt = Rc::new(vec![1usize, 0, 3, 1]);
            let err = grad_check(&[x, w, b, g, v], 1e-6, |tape, vars| {
                let h = tape.affine(vars[0], vars[1], vars[2]);
                let h = tape.activation(Activation::Tanh, h);
                let h = tape.layer_norm(h, vars[3], vars[2]);
                let picked = tape.gather(h, idx.clone());
                let spread = tape.scatter_sum(picked, tgt.clone(), 4);
                let mixed = tape.spmm(lap.clone(), spread);
                let mixed = tape.row_mul(mixed, vars[4]);
                let sig = tape.sigmoid(mixed);
                let clamped = tape.clamp(sig, 0.05, 0.95);
                let parts = tape.concat(&[sig, clamped]);
                let w2 = tape.constant(Tensor::from_vec(6, 1, vec![0.2, -0.3, 0.5, 0.1, -0.2, 0.4]));
                let yhat = tape.matmul(parts, w2);
                tape.rmse(yhat, target.clone())
            })
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: composite grad error {err}");
        }
    }
}
