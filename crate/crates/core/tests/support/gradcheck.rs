//! Central-difference check of every parameter gradient of the full model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terzina::neural::params::TENSOR_NAMES;
use terzina::neural::{sequence_loss, Dims, ModelParams};
use terzina::TokenSeq;

/// Largest relative error over all parameters, and where it occurred.
///
/// Differences are relative to max(|analytic|, |numeric|, 1e-6); below that
/// floor both values are dominated by rounding in the central difference.
pub fn max_relative_error(dims: Dims, len: usize, eps: f64, seed: u64) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = ModelParams::<f64>::uniform(dims, 0.5, seed);
    let seq = TokenSeq(
        (0..len)
            .map(|_| rng.random_range(0..dims.vocab as u32))
            .collect(),
    );
    let (_, grads) = sequence_loss(&seq, &p, 0.0, 0).unwrap();
    let loss = |q: &ModelParams<f64>| sequence_loss(&seq, q, 0.0, 0).unwrap().0;

    let mut worst = (0.0f64, String::new());
    for (t, name) in TENSOR_NAMES.iter().enumerate() {
        for idx in 0..p.tensors()[t].len() {
            let mut plus = p.clone();
            plus.tensors_mut()[t][idx] += eps;
            let mut minus = p.clone();
            minus.tensors_mut()[t][idx] -= eps;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let analytic = grads.tensors()[t][idx];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{name}[{idx}] analytic {analytic:e} numeric {numeric:e}"),
                );
            }
        }
    }
    worst
}
