use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm the gradient is rescaled to when it exceeds it.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub t: u64,
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut ModelParams<T>, max_norm: f64) -> f64 {
    let norm = grads.sq_norm().sqrt();
    if norm > max_norm {
        grads.scale(T::lit(max_norm / norm));
    }
    norm
}

impl<T: Real> Adam<T> {
    pub fn new(like: &ModelParams<T>, config: AdamConfig) -> Self {
        Adam {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    /// Clips `grads` (if configured) and applies one update to `params`.
    /// Returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ModelParams<T>, mut grads: ModelParams<T>, lr: f64) -> f64 {
        let norm = match self.config.clip_norm {
            Some(max) => clip_global_norm(&mut grads, max),
            None => grads.sq_norm().sqrt(),
        };
        self.t += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let t = self.t as i32;
        let step_size = T::lit(lr / (1.0 - beta1.powi(t)));
        let v_corr = T::lit(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one, eps) = (T::one(), T::lit(eps));

        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                p[i] -= step_size * m[i] / ((v[i] * v_corr).sqrt() + eps);
            }
        }
        norm
    }
}
