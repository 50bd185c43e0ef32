//! One time step of the language model: embedding lookup, LSTM update,
//! tanh projection and the tied output layer.

use super::params::ModelParams;
use super::tensor::{log_sum_exp, sigmoid, Real};
use crate::vocab::TokenId;

/// Recurrent state `(h, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> LmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        LmState {
            h: vec![T::zero(); hidden],
            c: vec![T::zero(); hidden],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(&self.c).all(|x| x.is_finite())
    }
}

/// Next-token distribution after a step.
#[derive(Clone, Debug)]
pub struct StepOutput<T> {
    pub logits: Vec<T>,
    pub probs: Vec<T>,
    pub state: LmState<T>,
}

/// Row `x` of the embedding matrix.
///
/// # Panics
/// If `x` is not a valid row.
pub fn embed<T: Real>(x: TokenId, p: &ModelParams<T>) -> &[T] {
    p.embedding.row(x as usize)
}

/// Activations kept for the backward pass of one LSTM step.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    pub e: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates `[i | f | o | g]`.
    pub gates: Vec<T>,
    pub tanh_c: Vec<T>,
}

pub fn lstm_forward<T: Real>(
    e: &[T],
    s: &LmState<T>,
    p: &ModelParams<T>,
) -> (LmState<T>, LstmCache<T>) {
    let hsz = s.h.len();
    let mut a = p.b_gates.clone();
    p.w_input.matvec_acc(e, &mut a);
    p.w_hidden.matvec_acc(&s.h, &mut a);
    for x in &mut a[..3 * hsz] {
        *x = sigmoid(*x);
    }
    for x in &mut a[3 * hsz..] {
        *x = x.tanh();
    }
    let (i, rest) = a.split_at(hsz);
    let (f, rest) = rest.split_at(hsz);
    let (o, g) = rest.split_at(hsz);

    let mut c = Vec::with_capacity(hsz);
    let mut h = Vec::with_capacity(hsz);
    let mut tanh_c = Vec::with_capacity(hsz);
    for j in 0..hsz {
        let cj = f[j] * s.c[j] + i[j] * g[j];
        let tc = cj.tanh();
        c.push(cj);
        tanh_c.push(tc);
        h.push(o[j] * tc);
    }
    let cache = LstmCache {
        e: e.to_vec(),
        h_prev: s.h.clone(),
        c_prev: s.c.clone(),
        gates: a,
        tanh_c,
    };
    (LmState { h, c }, cache)
}

/// Standard LSTM update: sigmoid gates, tanh candidate, `h = o ⊙ tanh(c)`.
pub fn lstm_step<T: Real>(e: &[T], s: &LmState<T>, p: &ModelParams<T>) -> LmState<T> {
    lstm_forward(e, s, p).0
}

/// Gradients flowing out of one LSTM step.
pub struct LstmInputGrads<T> {
    pub e: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
}

/// Backpropagates `dh`, `dc` (w.r.t. the step's outputs) through one step,
/// accumulating weight gradients into `grads`.
pub fn lstm_backward<T: Real>(
    p: &ModelParams<T>,
    cache: &LstmCache<T>,
    dh: &[T],
    dc_next: &[T],
    grads: &mut ModelParams<T>,
) -> LstmInputGrads<T> {
    let hsz = dh.len();
    let one = T::one();
    let (i, rest) = cache.gates.split_at(hsz);
    let (f, rest) = rest.split_at(hsz);
    let (o, g) = rest.split_at(hsz);

    let mut da = vec![T::zero(); 4 * hsz];
    let mut dc_prev = Vec::with_capacity(hsz);
    for j in 0..hsz {
        let tc = cache.tanh_c[j];
        let d_o = dh[j] * tc;
        let dc = dc_next[j] + dh[j] * o[j] * (one - tc * tc);
        let d_i = dc * g[j];
        let d_f = dc * cache.c_prev[j];
        let d_g = dc * i[j];
        dc_prev.push(dc * f[j]);
        da[j] = d_i * i[j] * (one - i[j]);
        da[hsz + j] = d_f * f[j] * (one - f[j]);
        da[2 * hsz + j] = d_o * o[j] * (one - o[j]);
        da[3 * hsz + j] = d_g * (one - g[j] * g[j]);
    }

    grads.w_input.add_outer(&da, &cache.e);
    grads.w_hidden.add_outer(&da, &cache.h_prev);
    super::tensor::add_assign(&mut grads.b_gates, &da);

    LstmInputGrads {
        e: p.w_input.matvec_t(&da),
        h_prev: p.w_hidden.matvec_t(&da),
        c_prev: dc_prev,
    }
}

/// `z = tanh(W h + b)`
pub fn project<T: Real>(h: &[T], p: &ModelParams<T>) -> Vec<T> {
    let mut z = p.b_proj.clone();
    p.w_proj.matvec_acc(h, &mut z);
    for x in &mut z {
        *x = x.tanh();
    }
    z
}

/// Logits through the tied output layer: one dot product per embedding row.
pub fn tied_logits<T: Real>(z: &[T], p: &ModelParams<T>) -> Vec<T> {
    p.embedding.matvec(z)
}

pub fn project_and_logits<T: Real>(s: &LmState<T>, p: &ModelParams<T>) -> StepOutput<T> {
    let z = project(&s.h, p);
    let logits = tied_logits(&z, p);
    let lse = log_sum_exp(&logits);
    let probs = logits.iter().map(|&l| (l - lse).exp()).collect();
    StepOutput {
        logits,
        probs,
        state: s.clone(),
    }
}

/// Feeds token `x` and returns the next-token distribution.
pub fn step<T: Real>(x: TokenId, s: &LmState<T>, p: &ModelParams<T>) -> StepOutput<T> {
    let state = lstm_step(embed(x, p), s, p);
    project_and_logits(&state, p)
}

/// Cross-entropy of `target` given `h`, plus its gradient; the weight
/// gradients go to `grads`, the return value is `(loss, dL/dh)`.
pub fn output_loss_backward<T: Real>(
    h: &[T],
    target: usize,
    p: &ModelParams<T>,
    grads: &mut ModelParams<T>,
) -> (T, Vec<T>) {
    let z = project(h, p);
    let logits = tied_logits(&z, p);
    let lse = log_sum_exp(&logits);
    let loss = lse - logits[target];
    let mut dlogits: Vec<T> = logits.iter().map(|&l| (l - lse).exp()).collect();
    dlogits[target] -= T::one();
    grads.embedding.add_outer(&dlogits, &z);
    let dz = p.embedding.matvec_t(&dlogits);
    let da: Vec<T> = dz
        .iter()
        .zip(&z)
        .map(|(&d, &zj)| d * (T::one() - zj * zj))
        .collect();
    grads.w_proj.add_outer(&da, h);
    super::tensor::add_assign(&mut grads.b_proj, &da);
    (loss, p.w_proj.matvec_t(&da))
}
