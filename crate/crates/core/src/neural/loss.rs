//! Cross-entropy over token sequences, backpropagation through time and
//! perplexity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cell::{embed, lstm_backward, lstm_forward, output_loss_backward, LmState, LstmCache};
use super::params::ModelParams;
use super::tensor::{log_sum_exp, Real};
use crate::error::{Error, Result};
use crate::vocab::TokenSeq;

/// Sequences per gradient partition. Partitions depend only on batch order,
/// so results do not change with the size of the thread pool.
pub const PARTITION_SIZE: usize = 4;

fn validate(seq: &[u32], vocab: usize) -> Result<()> {
    if seq.len() < 2 {
        return Err(Error::DegenerateSequence { len: seq.len() });
    }
    if let Some(&id) = seq.iter().find(|&&id| id as usize >= vocab) {
        return Err(Error::TokenOutOfRange { id, size: vocab });
    }
    Ok(())
}

/// Summed cross-entropy of one sequence; gradients of that sum are added to
/// `grads`. Returns `(loss_sum, steps)`.
fn accumulate_sequence<T: Real>(
    seq: &[u32],
    p: &ModelParams<T>,
    dropout: f64,
    seed: u64,
    grads: &mut ModelParams<T>,
) -> (f64, usize) {
    let hidden = p.dims().hidden;
    let steps = seq.len() - 1;
    let keep_scale = if dropout > 0.0 {
        T::lit(1.0 / (1.0 - dropout))
    } else {
        T::one()
    };
    let mut rng = (dropout > 0.0).then(|| ChaCha8Rng::seed_from_u64(seed));

    let mut state = LmState::zeros(hidden);
    let mut caches: Vec<LstmCache<T>> = Vec::with_capacity(steps);
    let mut masks: Vec<Vec<T>> = Vec::with_capacity(if rng.is_some() { steps } else { 0 });
    let mut dhs: Vec<Vec<T>> = Vec::with_capacity(steps);
    let mut loss = 0.0;

    for t in 0..steps {
        let (next, cache) = lstm_forward(embed(seq[t], p), &state, p);
        caches.push(cache);
        state = next;
        let target = seq[t + 1] as usize;
        let (l, mut dh) = match rng.as_mut() {
            Some(rng) => {
                let mask: Vec<T> = (0..hidden)
                    .map(|_| {
                        if rng.random::<f64>() < dropout {
                            T::zero()
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                let dropped: Vec<T> = state.h.iter().zip(&mask).map(|(&h, &m)| h * m).collect();
                let out = output_loss_backward(&dropped, target, p, grads);
                masks.push(mask);
                out
            }
            None => output_loss_backward(&state.h, target, p, grads),
        };
        if let Some(mask) = masks.last() {
            for (d, &m) in dh.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        loss += l.to_f64_lossy();
        dhs.push(dh);
    }

    let mut dh_next = vec![T::zero(); hidden];
    let mut dc_next = vec![T::zero(); hidden];
    for t in (0..steps).rev() {
        for (a, &b) in dh_next.iter_mut().zip(&dhs[t]) {
            *a += b;
        }
        let g = lstm_backward(p, &caches[t], &dh_next, &dc_next, grads);
        super::tensor::add_assign(grads.embedding.row_mut(seq[t] as usize), &g.e);
        dh_next = g.h_prev;
        dc_next = g.c_prev;
    }
    (loss, steps)
}

/// Mean cross-entropy over the prediction steps of `seq` and its gradient.
///
/// Dropout is applied to the LSTM output before projection, with a mask
/// stream seeded by `rng_seed`; a rate of 0 disables it.
pub fn sequence_loss<T: Real>(
    seq: &TokenSeq,
    p: &ModelParams<T>,
    dropout_rate: f64,
    rng_seed: u64,
) -> Result<(f64, ModelParams<T>)> {
    check_rate(dropout_rate)?;
    validate(seq.ids(), p.dims().vocab)?;
    let mut grads = p.zeros_like();
    let (sum, steps) = accumulate_sequence(seq.ids(), p, dropout_rate, rng_seed, &mut grads);
    grads.scale(T::lit(1.0 / steps as f64));
    Ok((sum / steps as f64, grads))
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "dropout rate {rate} outside [0, 1)"
        )))
    }
}

/// Seed of the dropout stream for the `index`-th sequence of a batch.
pub fn sequence_seed(batch_seed: u64, index: usize) -> u64 {
    batch_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
}

/// Token-weighted mean loss over a mini-batch and its gradient.
///
/// Sequences are grouped into fixed partitions of [`PARTITION_SIZE`], each
/// partition is processed on its own thread and partial gradients are summed
/// in partition order.
pub fn batch_loss<T: Real>(
    batch: &[&TokenSeq],
    p: &ModelParams<T>,
    dropout_rate: f64,
    batch_seed: u64,
) -> Result<(f64, ModelParams<T>)> {
    check_rate(dropout_rate)?;
    if batch.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = p.dims().vocab;
    for seq in batch {
        validate(seq.ids(), vocab)?;
    }
    let partials: Vec<(f64, usize, ModelParams<T>)> = batch
        .par_chunks(PARTITION_SIZE)
        .enumerate()
        .map(|(chunk, seqs)| {
            let mut grads = p.zeros_like();
            let mut loss = 0.0;
            let mut steps = 0;
            for (k, seq) in seqs.iter().enumerate() {
                let seed = sequence_seed(batch_seed, chunk * PARTITION_SIZE + k);
                let (l, n) = accumulate_sequence(seq.ids(), p, dropout_rate, seed, &mut grads);
                loss += l;
                steps += n;
            }
            (loss, steps, grads)
        })
        .collect();

    let mut parts = partials.into_iter();
    let (mut loss, mut steps, mut grads) = parts.next().expect("non-empty batch");
    for (l, n, g) in parts {
        loss += l;
        steps += n;
        grads.add_assign(&g);
    }
    grads.scale(T::lit(1.0 / steps as f64));
    Ok((loss / steps as f64, grads))
}

/// Summed cross-entropy and step count of one sequence, no dropout.
pub fn sequence_cross_entropy<T: Real>(seq: &[u32], p: &ModelParams<T>) -> Result<(f64, usize)> {
    validate(seq, p.dims().vocab)?;
    let mut state = LmState::zeros(p.dims().hidden);
    let mut total = 0.0;
    for w in seq.windows(2) {
        state = super::cell::lstm_step(embed(w[0], p), &state, p);
        let z = super::cell::project(&state.h, p);
        let logits = super::cell::tied_logits(&z, p);
        total += (log_sum_exp(&logits) - logits[w[1] as usize]).to_f64_lossy();
    }
    Ok((total, seq.len() - 1))
}

/// `exp(total cross-entropy / total steps)` over a corpus, with the state
/// reset at the start of every sequence.
pub fn perplexity<T: Real>(corpus: &[TokenSeq], p: &ModelParams<T>) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let parts: Vec<(f64, usize)> = corpus
        .par_iter()
        .map(|seq| sequence_cross_entropy(seq.ids(), p))
        .collect::<Result<_>>()?;
    let (total, steps) = parts
        .into_iter()
        .fold((0.0, 0), |(a, n), (b, m)| (a + b, n + m));
    Ok((total / steps as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::params::Dims;

    fn seq(ids: &[u32]) -> TokenSeq {
        TokenSeq(ids.to_vec())
    }

    #[test]
    fn rejects_bad_sequences() {
        let p = ModelParams::<f64>::init(Dims::new(10, 4, 3), 0);
        assert!(matches!(
            sequence_loss(&seq(&[1]), &p, 0.0, 0),
            Err(Error::DegenerateSequence { len: 1 })
        ));
        assert!(matches!(
            sequence_loss(&seq(&[1, 10]), &p, 0.0, 0),
            Err(Error::TokenOutOfRange { id: 10, size: 10 })
        ));
        assert!(sequence_loss(&seq(&[1, 2]), &p, 1.0, 0).is_err());
    }

    #[test]
    fn zero_dropout_ignores_seed() {
        let p = ModelParams::<f64>::init(Dims::new(12, 5, 4), 3);
        let s = seq(&[1, 5, 6, 0, 7, 2, 3]);
        let (a, ga) = sequence_loss(&s, &p, 0.0, 1).unwrap();
        let (b, gb) = sequence_loss(&s, &p, 0.0, 999).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn dropout_depends_on_seed_only() {
        let p = ModelParams::<f32>::init(Dims::new(12, 5, 8), 3);
        let s = seq(&[1, 5, 6, 0, 7, 2, 3]);
        let (a, _) = sequence_loss(&s, &p, 0.5, 1).unwrap();
        let (b, _) = sequence_loss(&s, &p, 0.5, 1).unwrap();
        let (c, _) = sequence_loss(&s, &p, 0.5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn loss_agrees_with_perplexity() {
        let p = ModelParams::<f64>::uniform(Dims::new(9, 4, 3), 0.3, 8);
        let s = seq(&[1, 5, 6, 7, 2, 3]);
        let (loss, _) = sequence_loss(&s, &p, 0.0, 0).unwrap();
        let ppl = perplexity(std::slice::from_ref(&s), &p).unwrap();
        assert!((loss.exp() - ppl).abs() < 1e-12);
    }

    #[test]
    fn batch_is_token_weighted_mean() {
        let p = ModelParams::<f64>::uniform(Dims::new(9, 4, 3), 0.3, 8);
        let seqs: Vec<TokenSeq> = (0..7u32)
            .map(|k| seq(&(0..(3 + k)).map(|i| (i * 7 + k) % 9).collect::<Vec<_>>()))
            .collect();
        let refs: Vec<&TokenSeq> = seqs.iter().collect();
        let (loss, grads) = batch_loss(&refs, &p, 0.0, 0).unwrap();
        let mut want_loss = 0.0;
        let mut want = p.zeros_like();
        let mut steps = 0;
        for s in &seqs {
            let (l, mut g) = sequence_loss(s, &p, 0.0, 0).unwrap();
            let n = s.len() - 1;
            want_loss += l * n as f64;
            g.scale(n as f64);
            want.add_assign(&g);
            steps += n;
        }
        want.scale(1.0 / steps as f64);
        assert!((loss - want_loss / steps as f64).abs() < 1e-12);
        for (a, b) in grads.tensors().iter().zip(want.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let p = ModelParams::<f32>::zeros(Dims::new(37, 4, 3));
        let corpus = vec![seq(&[1, 5, 6, 2, 3]), seq(&[1, 9, 2, 3])];
        let ppl = perplexity(&corpus, &p).unwrap();
        assert!((ppl - 37.0).abs() / 37.0 < 1e-6);
        assert!(matches!(
            perplexity::<f32>(&[], &p),
            Err(Error::EmptyCorpus)
        ));
    }
}
