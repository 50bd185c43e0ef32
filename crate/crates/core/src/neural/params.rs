use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{cast_slice, Matrix, Real};

/// Model sizes: vocabulary, embedding (= projection output) and LSTM state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Dims {
    pub fn new(vocab: usize, embed: usize, hidden: usize) -> Self {
        Dims {
            vocab,
            embed,
            hidden,
        }
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.vocab, self.embed, self.hidden)
    }
}

pub const INIT_SCALE: f64 = 0.05;
pub const FORGET_BIAS: f64 = 1.0;

/// Trainable parameters. The output layer reuses `embedding` (logits are
/// `embedding · z`), so there is no separate output matrix.
///
/// Gate rows of `w_input`, `w_hidden` and `b_gates` are stacked in the order
/// input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// |V| × d, one syllable embedding per row.
    pub embedding: Matrix<T>,
    /// 4H × d
    pub w_input: Matrix<T>,
    /// 4H × H
    pub w_hidden: Matrix<T>,
    /// 4H
    pub b_gates: Vec<T>,
    /// d × H
    pub w_proj: Matrix<T>,
    /// d
    pub b_proj: Vec<T>,
}

pub const TENSOR_NAMES: [&str; 6] = [
    "embedding",
    "w_input",
    "w_hidden",
    "b_gates",
    "w_proj",
    "b_proj",
];

impl<T: Real> ModelParams<T> {
    pub fn zeros(dims: Dims) -> Self {
        let Dims {
            vocab,
            embed,
            hidden,
        } = dims;
        ModelParams {
            embedding: Matrix::zeros(vocab, embed),
            w_input: Matrix::zeros(4 * hidden, embed),
            w_hidden: Matrix::zeros(4 * hidden, hidden),
            b_gates: vec![T::zero(); 4 * hidden],
            w_proj: Matrix::zeros(embed, hidden),
            b_proj: vec![T::zero(); embed],
        }
    }

    /// Uniform(−0.05, 0.05) matrices, zero biases except the forget gate at +1.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut p = Self::uniform(dims, INIT_SCALE, seed);
        p.b_gates.fill(T::zero());
        p.b_proj.fill(T::zero());
        let h = dims.hidden;
        p.b_gates[h..2 * h].fill(T::lit(FORGET_BIAS));
        p
    }

    /// Every entry, biases included, drawn from Uniform(−scale, scale).
    pub fn uniform(dims: Dims, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dims);
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = T::lit(rng.random_range(-scale..scale));
            }
        }
        p
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab: self.embedding.rows(),
            embed: self.embedding.cols(),
            hidden: self.w_hidden.cols(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    /// Parameter tensors in a fixed order (see [`TENSOR_NAMES`]).
    pub fn tensors(&self) -> [&[T]; 6] {
        [
            self.embedding.as_slice(),
            self.w_input.as_slice(),
            self.w_hidden.as_slice(),
            &self.b_gates,
            self.w_proj.as_slice(),
            &self.b_proj,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 6] {
        [
            self.embedding.as_mut_slice(),
            self.w_input.as_mut_slice(),
            self.w_hidden.as_mut_slice(),
            &mut self.b_gates,
            self.w_proj.as_mut_slice(),
            &mut self.b_proj,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::tensor::add_assign(a, b);
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }

    /// Squared L2 norm over all tensors, accumulated in f64.
    pub fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|&x| {
                let x = x.to_f64_lossy();
                x * x
            })
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            embedding: self.embedding.cast(),
            w_input: self.w_input.cast(),
            w_hidden: self.w_hidden.cast(),
            b_gates: cast_slice(&self.b_gates),
            w_proj: self.w_proj.cast(),
            b_proj: cast_slice(&self.b_proj),
        }
    }
}

/// |V|·d + LSTM(d, H) + d·H + d, where LSTM(d, H) = 4H(d + H) + 4H.
pub fn expected_param_count(dims: Dims) -> usize {
    let Dims {
        vocab,
        embed,
        hidden,
    } = dims;
    vocab * embed + 4 * hidden * (embed + hidden) + 4 * hidden + embed * hidden + embed
}
