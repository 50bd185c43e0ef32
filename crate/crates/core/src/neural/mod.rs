//! The language model: syllable embeddings feed a single LSTM layer, whose
//! state is projected back to embedding size and scored against the same
//! embedding matrix.

pub mod adam;
pub mod cell;
pub mod checkpoint;
pub mod loss;
pub mod params;
pub mod tensor;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use cell::{embed, lstm_step, project_and_logits, step, LmState, StepOutput};
pub use checkpoint::Checkpoint;
pub use loss::{batch_loss, perplexity, sequence_loss};
pub use params::{Dims, ModelParams};
pub use tensor::{Matrix, Real};
