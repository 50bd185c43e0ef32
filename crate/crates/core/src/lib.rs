//! Syllable-level LSTM language model for Italian tercets.
//!
//! The pipeline runs corpus text through [`corpus::normalize`], splits words
//! into syllables with the [`syllabifier`], encodes them against a
//! [`vocab::Vocabulary`] with structural special tokens, trains the
//! [`neural`] model through a staged [`trainer`] schedule and finally samples
//! and ranks tercets with the [`generator`].

pub mod corpus;
pub mod error;
pub mod generator;
pub mod neural;
pub mod syllabifier;
pub mod trainer;
pub mod vocab;

pub use corpus::{CorpusKind, RawCorpus, Split, SplitManifest, TercetText};
pub use error::{Error, Result};
pub use generator::{GenConfig, Lexicon, ScoredTercet, Scores};
pub use neural::{Checkpoint, Dims, ModelParams};
pub use syllabifier::{Syllabifier, SyllableBreakdown};
pub use trainer::{PlanConfig, TrainPlan, TrainStage};
pub use vocab::{SpecialToken, TokenId, TokenSeq, Vocabulary};
