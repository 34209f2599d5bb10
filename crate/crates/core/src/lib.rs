//! Joint Chinese word segmentation and POS tagging with MC-dropout uncertainty
//! detection and retrieval-based knowledge fusion.

pub mod checkpoint;
pub mod config;
mod container;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod evaluation;
pub mod kfusion;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod retrieval;
pub mod semodel;
pub mod synthetic;
pub mod tagset;
pub mod train;
pub mod uncertainty;
pub mod vocab;

pub use config::RunConfig;
pub use corpus::{AnnotatedCorpus, CorpusFormat, Sentence};
pub use decode::{viterbi, TransitionMask};
pub use error::{Error, Result};
pub use evaluation::{score, EvalReport};
pub use kfusion::{KfConfig, KfModel};
pub use pipeline::{Pipeline, PipelineOptions, Prediction};
pub use retrieval::KnowledgeCorpus;
pub use semodel::{EmissionMatrix, ModelConfig, SeModel};
pub use tagset::{TagSet, WordSpan};
pub use vocab::Vocab;
