//! Sentiment-aware sentence embeddings.
//!
//! The crate covers the whole pipeline: a sentiment lexicon and the word
//! polarity it induces, labeled corpora and the samplers built on them,
//! lexicon-selective masking, a from-scratch transformer encoder, the
//! gated masked-word and quadruple contrastive objectives, a pre-training
//! loop with validation-driven checkpoint selection, and the evaluation
//! harnesses (sentiment-similarity correlation, linear probing, few-shot
//! fine-tuning, alignment/uniformity, PCA, nearest neighbours).

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod lexicon;
pub mod masking;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod report;
pub mod synthetic;
pub mod trainer;

pub use corpus::{DatasetSplits, Example, Label, Quadruple, SgtsPair};
pub use encoder::{Backbone, Encoder, EncoderConfig, HiddenStates};
pub use error::{Error, Result};
pub use lexicon::{Lexicon, LexiconEntry, Polarity};
pub use masking::{MaskedSequence, TokenSequence, Tokenizer, TokenizerMode, Vocabulary};
pub use model::{Embedder, Model};
pub use objectives::{Ablation, HyperParams, LossBreakdown, LossSelection};
pub use config::{Profile, RunConfig};
pub use trainer::{TrainConfig, TrainingLog};
