//! Check-worthiness triage toolkit.
//!
//! The crate covers the whole chain from a labeled tweet collection to a
//! shared-task style evaluation report:
//!
//! - [`corpus`]: TSV ingestion, deterministic (stratified) splits, class balance.
//! - [`tokenizer`]: WordPiece and BPE subword tokenizers plus vocabulary overlap analysis.
//! - [`model`]: a small transformer encoder with a pooled head and a
//!   mean-of-last-two-layers head, with hand-written backpropagation.
//! - [`train`]: cross-entropy, Adam, mini-batch fine-tuning and grid search.
//! - [`augment`]: back-translation upsampling of the positive class with a leakage guard.
//! - [`rank`]: softmax score differences and per-topic rankings.
//! - [`metrics`]: P@k, AP/mAP, RR and R-Precision.
//! - [`config`], [`pipeline`] and [`cli`]: TOML configuration, the end-to-end
//!   chain and the command-line front end.
//! - [`synthetic`]: seeded toy corpora, vocabulary and translation table.

pub mod augment;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rank;
pub mod rng;
pub mod synthetic;
pub mod tokenizer;
pub mod train;

pub use corpus::{ClassBalance, Dataset, Origin, Schema, SplitSpec, Tweet};

pub use metrics::{MetricReport, RelevanceJudgments};
pub use model::{EncoderConfig, EncoderWeights, HeadVariant, Logits, Mode};
pub use rank::{RankedRun, ScoredTweet};

pub use tokenizer::{MergeTable, Scheme, TokenSequence, Vocabulary};
pub use train::{TrainConfig, TrainHistory};

