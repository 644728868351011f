//! Translation-based knowledge graph embeddings with adaptive margins.
//!
//! The crate covers loading triple datasets, the translation score and its
//! SGD step, entity and relation margins, the training loop, link prediction
//! and triple classification, and the stability-based risk bound.

// Checks written as `!(x >= 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod eval;
pub mod margin;
pub mod model;
pub mod synth;
pub mod train;

pub use data::{EntityId, KnowledgeGraph, RelationId, Splits, Triple, Vocab};
pub use error::{Error, Result};
pub use eval::{EvalOptions, EvalReport};
pub use margin::{ActiveSetConfig, MarginMethod, MarginTable};
pub use model::{Dissimilarity, EmbeddingModel};
pub use train::{train, train_keeping_progress, MarginMode, TrainConfig, TrainFailure, Trainer};
