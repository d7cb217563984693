//! Multi-source LSTM user-behavior classifier.
//!
//! One LSTM per edit aspect (page title, page categories, revert status)
//! encodes a user's edit sequence; an attention head fuses the per-aspect
//! hidden states into a user embedding that a softmax classifier scores as
//! vandal or benign. The crate covers the whole pipeline: edit-log
//! ingestion, word-vector embeddings, training with Adadelta and exact
//! backpropagation through time, batch and streaming (early) detection,
//! checkpointing, and post-hoc embedding analysis (density clustering,
//! similarity queries, TSV export).

pub mod analysis;
pub mod detection;
pub mod embeddings;
pub mod error;
pub mod ingestion;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use ingestion::Label;
