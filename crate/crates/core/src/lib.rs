//! Multi-modal fake-news classification with an explicit cross-modal
//! similarity signal.
//!
//! An article contributes two text channels: its body and a caption sentence
//! derived from its image by an external captioning step. Each channel runs
//! through its own convolutional encoder (word-embedding windows, ReLU,
//! max-over-time pooling, affine projection). A softmax head classifies the
//! concatenated representations, while a shifted cosine score between them
//! feeds a second cross-entropy loss that treats low text/caption similarity
//! as evidence of fakeness. Both losses are mixed by weights alpha and beta
//! and minimized by per-sample SGD with hand-derived gradients; a central
//! finite-difference checker validates every gradient path.
//!
//! Module map:
//! * [`numerics`]: dense vector/matrix math and seeded randomness
//! * [`text`]: tokenizer, vocabulary, frozen embedding tables
//! * [`data`]: corpus I/O, temporal and k-fold splits, synthetic corpora
//! * [`encoder`]: the convolutional encoder and its forward cache
//! * [`fusion`]: classifier heads, similarity score, losses
//! * [`train`]: SGD loop, gradients, finite-difference checking
//! * [`model`]: fit/predict pipeline and the model file format
//! * [`eval`]: metrics, ablation table, alpha/beta sweep
//! * [`exec`]: parallel dispatch with a sequential fallback

pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fusion;
pub mod model;
pub mod numerics;
pub mod text;
pub mod train;

pub use error::{Error, Result};
