//! Retrieve, rerank and template-guided abstractive sentence summarization.
//!
//! The crate is organised as a three-stage pipeline:
//!
//! 1. [`retrieval`] finds training articles lexically similar to a source
//!    article (BM25 over an inverted index) and returns their summaries as
//!    candidate *soft templates*.
//! 2. [`rerank`] scores each (article, candidate) pair with a small
//!    convolutional matching network and picks the best template.
//! 3. [`biset`] encodes article and template with BiLSTMs, lets them filter
//!    each other through two selective gates, and decodes a summary with an
//!    attention LSTM decoder and beam search.
//!
//! All model math runs on [`ndtensor`], a small reverse-mode differentiation
//! engine over `f64` tensors. [`metrics`] provides ROUGE-1/2/L, and
//! [`pipeline`] ties the stages together with configuration, training loops,
//! evaluation sweeps and the CLI plumbing.

pub mod biset;
pub mod error;
pub mod metrics;
pub mod ndtensor;
pub mod pipeline;
pub mod rerank;
pub mod retrieval;
pub mod vocab;

pub use error::{Error, Result};
