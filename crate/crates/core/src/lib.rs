//! Spoken language understanding toolkit.
//!
//! * [`data`]: JSONL manifests of utterances (words, BIO slot tags, intent).
//! * [`tokenize`]: greedy subword tokenizers and the first-index alignment
//!   matrices that project subword hidden states to word level.
//! * [`metrics`]: WER, slots edit F1, span F1 and intent F1.
//! * [`audio`]: WAV I/O, SNR noise mixing, augmentation and feature masking.
//! * [`model`]: a small joint ASR + NLU model with exact gradients, CRF
//!   slot head, two-step beam decoding and a staged training schedule.

pub mod audio;
pub mod data;
mod error;
pub mod fsutil;
pub mod metrics;
pub mod model;
pub mod tokenize;

pub use error::{Error, Result};

/// Dense row-major matrix used for features and hidden states.
pub type Matrix = ndarray::Array2<f64>;
