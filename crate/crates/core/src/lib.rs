//! Translation decoding, parallel-corpus curation and BLEU evaluation.
//!
//! The neural model sits behind [`model::ConditionalModel`], a one-step
//! conditional distribution. Everything else (greedy, beam and sampling
//! search, the similarity filter, the split rules, BLEU) is plain Rust over
//! that port, so small table models can stand in for a real network.

pub mod bleu;
pub mod corpus;
pub mod decode;
pub mod embed;
pub mod error;
pub mod model;
pub mod text;

#[cfg(feature = "remote")]
pub mod http;

pub use error::{Error, Result};
