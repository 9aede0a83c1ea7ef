//! Plug-in external memory adaptation at desk scale.
//!
//! The pieces, bottom up:
//!
//! - [`numerics`]: dense f64 linear algebra, softmax/CE/squared-error, Adam.
//! - [`corpus`]: deterministic synthetic parallel tasks, tokenizer, prompts.
//! - [`plm`]: a small frozen causal LM exposing context representations and
//!   its LM head — the only weight it ever shares.
//! - [`memory`]: the external memory of (representation, target-token)
//!   records, built by iteratively extending contexts with predicted tokens.
//! - [`adapter`]: the low-rank adapter (A, B_rct, B_pd), its losses,
//!   hand-derived gradients, and two-phase training.
//! - [`decoding`]: next-token interpolation with the gradual-unrolling
//!   schedule, plus greedy generation.
//! - [`knn`]: the brute-force kNN baseline over the same memory.
//! - [`protocol`]: a TCP owner/client split where only representations,
//!   probabilities, predicted tokens, and the LM head cross the wire.
//! - [`eval`]: BLEU, perplexity, FLOPs accounting, informal-pattern
//!   counters, sweeps, and latency benchmarks.

mod binio;

pub mod adapter;
pub mod checksum;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod knn;
pub mod memory;
pub mod numerics;
pub mod plm;
pub mod protocol;

pub use error::{Error, Result};
