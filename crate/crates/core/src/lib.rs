//! Embedding debiasing, hubness diagnostics, and desk-scale multimodal
//! translation models with full training and evaluation support.
//!
//! Everything is CPU-only, 64-bit, and deterministic given a seed. The
//! building blocks live in [`numerics`]; the embedding pipeline in
//! [`embedding`] and [`debias`]; the sequence models in [`mnmt`]; training
//! and evaluation in [`train`].

pub mod debias;
pub mod embedding;
pub mod error;
pub mod mnmt;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
