//! Desk-scale grounded multimodal machine translation.
//!
//! A toy vision encoder feeds an adapter projector whose outputs occupy a
//! reserved block of a causal decoder's context. Training runs in up to three
//! stages with per-component freezing, optionally with LoRA adapters in the
//! last stage. The crate also carries the Visual Genome instruction-data
//! pipeline and BLEU/RIBES scoring.

pub mod datapipe;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{AdamConfig, AdamState, ParameterStore, Tape, Tensor, Var};
