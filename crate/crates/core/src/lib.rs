//! Two-stage contrastive training with information-theoretic diagnostics.
//!
//! Stage 1 trains an MLP backbone with cross-entropy plus an instance-level
//! InfoNCE term against a memory bank. Stage 2 freezes a snapshot of that
//! backbone as an information bank and keeps the new representations close to
//! the stored ones while cross-entropy training continues.

pub mod contrastive;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod mi;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
