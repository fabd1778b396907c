// Config validation uses `!(x > 0.0)`-style comparisons on purpose: unlike
// `x <= 0.0`, they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Self-supervised masked-patch pretraining on a single CPU core.
//!
//! The crate implements masked image modeling with a context-enhanced twist:
//! alongside the usual reconstruction of masked patches from a corrupted
//! input, a weight-shared branch sees the unmasked image and a consistency
//! loss ties the two predictions together, with gradients flowing only into
//! the reconstructive branch. Everything — transformer encoder, hand-written
//! backward pass, AdamW, datasets, evaluation, CLI — is deterministic given
//! the configured seeds.

pub mod backbone;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod evalsuite;
pub mod objective;
pub mod patchgrid;
pub mod trainer;

pub use error::{Error, Result};
