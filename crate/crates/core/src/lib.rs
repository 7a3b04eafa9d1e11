//! Allocation-only core of the MicroT personalization pipeline.
//!
//! Everything here is pure computation over in-memory values: a small
//! reverse-mode network engine, the self-supervised and distillation
//! objectives used on the cloud side, fused-score model segmentation,
//! symmetric INT8 quantization, the batch-size-one device trainer with
//! stage-training, median-quantile early-exit routing and a MAC-based
//! cost model. File formats, dataset ingestion and the CLI live in the
//! `microt` crate.

#![no_std]
#![deny(rust_2018_idioms, missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod math;
pub mod tensor;

pub mod net;

pub mod cost;
pub mod data;
pub mod device;
pub mod distill;
pub mod image;
pub mod probe;
pub mod quant;
pub mod split;
pub mod stage;

pub use error::{Error, Result};
pub use net::{Activations, Block, BlockNet, BlockSpec, Conv2d, Dense, Extractor, GradientTape, Head, HeadSpec, Init, NetSpec};
pub use tensor::Tensor;

/// Deterministic generator used for every seeded operation in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
