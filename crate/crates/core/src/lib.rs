// SPDX-License-Identifier: MIT OR Apache-2.0

//! # tcoder-core
//!
//! TopK sparse autoencoders, transcoders and skip transcoders trained with
//! plain MSE and Adam, together with the tools to evaluate them:
//!
//! - [`shardio`]: the `ACTS` paired-activation shard format, checkpoints and
//!   token streams.
//! - [`coder`]: the model family and its forward pass.
//! - [`train`]: closed-form backpropagation, Adam and dead-latent tracking.
//! - [`evalsuite`]: variance explained, patched cross-entropy, feature
//!   density, quantile example sampling, detection/fuzzing aggregation and
//!   sparse probing.
//! - [`synth`]: planted-dictionary generators and a small patchable language
//!   model.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! name the common instantiations.

#![forbid(unsafe_code)]

pub mod coder;
pub mod error;
pub mod evalsuite;
pub mod scalar;
pub mod shardio;
pub mod synth;
pub mod tensor;
pub mod train;

pub use coder::{Arch, CoderConfig, SparseCode, SparseCoder};
pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use shardio::{ShardDataset, ShardHeader, ShardRow};
pub use tensor::Matrix;
pub use train::{Gradients, StepRecord, TrainConfig, TrainState};

/// Single-precision coder, the storage and default training precision.
pub type SparseCoderF32 = SparseCoder<f32>;
/// Double-precision coder, used for gradient checks and reference runs.
pub type SparseCoderF64 = SparseCoder<f64>;
pub type TrainStateF32 = TrainState<f32>;
pub type TrainStateF64 = TrainState<f64>;
pub type CheckpointF32 = shardio::Checkpoint<f32>;
pub type CheckpointF64 = shardio::Checkpoint<f64>;
pub type ToyLmF32 = synth::ToyLm<f32>;
pub type ToyLmF64 = synth::ToyLm<f64>;
