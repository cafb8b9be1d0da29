// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sparse coder checkpoints: coder weights, Adam moments and bookkeeping in a
//! [`TensorArchive`] of kind `"sparse_coder"`, stored in the coder's own
//! precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coder::{CoderConfig, SparseCoder};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::train::{Gradients, TrainConfig, TrainState};

use super::archive::TensorArchive;
use super::source::RowView;

const KIND: &str = "sparse_coder";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointBody {
    coder: CoderConfig,
    train: Option<TrainConfig>,
    data_view: RowView,
    step: u64,
    tokens_seen: u64,
    last_fired: Vec<Option<u64>>,
}

/// Everything needed to resume training or evaluate a coder.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub coder: SparseCoder<T>,
    pub state: TrainState<T>,
    pub train: Option<TrainConfig>,
    /// How stored shard rows map onto coder input and target.
    pub data_view: RowView,
}

fn push_set<T: Scalar>(ar: &mut TensorArchive, prefix: &str, set: &Gradients<T>) {
    ar.push_matrix(&format!("{prefix}encoder"), &set.encoder);
    ar.push(&format!("{prefix}encoder_bias"), &[set.encoder_bias.len()], &set.encoder_bias);
    ar.push_matrix(&format!("{prefix}decoder"), &set.decoder);
    ar.push(&format!("{prefix}decoder_bias"), &[set.decoder_bias.len()], &set.decoder_bias);
    if let Some(s) = &set.skip {
        ar.push_matrix(&format!("{prefix}skip"), s);
    }
}

fn take_set<T: Scalar>(ar: &TensorArchive, prefix: &str, cfg: &CoderConfig) -> Result<Gradients<T>> {
    let name = |n: &str| format!("{prefix}{n}");
    let skip_name = name("skip");
    let skip = if cfg.arch.has_skip() {
        Some(ar.matrix(&skip_name, cfg.d_out, cfg.d_in)?)
    } else if ar.contains(&skip_name) {
        return Err(Error::InvalidConfig(format!(
            "{} checkpoint carries an unexpected skip tensor",
            cfg.arch
        )));
    } else {
        None
    };
    Ok(Gradients {
        encoder: ar.matrix(&name("encoder"), cfg.n_latents, cfg.d_in)?,
        encoder_bias: ar.vector(&name("encoder_bias"), cfg.n_latents)?,
        decoder: ar.matrix(&name("decoder"), cfg.d_out, cfg.n_latents)?,
        decoder_bias: ar.vector(&name("decoder_bias"), cfg.d_out)?,
        skip,
    })
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(coder: SparseCoder<T>, state: TrainState<T>) -> Self {
        Self {
            coder,
            state,
            train: None,
            data_view: RowView::Pairs,
        }
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let body = CheckpointBody {
            coder: *self.coder.config(),
            train: self.train.clone(),
            data_view: self.data_view,
            step: self.state.step,
            tokens_seen: self.state.tokens_seen,
            last_fired: self.state.last_fired.clone(),
        };
        let mut ar = TensorArchive::new(KIND, T::DTYPE, serde_json::to_value(body)?);
        let c = &self.coder;
        let weights = Gradients {
            encoder: c.encoder().clone(),
            encoder_bias: c.encoder_bias().to_vec(),
            decoder: c.decoder().clone(),
            decoder_bias: c.decoder_bias().to_vec(),
            skip: c.skip().cloned(),
        };
        push_set(&mut ar, "", &weights);
        push_set(&mut ar, "adam.m.", &self.state.m);
        push_set(&mut ar, "adam.v.", &self.state.v);
        Ok(ar)
    }

    pub fn from_archive(ar: &TensorArchive) -> Result<Self> {
        ar.expect_kind(KIND)?;
        let body: CheckpointBody = serde_json::from_value(ar.body.clone())?;
        let cfg = body.coder;
        cfg.validate()?;
        let w: Gradients<T> = take_set(ar, "", &cfg)?;
        let coder = SparseCoder::from_parts(cfg, w.encoder, w.encoder_bias, w.decoder, w.decoder_bias, w.skip)?;
        check_dim("last_fired", cfg.n_latents, body.last_fired.len())?;
        let state = TrainState {
            m: take_set(ar, "adam.m.", &cfg)?,
            v: take_set(ar, "adam.v.", &cfg)?,
            step: body.step,
            tokens_seen: body.tokens_seen,
            last_fired: body.last_fired,
        };
        if state.last_fired.iter().flatten().any(|&t| t > state.tokens_seen) {
            return Err(Error::InvalidConfig("last_fired exceeds tokens_seen".into()));
        }
        Ok(Self {
            coder,
            state,
            train: body.train,
            data_view: body.data_view,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&TensorArchive::read(path)?)
    }
}

pub fn save_checkpoint<T: Scalar>(
    coder: &SparseCoder<T>,
    state: &TrainState<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    Checkpoint::new(coder.clone(), state.clone()).save(path)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(SparseCoder<T>, TrainState<T>)> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.coder, ck.state))
}
