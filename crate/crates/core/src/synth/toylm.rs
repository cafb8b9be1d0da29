// SPDX-License-Identifier: MIT OR Apache-2.0

//! A one-block next-token model used as the host for patching experiments:
//!
//! ```text
//! h      = W_pre · E[token]
//! logits = W_U · (h + W_out · relu(W_in · h))
//! ```
//!
//! The MLP block `h ↦ W_out · relu(W_in · h)` is the component a transcoder
//! replaces.

use std::path::Path;

use rand::SeedableRng;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::shardio::{write_tokens, ShardHeader, ShardRow, ShardWriter, TensorArchive};
use crate::tensor::Matrix;

const KIND: &str = "toy_lm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyLmConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    /// Multiplier on the unembedding; larger values make next-token
    /// distributions sharper.
    pub logit_scale: f64,
    pub seed: u64,
}

impl Default for ToyLmConfig {
    fn default() -> Self {
        Self {
            vocab: 64,
            d_model: 32,
            d_mlp: 64,
            logit_scale: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm<T> {
    config: ToyLmConfig,
    /// `vocab × d_model`
    pub embed: Matrix<T>,
    /// `d_model × d_model`
    pub pre: Matrix<T>,
    /// `d_mlp × d_model`
    pub w_in: Matrix<T>,
    /// `d_model × d_mlp`
    pub w_out: Matrix<T>,
    /// `vocab × d_model`
    pub unembed: Matrix<T>,
}

impl<T: Scalar> ToyLm<T> {
    pub fn new(config: ToyLmConfig) -> Result<Self> {
        if config.vocab < 2 || config.d_model == 0 || config.d_mlp == 0 {
            return Err(Error::InvalidConfig(
                "toy model needs vocab >= 2 and nonzero widths".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut gauss = |rows: usize, cols: usize, std: f64| {
            Matrix::from_fn(rows, cols, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                T::lit(std * g)
            })
        };
        let (v, d, m) = (config.vocab, config.d_model, config.d_mlp);
        let embed = gauss(v, d, 1.0);
        let pre = gauss(d, d, 1.0 / (d as f64).sqrt());
        let w_in = gauss(m, d, 1.0 / (d as f64).sqrt());
        let w_out = gauss(d, m, 2.0 / (m as f64).sqrt());
        let unembed = gauss(v, d, config.logit_scale / (d as f64).sqrt());
        Ok(Self {
            config,
            embed,
            pre,
            w_in,
            w_out,
            unembed,
        })
    }

    pub fn config(&self) -> &ToyLmConfig {
        &self.config
    }

    pub fn vocab(&self) -> usize {
        self.config.vocab
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    fn check_token(&self, token: u32) -> Result<usize> {
        let t = token as usize;
        if t >= self.config.vocab {
            return Err(Error::InvalidConfig(format!(
                "token {token} outside vocabulary of {}",
                self.config.vocab
            )));
        }
        Ok(t)
    }

    /// Input to the MLP block at a position holding `token`.
    pub fn mlp_input(&self, token: u32) -> Result<Vec<T>> {
        let t = self.check_token(token)?;
        Ok(self.pre.matvec(self.embed.row(t)))
    }

    pub fn mlp(&self, h: &[T]) -> Result<Vec<T>> {
        check_dim("mlp input", self.config.d_model, h.len())?;
        let mut hidden = self.w_in.matvec(h);
        for a in &mut hidden {
            *a = a.max(T::zero());
        }
        Ok(self.w_out.matvec(&hidden))
    }

    /// Logits given the MLP input and a (possibly substituted) MLP output.
    pub fn logits_with(&self, h: &[T], mlp_out: &[T]) -> Result<Vec<T>> {
        check_dim("mlp input", self.config.d_model, h.len())?;
        check_dim("mlp output", self.config.d_model, mlp_out.len())?;
        let resid: Vec<T> = h.iter().zip(mlp_out).map(|(&a, &b)| a + b).collect();
        Ok(self.unembed.matvec(&resid))
    }

    pub fn logits(&self, token: u32) -> Result<Vec<T>> {
        let h = self.mlp_input(token)?;
        let out = self.mlp(&h)?;
        self.logits_with(&h, &out)
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut ar = TensorArchive::new(KIND, T::DTYPE, serde_json::to_value(self.config)?);
        ar.push_matrix("embed", &self.embed);
        ar.push_matrix("pre", &self.pre);
        ar.push_matrix("w_in", &self.w_in);
        ar.push_matrix("w_out", &self.w_out);
        ar.push_matrix("unembed", &self.unembed);
        Ok(ar)
    }

    pub fn from_archive(ar: &TensorArchive) -> Result<Self> {
        ar.expect_kind(KIND)?;
        let config: ToyLmConfig = serde_json::from_value(ar.body.clone())?;
        let (v, d, m) = (config.vocab, config.d_model, config.d_mlp);
        Ok(Self {
            config,
            embed: ar.matrix("embed", v, d)?,
            pre: ar.matrix("pre", d, d)?,
            w_in: ar.matrix("w_in", m, d)?,
            w_out: ar.matrix("w_out", d, m)?,
            unembed: ar.matrix("unembed", v, d)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&TensorArchive::read(path)?)
    }
}

/// Next-token cross-entropy in nats, computed in `f64`.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> f64 {
    let max = logits.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln();
    lse - logits[target].as_f64()
}

fn softmax_weights<T: Scalar>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    logits.iter().map(|x| (x.as_f64() - max).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSampling {
    Uniform,
    /// Sample each next token from the model's own distribution.
    #[default]
    Model,
}

/// Token stream plus the MLP block's (input, output) at every position.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus<T> {
    pub tokens: Vec<u32>,
    pub rows: Vec<ShardRow<T>>,
}

pub fn gen_toy_corpus<T: Scalar>(
    model: &ToyLm<T>,
    n_tokens: usize,
    sampling: CorpusSampling,
    seed: u64,
) -> Result<ToyCorpus<T>> {
    if n_tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = model.vocab();
    let uniform = WeightedIndex::new(vec![1.0; vocab]).expect("vocab >= 2");
    let mut tokens = Vec::with_capacity(n_tokens);
    let mut rows = Vec::with_capacity(n_tokens);
    let mut tok = uniform.sample(&mut rng) as u32;
    for i in 0..n_tokens {
        let h = model.mlp_input(tok)?;
        let out = model.mlp(&h)?;
        tokens.push(tok);
        if i + 1 < n_tokens {
            tok = match sampling {
                CorpusSampling::Uniform => uniform.sample(&mut rng) as u32,
                CorpusSampling::Model => {
                    let logits = model.logits_with(&h, &out)?;
                    WeightedIndex::new(softmax_weights(&logits))
                        .map_err(|e| Error::InvalidConfig(format!("degenerate logits: {e}")))?
                        .sample(&mut rng) as u32
                }
            };
        }
        rows.push(ShardRow::new(h, out));
    }
    Ok(ToyCorpus { tokens, rows })
}

/// Writes a corpus as a token file and an activation shard.
pub fn write_toy_corpus<T: Scalar>(
    corpus: &ToyCorpus<T>,
    tokens_path: impl AsRef<Path>,
    shard_path: impl AsRef<Path>,
) -> Result<ShardHeader> {
    write_tokens(&corpus.tokens, tokens_path)?;
    let first = corpus.rows.first().ok_or(Error::EmptyCorpus)?;
    let mut w = ShardWriter::create(shard_path, first.input.len(), first.target.len())?;
    for row in &corpus.rows {
        w.push(row)?;
    }
    w.finish()
}
