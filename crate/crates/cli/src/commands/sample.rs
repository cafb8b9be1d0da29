// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::json;
use tcoder_core::evalsuite::{latent_activations, sample_latent_examples, LatentExamples, SamplingConfig};
use tcoder_core::shardio::{read_tokens, Checkpoint, Viewed};
use tcoder_core::{Error, Scalar, ShardDataset};

use crate::args::{Overlay, SampleArgs};
use crate::common::{create_dir, existing, parent_or_cwd, require, usage, with_checkpoint, write_manifest, write_report, AnyCheckpoint};

#[derive(Serialize)]
struct ExampleReport {
    config: SamplingConfig,
    latents: Vec<LatentExamples>,
    /// Requested latents with no positive activation on the corpus.
    dead: Vec<usize>,
}

fn defaults() -> SampleArgs {
    let c = SamplingConfig::default();
    SampleArgs {
        n_quantiles: Some(c.n_quantiles),
        n_per_quantile: Some(c.n_per_quantile),
        n_non_activating: Some(c.n_non_activating),
        window: Some(c.window),
        record_offset: Some(c.record_offset),
        seed: Some(0),
        ..SampleArgs::default()
    }
}

fn sample<T: Scalar>(ck: Checkpoint<T>, a: &SampleArgs, config: &SamplingConfig, out: &Path) -> Result<String> {
    let tokens = read_tokens(a.tokens.as_ref().unwrap())?;
    let ds = ShardDataset::open_path(a.data.as_ref().unwrap())?;
    if ds.n_rows() != tokens.len() as u64 {
        return Err(usage(format!("--data has {} rows but --tokens has {} tokens", ds.n_rows(), tokens.len())));
    }
    let latents = a
        .latents
        .clone()
        .unwrap_or_else(|| (0..ck.coder.n_latents().min(8)).collect());
    let mut data = Viewed {
        inner: ds.cursor::<T>(),
        view: ck.data_view,
    };
    let traces = latent_activations(&ck.coder, &mut data, &latents)?;
    let mut report = ExampleReport {
        config: config.clone(),
        latents: Vec::new(),
        dead: Vec::new(),
    };
    for (&l, trace) in latents.iter().zip(&traces) {
        match sample_latent_examples(&tokens, trace, l, config) {
            Ok(ex) => report.latents.push(ex),
            Err(Error::DeadLatent(_)) => {
                tracing::warn!(latent = l, "no positive activations, skipped");
                report.dead.push(l);
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_report(out, "examples", &report)
}

pub fn run(args: SampleArgs, out_dir: Option<PathBuf>) -> Result<()> {
    let a = args.overlay(defaults());
    let ck_path = require(a.checkpoint.clone(), "checkpoint")?;
    let data = require(a.data.clone(), "data")?;
    let tokens = require(a.tokens.clone(), "tokens")?;
    existing(&ck_path, "checkpoint")?;
    existing(&data, "data")?;
    existing(&tokens, "tokens")?;
    let config = SamplingConfig {
        n_quantiles: a.n_quantiles.unwrap(),
        n_per_quantile: a.n_per_quantile.unwrap(),
        n_non_activating: a.n_non_activating.unwrap(),
        window: a.window.unwrap(),
        record_offset: a.record_offset.unwrap(),
        seed: a.seed.unwrap(),
    };
    let out = out_dir.unwrap_or_else(|| parent_or_cwd(&ck_path));
    create_dir(&out)?;
    let ck = AnyCheckpoint::load(&ck_path)?;
    let name = with_checkpoint!(ck, sample(&a, &config, &out))?;
    write_manifest(&out, "sample", &a, a.seed, &[&ck_path, &data, &tokens], &[name], json!({}))
}
