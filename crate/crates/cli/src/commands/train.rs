// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;
use tcoder_core::shardio::{Checkpoint, RowView, Viewed};
use tcoder_core::train::{init_from_data, train};
use tcoder_core::{Arch, CoderConfig, Scalar, ShardDataset, TrainConfig};

use crate::args::{ArchArg, DtypeArg, Overlay, SaeOn, TrainArgs};
use crate::common::{create_dir, existing, require, usage, write_manifest, DEFAULT_OUT_DIR};

fn defaults() -> TrainArgs {
    let t = TrainConfig::default();
    TrainArgs {
        data: None,
        arch: Some(vec![ArchArg::Skip]),
        k: Some(vec![32]),
        n_latents: Some(vec![256]),
        sae_on: Some(SaeOn::Target),
        dtype: Some(DtypeArg::F32),
        learning_rate: Some(t.learning_rate),
        beta1: Some(t.beta1),
        beta2: Some(t.beta2),
        epsilon: Some(t.epsilon),
        batch_size: Some(t.batch_size),
        steps: Some(t.n_steps),
        dead_token_window: Some(t.dead_token_window),
        log_every: Some(t.log_every),
        seed: Some(0),
    }
}

pub fn grid_dir_name(arch: Arch, k: usize, n_latents: usize) -> String {
    format!("{}-k{k}-n{n_latents}", arch.short_name())
}

struct Point {
    flag: ArchArg,
    arch: Arch,
    k: usize,
    n_latents: usize,
}

fn train_point<T: Scalar>(ds: &ShardDataset, p: &Point, view: RowView, tc: &TrainConfig, dir: &Path) -> Result<f64> {
    let mut data = Viewed {
        inner: ds.cursor::<T>(),
        view,
    };
    let (d_in, d_out) = view.dims((ds.d_in(), ds.d_out()));
    let cfg = CoderConfig {
        d_in,
        d_out,
        n_latents: p.n_latents,
        k: p.k,
        arch: p.arch,
        seed: tc.seed,
    };
    let coder = init_from_data::<T, _>(cfg, &mut data)?;
    let name = dir.file_name().unwrap().to_string_lossy().into_owned();
    let out = train(coder, &mut data, tc, |r| {
        tracing::info!(run = %name, step = r.step, loss = r.loss, dead = r.dead, "train");
    })?;

    let mut curve = BufWriter::new(fs::File::create(dir.join("loss.jsonl")).context("creating loss.jsonl")?);
    for r in &out.curve {
        serde_json::to_writer(&mut curve, r)?;
        curve.write_all(b"\n")?;
    }
    curve.flush()?;

    let final_loss = out.curve.last().map(|r| r.loss).unwrap_or(f64::NAN);
    let mut ck = Checkpoint::new(out.coder, out.state);
    ck.train = Some(tc.clone());
    ck.data_view = view;
    ck.save(dir.join("coder.ckpt"))?;
    Ok(final_loss)
}

pub fn run(args: TrainArgs, out_dir: Option<PathBuf>) -> Result<()> {
    let a = args.overlay(defaults());
    let data_path = require(a.data.clone(), "data")?;
    existing(&data_path, "data")?;
    let out = out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let (archs, ks, ns) = (a.arch.clone().unwrap(), a.k.clone().unwrap(), a.n_latents.clone().unwrap());
    if archs.is_empty() || ks.is_empty() || ns.is_empty() {
        return Err(usage("--arch, --k and --n-latents need at least one value each"));
    }
    let tc = TrainConfig {
        learning_rate: a.learning_rate.unwrap(),
        beta1: a.beta1.unwrap(),
        beta2: a.beta2.unwrap(),
        epsilon: a.epsilon.unwrap(),
        batch_size: a.batch_size.unwrap(),
        n_steps: a.steps.unwrap(),
        dead_token_window: a.dead_token_window.unwrap(),
        log_every: a.log_every.unwrap(),
        seed: a.seed.unwrap(),
    };
    tc.validate()?;
    let ds = ShardDataset::open_path(&data_path)?;

    let mut points = Vec::new();
    for &flag in &archs {
        for &k in &ks {
            for &n_latents in &ns {
                let arch = Arch::from(flag);
                // Check every grid point before spending time on any.
                let view = if arch == Arch::Sae { RowView::from(a.sae_on.unwrap()) } else { RowView::Pairs };
                let (d_in, d_out) = view.dims((ds.d_in(), ds.d_out()));
                CoderConfig {
                    d_in,
                    d_out,
                    n_latents,
                    k,
                    arch,
                    seed: tc.seed,
                }
                .validate()?;
                points.push((Point { flag, arch, k, n_latents }, view));
            }
        }
    }

    create_dir(&out)?;
    let mut runs = Vec::new();
    for (p, view) in &points {
        let name = grid_dir_name(p.arch, p.k, p.n_latents);
        let dir = out.join(&name);
        create_dir(&dir)?;
        let final_loss = match a.dtype.unwrap() {
            DtypeArg::F32 => train_point::<f32>(&ds, p, *view, &tc, &dir)?,
            DtypeArg::F64 => train_point::<f64>(&ds, p, *view, &tc, &dir)?,
        };
        let point_args = TrainArgs {
            arch: Some(vec![p.flag]),
            k: Some(vec![p.k]),
            n_latents: Some(vec![p.n_latents]),
            ..a.clone()
        };
        write_manifest(
            &dir,
            "train",
            &point_args,
            Some(tc.seed),
            &[&data_path],
            &["coder.ckpt".into(), "loss.jsonl".into()],
            json!({ "data_view": view, "final_loss": final_loss }),
        )?;
        runs.push(name);
    }
    write_manifest(&out, "train", &a, Some(tc.seed), &[&data_path], &runs, json!({ "grid_points": runs.len() }))
}
