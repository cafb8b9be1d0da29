// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::json;
use tcoder_core::evalsuite::{fvu, latent_stats, logistic_baseline, patch_delta_ce_viewed, sparse_probe, ProbeConfig, ProbeReport};
use tcoder_core::shardio::{read_tokens, Checkpoint, Viewed};
use tcoder_core::synth::{recovery_score, PlantedDictionary, ToyLm};
use tcoder_core::{Scalar, ShardDataset};

use crate::args::{EvalArgs, Overlay};
use crate::common::{create_dir, existing, parent_or_cwd, require, usage, with_checkpoint, write_manifest, write_report, AnyCheckpoint};

#[derive(Serialize)]
struct ProbeComparison {
    sparse: ProbeReport,
    baseline: ProbeReport,
}

struct Plan {
    fvu: bool,
    density: bool,
    patch: bool,
    recovery: bool,
    probe: bool,
}

fn plan(a: &EvalArgs) -> Result<Plan> {
    let has = |p: &Option<PathBuf>| p.is_some();
    let need = |on: bool, ok: bool, what: &str, flags: &str| {
        if on && !ok {
            Err(usage(format!("--{what} needs {flags}")))
        } else {
            Ok(())
        }
    };
    need(a.fvu, has(&a.data), "fvu", "--data")?;
    need(a.density, has(&a.data), "density", "--data")?;
    need(a.patch, has(&a.model) && has(&a.tokens), "patch", "--model and --tokens")?;
    need(a.recovery, has(&a.dictionary), "recovery", "--dictionary")?;
    need(a.probe, has(&a.probe_data), "probe", "--probe-data")?;
    let p = Plan {
        fvu: a.fvu || (a.all && has(&a.data)),
        density: a.density || (a.all && has(&a.data)),
        patch: a.patch || (a.all && has(&a.model) && has(&a.tokens)),
        recovery: a.recovery || (a.all && has(&a.dictionary)),
        probe: a.probe || (a.all && has(&a.probe_data)),
    };
    if !(p.fvu || p.density || p.patch || p.recovery || p.probe) {
        return Err(usage("nothing to evaluate: pass --fvu, --density, --patch, --recovery, --probe or --all with their inputs"));
    }
    Ok(p)
}

fn evaluate<T: Scalar>(ck: Checkpoint<T>, a: &EvalArgs, plan: &Plan, out: &Path) -> Result<Vec<String>> {
    let coder = &ck.coder;
    let mut written = Vec::new();
    if plan.fvu || plan.density {
        let ds = ShardDataset::open_path(a.data.as_ref().unwrap())?;
        let mut data = Viewed {
            inner: ds.cursor::<T>(),
            view: ck.data_view,
        };
        if plan.fvu {
            written.push(write_report(out, "fvu", &fvu(coder, &mut data)?)?);
        }
        if plan.density {
            written.push(write_report(out, "density", &latent_stats(coder, &mut data)?)?);
        }
    }
    if plan.patch {
        let model = ToyLm::<T>::load(a.model.as_ref().unwrap())?;
        let tokens = read_tokens(a.tokens.as_ref().unwrap())?;
        let report = patch_delta_ce_viewed(&model, coder, &tokens, ck.data_view)?;
        written.push(write_report(out, "patch", &report)?);
    }
    if plan.recovery {
        let dict = PlantedDictionary::load(a.dictionary.as_ref().unwrap())?;
        written.push(write_report(out, "recovery", &recovery_score(coder, &dict)?)?);
    }
    if plan.probe {
        let ds = ShardDataset::open_path(a.probe_data.as_ref().unwrap())?;
        if ds.d_out() != 1 {
            return Err(usage(format!("--probe-data must have a single label column, found {}", ds.d_out())));
        }
        let data: Vec<(Vec<T>, bool)> = ds
            .read_all::<T>()?
            .into_iter()
            .map(|r| (r.input, r.target[0] >= T::lit(0.5)))
            .collect();
        let config = ProbeConfig {
            m: a.probe_m.unwrap_or(8).min(coder.n_latents()),
            seed: a.seed.unwrap_or(0),
            ..ProbeConfig::default()
        };
        let report = ProbeComparison {
            sparse: sparse_probe(coder, &data, &config)?,
            baseline: logistic_baseline(&data, &config)?,
        };
        written.push(write_report(out, "probe", &report)?);
    }
    Ok(written)
}

pub fn run(args: EvalArgs, out_dir: Option<PathBuf>) -> Result<()> {
    let a = args.overlay(EvalArgs {
        seed: Some(0),
        probe_m: Some(8),
        ..EvalArgs::default()
    });
    let ck_path = require(a.checkpoint.clone(), "checkpoint")?;
    let plan = plan(&a)?;
    existing(&ck_path, "checkpoint")?;
    for (p, flag) in [
        (&a.data, "data"),
        (&a.model, "model"),
        (&a.tokens, "tokens"),
        (&a.dictionary, "dictionary"),
        (&a.probe_data, "probe-data"),
    ] {
        if let Some(p) = p {
            existing(p, flag)?;
        }
    }
    let out = out_dir.unwrap_or_else(|| parent_or_cwd(&ck_path));
    create_dir(&out)?;
    let ck = AnyCheckpoint::load(&ck_path)?;
    let (coder_cfg, view) = match &ck {
        AnyCheckpoint::F32(c) => (*c.coder.config(), c.data_view),
        AnyCheckpoint::F64(c) => (*c.coder.config(), c.data_view),
    };
    let written = with_checkpoint!(ck, evaluate(&a, &plan, &out))?;
    let inputs: Vec<&Path> = [&a.checkpoint, &a.data, &a.model, &a.tokens, &a.dictionary, &a.probe_data]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    write_manifest(&out, "eval", &a, a.seed, &inputs, &written, json!({ "coder": coder_cfg, "data_view": view }))
}
