// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use anyhow::Result;
use serde_json::json;
use tcoder_core::synth::{
    gen_planted, gen_planted_sharded, gen_toy_corpus, write_toy_corpus, InputDist, PlantedDictionary, PlantedSpec,
    ToyLm, ToyLmConfig,
};
use tcoder_core::shardio::ShardWriter;
use tcoder_core::Scalar;

use crate::args::{DtypeArg, InputDistArg, Overlay, PlantedArgs, SamplingArg, ToyLmArgs};
use crate::common::{create_dir, usage, write_manifest, DEFAULT_OUT_DIR};

fn planted_defaults() -> PlantedArgs {
    PlantedArgs {
        d_in: Some(32),
        d_out: Some(32),
        n_features: Some(64),
        feature_prob: Some(0.05),
        linear_scale: Some(1.0),
        offset_scale: Some(0.5),
        rows: Some(100_000),
        rows_per_file: Some(0),
        input_dist: Some(InputDistArg::Gaussian),
        noise: Some(0.05),
        probe_rows: Some(0),
        seed: Some(0),
    }
}

pub fn planted(args: PlantedArgs, out_dir: Option<PathBuf>) -> Result<()> {
    let a = args.overlay(planted_defaults());
    let out = out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let rows = a.rows.unwrap();
    if rows == 0 {
        return Err(usage("--rows must be >= 1"));
    }
    let seed = a.seed.unwrap();
    let spec = PlantedSpec {
        d_in: a.d_in.unwrap(),
        d_out: a.d_out.unwrap(),
        n_features: a.n_features.unwrap(),
        feature_prob: a.feature_prob.unwrap(),
        linear_scale: a.linear_scale.unwrap(),
        offset_scale: a.offset_scale.unwrap(),
        seed,
    };
    let dict = PlantedDictionary::random(&spec)?;
    let dist = match a.input_dist.unwrap() {
        InputDistArg::Gaussian => InputDist::Gaussian,
        InputDistArg::Sparse => InputDist::SparseCode { noise: a.noise.unwrap() },
    };
    create_dir(&out)?;
    dict.save(out.join("dictionary.tck"))?;
    // The row stream gets its own seed so the dictionary can be reused.
    let row_seed = seed.wrapping_add(1);
    let mut outputs = vec!["dictionary.tck".to_owned()];
    match a.rows_per_file.unwrap() {
        0 => {
            gen_planted(&dict, rows, dist, row_seed, out.join("planted.acts"))?;
            outputs.push("planted.acts".into());
        }
        per_file => {
            for (path, _) in gen_planted_sharded(&dict, rows, dist, row_seed, &out, "planted", per_file)? {
                outputs.push(path.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
    }
    let probe_seed = seed.wrapping_add(2);
    let probe_rows = a.probe_rows.unwrap();
    if probe_rows > 0 {
        // Kept out of `out` itself so the directory still opens as one dataset.
        create_dir(&out.join("probe"))?;
        let mut w = ShardWriter::create(out.join("probe").join("probe.acts"), dict.d_in(), 1)?;
        for row in dict.rows(dist, probe_seed).take(probe_rows as usize) {
            let label = if dict.feature_activations(&row.input)[0] > 0.0 { 1.0 } else { 0.0 };
            w.push_parts(&row.input, &[label])?;
        }
        w.finish()?;
        outputs.push("probe/probe.acts".into());
    }
    let details = json!({ "row_seed": row_seed, "probe_seed": probe_seed });
    write_manifest(&out, "synth planted", &a, Some(seed), &[], &outputs, details)
}

fn toylm_defaults() -> ToyLmArgs {
    let c = ToyLmConfig::default();
    ToyLmArgs {
        vocab: Some(c.vocab),
        d_model: Some(c.d_model),
        d_mlp: Some(c.d_mlp),
        logit_scale: Some(c.logit_scale),
        tokens: Some(50_000),
        sampling: Some(SamplingArg::Model),
        dtype: Some(DtypeArg::F64),
        seed: Some(0),
    }
}

fn toylm_typed<T: Scalar>(a: &ToyLmArgs, out: &std::path::Path) -> Result<()> {
    let seed = a.seed.unwrap();
    let model = ToyLm::<T>::new(ToyLmConfig {
        vocab: a.vocab.unwrap(),
        d_model: a.d_model.unwrap(),
        d_mlp: a.d_mlp.unwrap(),
        logit_scale: a.logit_scale.unwrap(),
        seed,
    })?;
    let corpus = gen_toy_corpus(&model, a.tokens.unwrap(), a.sampling.unwrap().into(), seed.wrapping_add(1))?;
    create_dir(out)?;
    model.save(out.join("model.tck"))?;
    write_toy_corpus(&corpus, out.join("tokens.toks"), out.join("acts.acts"))?;
    let outputs = ["model.tck", "tokens.toks", "acts.acts"].map(String::from);
    write_manifest(out, "synth toylm", a, Some(seed), &[], &outputs, json!({ "corpus_seed": seed.wrapping_add(1) }))
}

pub fn toylm(args: ToyLmArgs, out_dir: Option<PathBuf>) -> Result<()> {
    let a = args.overlay(toylm_defaults());
    let out = out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    match a.dtype.unwrap() {
        DtypeArg::F32 => toylm_typed::<f32>(&a, &out),
        DtypeArg::F64 => toylm_typed::<f64>(&a, &out),
    }
}
