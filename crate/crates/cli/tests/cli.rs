// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tcoder_core::shardio::write_shard;
use tcoder_core::ShardRow;

fn tcoder(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcoder"))
        .current_dir(dir)
        .env_remove("TCODER_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn tcoder")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = tcoder(dir, args);
    assert!(
        out.status.success(),
        "tcoder {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn report(path: &Path) -> Value {
    let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    v["report"].clone()
}

fn losses(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["loss"].as_f64().unwrap())
        .collect()
}

#[test]
fn train_skip_writes_checkpoint_and_descending_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "planted", "--rows", "4000", "--d-in", "16", "--d-out", "16", "--out-dir", "data"]);
    ok(d, &["train", "--data", "data", "--arch", "skip", "--k", "32", "--n-latents", "64", "--steps", "300", "--out-dir", "runs"]);
    let run = d.join("runs/skip-k32-n64");
    assert!(run.join("coder.ckpt").is_file());
    assert!(run.join("manifest-train.json").is_file());
    let curve = losses(&run.join("loss.jsonl"));
    assert_eq!(curve.len(), 300);
    let head: f64 = curve[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = curve[290..].iter().sum::<f64>() / 10.0;
    assert!(tail < 0.5 * head, "{head} -> {tail}");
}

#[test]
fn identity_fit_explains_all_variance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let rows: Vec<ShardRow<f32>> = (0..2000)
        .map(|i| {
            let x: Vec<f32> = (0..8).map(|j| ((i * 7 + j * 13) % 17) as f32 / 4.0 - 2.0).collect();
            ShardRow::new(x.clone(), x)
        })
        .collect();
    write_shard(rows, d.join("id.acts")).unwrap();
    ok(d, &["train", "--data", "id.acts", "--arch", "skip", "--k", "2", "--n-latents", "16", "--steps", "1500", "--out-dir", "runs"]);
    ok(d, &["eval", "--checkpoint", "runs/skip-k2-n16/coder.ckpt", "--data", "id.acts", "--fvu"]);
    let r = report(&d.join("runs/skip-k2-n16/fvu.json"));
    let pct = r["variance_explained_pct"].as_f64().unwrap();
    assert!(pct > 99.9, "{pct}");
}

#[test]
fn convert_plain_transcoder_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "planted", "--rows", "500", "--d-in", "8", "--d-out", "8", "--out-dir", "data"]);
    ok(d, &["train", "--data", "data", "--arch", "transcoder", "--k", "4", "--n-latents", "16", "--steps", "5", "--out-dir", "runs"]);
    let out = tcoder(d, &["convert", "--checkpoint", "runs/transcoder-k4-n16/coder.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("requires skip architecture"), "{stderr}");
    let line: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["error"], "requires_skip");
    assert!(!d.join("runs/transcoder-k4-n16/coder-residual.ckpt").exists());

    ok(d, &["train", "--data", "data", "--arch", "skip", "--k", "4", "--n-latents", "16", "--steps", "5", "--out-dir", "runs"]);
    ok(d, &["convert", "--checkpoint", "runs/skip-k4-n16/coder.ckpt"]);
    assert!(d.join("runs/skip-k4-n16/coder-residual.ckpt").is_file());
    assert!(d.join("runs/skip-k4-n16/manifest-convert.json").is_file());
}

fn pipeline(d: &Path) {
    ok(d, &["synth", "toylm", "--tokens", "3000", "--seed", "4", "--out-dir", "toy"]);
    ok(d, &["train", "--data", "toy/acts.acts", "--arch", "skip,sae", "--k", "4,8", "--n-latents", "48", "--steps", "150", "--seed", "4", "--out-dir", "runs"]);
    for run in ["skip-k4-n48", "skip-k8-n48", "sae-k4-n48", "sae-k8-n48"] {
        let ck = format!("runs/{run}/coder.ckpt");
        ok(d, &["eval", "--checkpoint", &ck, "--data", "toy/acts.acts", "--model", "toy/model.tck", "--tokens", "toy/tokens.toks", "--all"]);
    }
    ok(d, &["sample", "--checkpoint", "runs/skip-k8-n48/coder.ckpt", "--data", "toy/acts.acts", "--tokens", "toy/tokens.toks", "--latents", "0,1,2"]);
    ok(d, &["report", "--runs", "runs", "--plot", "--out-dir", "summary"]);
}

#[test]
fn pipeline_reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let mut files = vec![
        "toy/acts.acts".to_owned(),
        "toy/tokens.toks".into(),
        "toy/model.tck".into(),
        "summary/summary.json".into(),
        "summary/density.svg".into(),
        "summary/pareto.svg".into(),
        "runs/skip-k8-n48/examples.json".into(),
    ];
    for run in ["skip-k4-n48", "skip-k8-n48", "sae-k4-n48", "sae-k8-n48"] {
        for f in ["coder.ckpt", "loss.jsonl", "fvu.json", "density.json", "patch.json"] {
            files.push(format!("runs/{run}/{f}"));
        }
    }
    for f in &files {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let summary = report(&a.path().join("summary/summary.json"));
    assert_eq!(summary["runs"].as_array().unwrap().len(), 4);
    // SAE rows reconstruct the MLP output, so patching still applies.
    let patch = report(&a.path().join("runs/sae-k8-n48/patch.json"));
    assert!(patch["delta_ce"].as_f64().unwrap().is_finite());
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(tcoder(d, &["train"]).status.code(), Some(2));
    assert_eq!(tcoder(d, &["train", "--data", "missing.acts"]).status.code(), Some(2));
    assert_eq!(tcoder(d, &["train", "--no-such-flag"]).status.code(), Some(2));
    fs::write(d.join("bad.toml"), "[train]\nstep = 3\n").unwrap();
    let out = tcoder(d, &["--config", "bad.toml", "train", "--data", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "planted", "--rows", "300", "--d-in", "6", "--d-out", "6", "--out-dir", "data"]);
    fs::write(
        d.join("run.toml"),
        "out_dir = \"from-config\"\n[train]\ndata = \"data\"\narch = [\"transcoder\"]\nk = [2]\nn_latents = [8]\nsteps = 4\n",
    )
    .unwrap();
    ok(d, &["--config", "run.toml", "train", "--steps", "9"]);
    let curve = losses(&d.join("from-config/transcoder-k2-n8/loss.jsonl"));
    assert_eq!(curve.len(), 9);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(d.join("from-config/transcoder-k2-n8/manifest-train.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["steps"], 9);
    assert_eq!(manifest["config"]["arch"][0], "transcoder");
    assert!(manifest["created_unix"].as_u64().is_some());
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = Command::new(env!("CARGO_BIN_EXE_tcoder"))
        .current_dir(d)
        .env("TCODER_OUT_DIR", "env-out")
        .args(["synth", "planted", "--rows", "10", "--d-in", "4", "--d-out", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("env-out/planted.acts").is_file());
    assert!(d.join("env-out/manifest-synth-planted.json").is_file());
}

#[test]
fn score_reads_judged_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let lines: String = (0..10)
        .map(|i| format!("{{\"id\":\"e{i}\",\"ground_truth\":{},\"judged\":{}}}\n", i < 5, i < 5))
        .collect();
    fs::write(d.join("det.jsonl"), &lines).unwrap();
    fs::write(d.join("fuzz.jsonl"), "{\"id\":\"a\",\"ground_truth\":true,\"judged\":false}\n").unwrap();
    ok(d, &["score", "--detection", "det.jsonl", "--fuzzing", "fuzz.jsonl", "--out-dir", "s"]);
    let r = report(&d.join("s/scores.json"));
    assert_eq!(r["detection"], 1.0);
    assert_eq!(r["fuzzing"], 0.0);

    fs::write(d.join("one.jsonl"), "{\"id\":\"a\",\"ground_truth\":true,\"judged\":true}\n").unwrap();
    let out = tcoder(d, &["score", "--detection", "one.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs_both_classes"));
}
