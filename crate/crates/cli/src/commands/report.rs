// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tcoder_core::evalsuite::{DensityHistogram, FvuReport, LatentStatsReport, PatchReport};
use tcoder_core::synth::RecoveryReport;
use tcoder_core::CoderConfig;

use crate::args::ReportArgs;
use crate::common::{create_dir, existing, usage, write_manifest, write_report, DEFAULT_OUT_DIR};
use crate::plot::{Chart, Series};

#[derive(Debug, Serialize)]
struct RunSummary {
    /// Run directory relative to the searched root.
    run: String,
    coder: CoderConfig,
    fvu: Option<f64>,
    variance_explained_pct: Option<f64>,
    delta_ce: Option<f64>,
    delta_ce_pct: Option<f64>,
    n_dead: Option<usize>,
    recovery: Option<f64>,
    #[serde(skip)]
    histogram: Option<DensityHistogram>,
}

#[derive(Serialize)]
struct Summary<'a> {
    runs: &'a [RunSummary],
}

#[derive(Deserialize)]
struct Envelope<R> {
    report: R,
}

fn read_report<R: for<'de> Deserialize<'de>>(dir: &Path, kind: &str) -> Result<Option<R>> {
    let path = dir.join(format!("{kind}.json"));
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let env: Envelope<R> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(env.report))
}

/// Directories under `root` (inclusive) holding an eval manifest, sorted.
fn eval_dirs(root: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if root.join("manifest-eval.json").is_file() {
        found.push(root.to_path_buf());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("listing {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        eval_dirs(&c, found)?;
    }
    Ok(())
}

fn summarize(root: &Path, dir: &Path) -> Result<RunSummary> {
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest-eval.json"))?)?;
    let coder: CoderConfig = serde_json::from_value(manifest["details"]["coder"].clone())
        .with_context(|| format!("{}: manifest lacks coder config", dir.display()))?;
    let fvu: Option<FvuReport> = read_report(dir, "fvu")?;
    let patch: Option<PatchReport> = read_report(dir, "patch")?;
    let density: Option<LatentStatsReport> = read_report(dir, "density")?;
    let recovery: Option<RecoveryReport> = read_report(dir, "recovery")?;
    let rel = dir.strip_prefix(root).unwrap_or(dir).to_string_lossy().replace('\\', "/");
    Ok(RunSummary {
        run: if rel.is_empty() { ".".into() } else { rel },
        coder,
        fvu: fvu.as_ref().map(|r| r.fvu),
        variance_explained_pct: fvu.as_ref().map(|r| r.variance_explained_pct),
        delta_ce: patch.as_ref().map(|r| r.delta_ce),
        delta_ce_pct: patch.as_ref().map(|r| r.delta_ce_pct),
        n_dead: density.as_ref().map(|r| r.n_dead),
        recovery: recovery.map(|r| r.score),
        histogram: density.map(|r| r.histogram),
    })
}

fn density_chart(runs: &[RunSummary]) -> Chart<'static> {
    let series = runs
        .iter()
        .filter_map(|r| {
            let h = r.histogram.as_ref()?;
            let width = (h.log10_max - h.log10_min) / h.counts.len() as f64;
            let mut points = vec![(h.log10_min, 0.0)];
            for (i, &c) in h.counts.iter().enumerate() {
                points.push((h.log10_min + i as f64 * width, c as f64));
                points.push((h.log10_min + (i + 1) as f64 * width, c as f64));
            }
            Some(Series {
                label: format!("{} (dead {})", r.run, h.dead),
                points,
            })
        })
        .collect();
    Chart {
        title: "Latent density",
        x_label: "log10 density",
        y_label: "latents",
        log2_x: false,
        markers: false,
        series,
    }
}

/// Reconstruction against k, one line per (arch, n_latents).
fn pareto_chart(runs: &[RunSummary]) -> Chart<'static> {
    let use_fvu = runs.iter().any(|r| r.fvu.is_some());
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in runs {
        let y = if use_fvu { r.fvu } else { r.delta_ce };
        if let Some(y) = y {
            groups
                .entry(format!("{} n={}", r.coder.arch, r.coder.n_latents))
                .or_default()
                .push(((r.coder.k as f64).log2(), y));
        }
    }
    let series = groups
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect();
    Chart {
        title: "Sparsity vs reconstruction",
        x_label: "k",
        y_label: if use_fvu { "FVU" } else { "delta CE (nats)" },
        log2_x: true,
        markers: true,
        series,
    }
}

pub fn run(a: ReportArgs, out_dir: Option<PathBuf>) -> Result<()> {
    let roots = a.runs.clone().unwrap_or_else(|| vec![out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))]);
    for r in &roots {
        existing(r, "runs")?;
    }
    let mut runs = Vec::new();
    for root in &roots {
        let mut dirs = Vec::new();
        eval_dirs(root, &mut dirs)?;
        for d in dirs {
            runs.push(summarize(root, &d)?);
        }
    }
    if runs.is_empty() {
        return Err(usage("no evaluated runs found (looked for manifest-eval.json)"));
    }
    let out = out_dir.unwrap_or_else(|| roots[0].clone());
    create_dir(&out)?;
    let mut outputs = vec![write_report(&out, "summary", &Summary { runs: &runs })?];
    if a.plot {
        fs::write(out.join("density.svg"), density_chart(&runs).to_svg())?;
        fs::write(out.join("pareto.svg"), pareto_chart(&runs).to_svg())?;
        outputs.extend(["density.svg".to_owned(), "pareto.svg".to_owned()]);
    }
    let inputs: Vec<&Path> = roots.iter().map(PathBuf::as_path).collect();
    write_manifest(&out, "report", &a, None, &inputs, &outputs, json!({ "runs": runs.len() }))
}
