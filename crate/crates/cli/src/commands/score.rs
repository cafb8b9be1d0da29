// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde_json::json;
use tcoder_core::evalsuite::{read_judged, ScoreReport};

use crate::args::ScoreArgs;
use crate::common::{create_dir, existing, usage, write_manifest, write_report, DEFAULT_OUT_DIR};

pub fn run(a: ScoreArgs, out_dir: Option<PathBuf>) -> Result<()> {
    if a.detection.is_none() && a.fuzzing.is_none() {
        return Err(usage("pass --detection and/or --fuzzing"));
    }
    for (p, flag) in [(&a.detection, "detection"), (&a.fuzzing, "fuzzing")] {
        if let Some(p) = p {
            existing(p, flag)?;
        }
    }
    let detection = a.detection.as_ref().map(read_judged).transpose()?;
    let fuzzing = a.fuzzing.as_ref().map(read_judged).transpose()?;
    let report = ScoreReport::new(detection.as_deref(), fuzzing.as_deref())?;
    let out = out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    create_dir(&out)?;
    let name = write_report(&out, "scores", &report)?;
    let inputs: Vec<&Path> = [&a.detection, &a.fuzzing].into_iter().flatten().map(PathBuf::as_path).collect();
    write_manifest(&out, "score", &a, None, &inputs, &[name], json!({}))
}
