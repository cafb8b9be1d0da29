// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde_json::json;
use tcoder_core::shardio::Checkpoint;
use tcoder_core::{Scalar, TrainState};

use crate::args::ConvertArgs;
use crate::common::{create_dir, existing, parent_or_cwd, require, with_checkpoint, write_manifest, AnyCheckpoint};

/// The converted coder predicts `x + mlp(x)`, so optimizer state from the
/// original objective is dropped.
fn convert<T: Scalar>(ck: Checkpoint<T>, path: &Path) -> Result<()> {
    let coder = ck.coder.convert_to_residual()?;
    let state = TrainState::new(&coder);
    let mut out = Checkpoint::new(coder, state);
    out.data_view = ck.data_view;
    out.save(path)?;
    Ok(())
}

pub fn run(a: ConvertArgs, out_dir: Option<PathBuf>) -> Result<()> {
    let ck_path = require(a.checkpoint.clone(), "checkpoint")?;
    existing(&ck_path, "checkpoint")?;
    let out = out_dir.unwrap_or_else(|| parent_or_cwd(&ck_path));
    let stem = ck_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "coder".into());
    let name = format!("{stem}-residual.ckpt");
    let ck = AnyCheckpoint::load(&ck_path)?;
    create_dir(&out)?;
    with_checkpoint!(ck, convert(&out.join(&name)))?;
    write_manifest(&out, "convert", &a, None, &[&ck_path], &[name], json!({ "target": "input plus stored target" }))
}
