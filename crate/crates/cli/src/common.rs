// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use tcoder_core::evalsuite::{report_json, REPORT_SCHEMA_VERSION};
use tcoder_core::shardio::{Checkpoint, TensorArchive};
use tcoder_core::Dtype;

pub const DEFAULT_OUT_DIR: &str = "tcoder-out";

/// Bad invocation: missing inputs, conflicting flags, malformed config.
/// Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing required --{flag}")))
}

pub fn existing(path: &Path, flag: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("--{flag}: {} does not exist", path.display())))
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes a report with the shared envelope and returns its file name.
pub fn write_report<R: Serialize>(dir: &Path, kind: &str, report: &R) -> Result<String> {
    let name = format!("{kind}.json");
    let text = report_json(kind, report)?;
    fs::write(dir.join(&name), text).with_context(|| format!("writing {name}"))?;
    Ok(name)
}

/// `manifest-<command>.json`: the resolved configuration (loadable as the
/// matching config-file table), versions, inputs, outputs and the only
/// timestamp any command writes.
pub fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    seed: Option<u64>,
    inputs: &[&Path],
    outputs: &[String],
    extra: serde_json::Value,
) -> Result<()> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "tool": "tcoder",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "seed": seed,
        "formats": { "shard": 1, "archive": 1, "tokens": 1, "report_schema": REPORT_SCHEMA_VERSION },
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "outputs": outputs,
        "details": extra,
        "created_unix": created,
    });
    let name = format!("manifest-{}.json", command.replace(' ', "-"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(&name), text).with_context(|| format!("writing {name}"))
}

pub enum AnyCheckpoint {
    F32(Checkpoint<f32>),
    F64(Checkpoint<f64>),
}

impl AnyCheckpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let ar = TensorArchive::read(path)?;
        Ok(match ar.dtype {
            Dtype::F32 => Self::F32(Checkpoint::from_archive(&ar)?),
            Dtype::F64 => Self::F64(Checkpoint::from_archive(&ar)?),
        })
    }
}

/// Calls a generic function on whichever precision the checkpoint holds.
macro_rules! with_checkpoint {
    ($ck:expr, $f:ident($($arg:expr),* $(,)?)) => {
        match $ck {
            $crate::common::AnyCheckpoint::F32(c) => $f(c, $($arg),*),
            $crate::common::AnyCheckpoint::F64(c) => $f(c, $($arg),*),
        }
    };
}
pub(crate) use with_checkpoint;

pub fn parent_or_cwd(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
