// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Errors produced by shard I/O, model construction, training and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("io error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported dtype_code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated file: header declares {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing bytes: header declares {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },

    #[error("zero rows")]
    ZeroRows,

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("missing tensor {0:?}")]
    MissingTensor(String),

    #[error("shape mismatch for tensor {name:?}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("requires skip architecture")]
    RequiresSkip,

    #[error("requires square coder (d_in = d_out), got {d_in}x{d_out}")]
    NotSquare { d_in: usize, d_out: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("degenerate variance: target variance is zero")]
    DegenerateVariance,

    #[error("dead latent {0}")]
    DeadLatent(usize),

    #[error("needs both classes")]
    NeedsBothClasses,

    #[error("latent index {index} out of range for {n_latents} latents")]
    LatentOutOfRange { index: usize, n_latents: usize },

    #[error("malformed metadata: {0}")]
    Meta(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::IoAt { path, source }
    }

    /// Short stable identifier, used by the CLI for machine-readable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) | Error::IoAt { .. } => "io",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::UnsupportedDtype(_) => "unsupported_dtype",
            Error::Truncated { .. } => "truncated",
            Error::TrailingBytes { .. } => "trailing_bytes",
            Error::ZeroRows => "zero_rows",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::MissingTensor(_) => "missing_tensor",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::RequiresSkip => "requires_skip",
            Error::NotSquare { .. } => "not_square",
            Error::EmptyBatch => "empty_batch",
            Error::EmptyCorpus => "empty_corpus",
            Error::DegenerateVariance => "degenerate_variance",
            Error::DeadLatent(_) => "dead_latent",
            Error::NeedsBothClasses => "needs_both_classes",
            Error::LatentOutOfRange { .. } => "latent_out_of_range",
            Error::Meta(_) => "meta",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimMismatch { what, expected, got })
    }
}
