// SPDX-License-Identifier: MIT OR Apache-2.0

//! Quantitative evaluations of trained coders.
//!
//! Every report serializes to a JSON document wrapped by [`report_json`],
//! which adds a schema version and a report kind.

mod density;
mod fvu;
mod patch;
mod probe;
mod quantile;
mod scoring;

pub use density::{latent_stats, DensityHistogram, LatentStat, LatentStatsAccumulator, LatentStatsReport};
pub use fvu::{fvu, FvuReport};
pub use patch::{patch_delta_ce, patch_delta_ce_viewed, PatchReport};
pub use probe::{logistic_baseline, sparse_probe, ProbeConfig, ProbeReport};
pub use quantile::{
    latent_activations, quantile_bins, sample_latent_examples, sample_quantile_examples, ExampleWindow,
    LatentExamples, QuantileExampleSet, SamplingConfig,
};
pub use scoring::{
    balanced_accuracy, detection_score, fuzzing_score, parse_judged, read_judged, JudgedExample, ScoreReport,
};

use serde::Serialize;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, R> {
    schema_version: u32,
    kind: &'a str,
    report: &'a R,
}

/// Pretty JSON with a trailing newline. Field order is fixed by the report
/// types, so identical reports serialize to identical bytes.
pub fn report_json<R: Serialize>(kind: &str, report: &R) -> crate::Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        schema_version: REPORT_SCHEMA_VERSION,
        kind,
        report,
    })?;
    s.push('\n');
    Ok(s)
}
