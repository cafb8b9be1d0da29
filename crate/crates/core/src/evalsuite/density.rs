// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::coder::{SparseCode, SparseCoder};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::shardio::RowSource;

pub const HISTOGRAM_BINS: usize = 40;
pub const HISTOGRAM_LOG10_MIN: f64 = -7.0;
pub const HISTOGRAM_LOG10_MAX: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStat {
    pub index: usize,
    pub active_tokens: u64,
    pub activation_sum: f64,
    /// Fraction of tokens on which the latent is nonzero.
    pub density: f64,
    /// Activation sum over all tokens divided by the token count.
    pub mean_activation: f64,
    /// Activation sum divided by the number of tokens where the latent is
    /// active; 0 for a latent that never fires.
    pub cah: f64,
    pub dead: bool,
}

/// Log10-density histogram: [`HISTOGRAM_BINS`] equal bins over
/// `[HISTOGRAM_LOG10_MIN, HISTOGRAM_LOG10_MAX]`, out-of-range densities
/// clamped to the end bins, and dead latents counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub log10_min: f64,
    pub log10_max: f64,
    pub counts: Vec<u64>,
    pub dead: u64,
}

impl DensityHistogram {
    pub fn from_densities(densities: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        let mut dead = 0;
        let width = (HISTOGRAM_LOG10_MAX - HISTOGRAM_LOG10_MIN) / HISTOGRAM_BINS as f64;
        for d in densities {
            if d <= 0.0 {
                dead += 1;
                continue;
            }
            let pos = ((d.log10() - HISTOGRAM_LOG10_MIN) / width).floor();
            let bin = (pos.max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        Self {
            log10_min: HISTOGRAM_LOG10_MIN,
            log10_max: HISTOGRAM_LOG10_MAX,
            counts,
            dead,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.dead
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStatsReport {
    pub n_tokens: u64,
    pub n_latents: usize,
    pub n_dead: usize,
    pub latents: Vec<LatentStat>,
    pub histogram: DensityHistogram,
}

/// Streaming per-latent firing counts and activation sums.
#[derive(Debug, Clone)]
pub struct LatentStatsAccumulator {
    counts: Vec<u64>,
    sums: Vec<f64>,
    n_tokens: u64,
}

impl LatentStatsAccumulator {
    pub fn new(n_latents: usize) -> Self {
        Self {
            counts: vec![0; n_latents],
            sums: vec![0.0; n_latents],
            n_tokens: 0,
        }
    }

    /// Records one token's code. Selected latents with value exactly zero do
    /// not count as active.
    pub fn observe<T: Scalar>(&mut self, code: &SparseCode<T>) -> Result<()> {
        self.observe_pairs(code.iter().map(|(i, v)| (i, v.as_f64())))
    }

    pub fn observe_pairs(&mut self, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<()> {
        for (i, v) in pairs {
            if i >= self.counts.len() {
                return Err(Error::LatentOutOfRange {
                    index: i,
                    n_latents: self.counts.len(),
                });
            }
            if v != 0.0 {
                self.counts[i] += 1;
                self.sums[i] += v;
            }
        }
        self.n_tokens += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<LatentStatsReport> {
        if self.n_tokens == 0 {
            return Err(Error::ZeroRows);
        }
        let n = self.n_tokens as f64;
        let latents: Vec<LatentStat> = self
            .counts
            .iter()
            .zip(&self.sums)
            .enumerate()
            .map(|(index, (&c, &s))| LatentStat {
                index,
                active_tokens: c,
                activation_sum: s,
                density: c as f64 / n,
                mean_activation: s / n,
                cah: if c == 0 { 0.0 } else { s / c as f64 },
                dead: c == 0,
            })
            .collect();
        let histogram = DensityHistogram::from_densities(latents.iter().map(|l| l.density));
        Ok(LatentStatsReport {
            n_tokens: self.n_tokens,
            n_latents: latents.len(),
            n_dead: latents.iter().filter(|l| l.dead).count(),
            latents,
            histogram,
        })
    }
}

/// One streaming pass over the dataset inputs.
pub fn latent_stats<T: Scalar, S: RowSource<T>>(coder: &SparseCoder<T>, data: &mut S) -> Result<LatentStatsReport> {
    check_dim("dataset d_in", coder.config().d_in, data.dims().0)?;
    data.rewind()?;
    let mut acc = LatentStatsAccumulator::new(coder.n_latents());
    while let Some(row) = data.next_row()? {
        acc.observe(&coder.encode(&row.input)?)?;
    }
    data.rewind()?;
    acc.finish()
}
