// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activating-example sampling for explanation and scoring pipelines.
//!
//! A latent's positive activations are sorted and split into equal-count
//! quantile bins; examples are drawn without replacement within each bin and
//! shown as fixed-length token windows around the activating position.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coder::SparseCoder;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::shardio::RowSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub n_quantiles: usize,
    pub n_per_quantile: usize,
    pub n_non_activating: usize,
    /// Window length in tokens.
    pub window: usize,
    /// Offset of the activating token within its window.
    pub record_offset: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_quantiles: 10,
            n_per_quantile: 5,
            n_non_activating: 50,
            window: 32,
            record_offset: 24,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleWindow {
    /// Corpus position of the first token in `tokens`.
    pub start: usize,
    pub tokens: Vec<u32>,
    pub activations: Vec<f64>,
    /// Positions (within the window) where the latent is positive.
    pub active: Vec<bool>,
    /// Corpus position of the sampled activating token, if any.
    pub record_position: Option<usize>,
    /// The window was cut short by a corpus edge.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentExamples {
    pub latent: usize,
    pub n_positive: usize,
    /// Fewer positive activations than quantiles; fewer bins were used.
    pub degraded: bool,
    /// `(min, max)` activation value of each bin, lowest bin first.
    pub bin_bounds: Vec<(f64, f64)>,
    pub activating: Vec<Vec<ExampleWindow>>,
    pub non_activating: Vec<ExampleWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileExampleSet {
    pub config: SamplingConfig,
    pub latents: Vec<LatentExamples>,
}

/// Splits positive activations into `n_bins` equal-count bins by value.
///
/// Positions are ordered by `(activation, position)` ascending and bin `b`
/// takes sorted ranks `⌊b·n/n_bins⌋ .. ⌊(b+1)·n/n_bins⌋`. Returns corpus
/// positions per bin.
pub fn quantile_bins(acts: &[f64], n_bins: usize) -> Vec<Vec<usize>> {
    let mut positive: Vec<usize> = (0..acts.len()).filter(|&i| acts[i] > 0.0).collect();
    positive.sort_by(|&a, &b| acts[a].total_cmp(&acts[b]).then(a.cmp(&b)));
    let n = positive.len();
    if n_bins == 0 {
        return Vec::new();
    }
    (0..n_bins)
        .map(|b| positive[b * n / n_bins..(b + 1) * n / n_bins].to_vec())
        .collect()
}

fn window_at(tokens: &[u32], acts: &[f64], nominal_start: isize, len: usize, record: Option<usize>) -> ExampleWindow {
    let start = nominal_start.max(0) as usize;
    let end = ((nominal_start + len as isize).max(0) as usize).min(tokens.len());
    ExampleWindow {
        start,
        tokens: tokens[start..end].to_vec(),
        activations: acts[start..end].to_vec(),
        active: acts[start..end].iter().map(|&a| a > 0.0).collect(),
        record_position: record,
        truncated: end - start < len,
    }
}

/// Samples examples for one latent given its activation at every corpus
/// position. Each latent draws from its own ChaCha stream of `config.seed`.
pub fn sample_latent_examples(
    tokens: &[u32],
    acts: &[f64],
    latent: usize,
    config: &SamplingConfig,
) -> Result<LatentExamples> {
    check_dim("activation trace", tokens.len(), acts.len())?;
    if config.window == 0 || config.record_offset >= config.window {
        return Err(Error::InvalidConfig("need 0 <= record_offset < window".into()));
    }
    if tokens.len() < config.window {
        return Err(Error::EmptyCorpus);
    }
    let n_positive = acts.iter().filter(|&&a| a > 0.0).count();
    if n_positive == 0 {
        return Err(Error::DeadLatent(latent));
    }
    let n_bins = config.n_quantiles.min(n_positive);
    let bins = quantile_bins(acts, n_bins);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(latent as u64);

    let bin_bounds = bins
        .iter()
        .map(|b| {
            let vals = b.iter().map(|&p| acts[p]);
            (vals.clone().fold(f64::INFINITY, f64::min), vals.fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();

    let activating = bins
        .iter()
        .map(|bin| {
            let amount = config.n_per_quantile.min(bin.len());
            let mut picked: Vec<usize> = sample(&mut rng, bin.len(), amount).into_iter().map(|i| bin[i]).collect();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|pos| {
                    let nominal = pos as isize - config.record_offset as isize;
                    window_at(tokens, acts, nominal, config.window, Some(pos))
                })
                .collect()
        })
        .collect();

    // Window starts whose span holds no nonzero activation.
    let mut nonzero_prefix = Vec::with_capacity(acts.len() + 1);
    nonzero_prefix.push(0usize);
    for &a in acts {
        nonzero_prefix.push(nonzero_prefix.last().unwrap() + usize::from(a != 0.0));
    }
    let quiet: Vec<usize> = (0..=tokens.len() - config.window)
        .filter(|&s| nonzero_prefix[s + config.window] == nonzero_prefix[s])
        .collect();
    let amount = config.n_non_activating.min(quiet.len());
    let mut starts: Vec<usize> = sample(&mut rng, quiet.len(), amount).into_iter().map(|i| quiet[i]).collect();
    starts.sort_unstable();
    let non_activating = starts
        .into_iter()
        .map(|s| window_at(tokens, acts, s as isize, config.window, None))
        .collect();

    Ok(LatentExamples {
        latent,
        n_positive,
        degraded: n_bins < config.n_quantiles,
        bin_bounds,
        activating,
        non_activating,
    })
}

/// Dense activation traces of the listed latents over every row.
pub fn latent_activations<T: Scalar, S: RowSource<T>>(
    coder: &SparseCoder<T>,
    data: &mut S,
    latents: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let n = coder.n_latents();
    if let Some(&bad) = latents.iter().find(|&&l| l >= n) {
        return Err(Error::LatentOutOfRange { index: bad, n_latents: n });
    }
    check_dim("dataset d_in", coder.config().d_in, data.dims().0)?;
    data.rewind()?;
    let mut traces = vec![Vec::new(); latents.len()];
    while let Some(row) = data.next_row()? {
        let code = coder.encode(&row.input)?;
        for (trace, &l) in traces.iter_mut().zip(latents) {
            let v = code
                .indices
                .binary_search(&l)
                .map(|i| code.values[i].as_f64())
                .unwrap_or(0.0);
            trace.push(v);
        }
    }
    data.rewind()?;
    Ok(traces)
}

/// Encodes the corpus activations and samples examples for each latent.
/// `data` must hold one row per token, aligned with `tokens`.
pub fn sample_quantile_examples<T: Scalar, S: RowSource<T>>(
    coder: &SparseCoder<T>,
    tokens: &[u32],
    data: &mut S,
    latents: &[usize],
    config: &SamplingConfig,
) -> Result<QuantileExampleSet> {
    let traces = latent_activations(coder, data, latents)?;
    let latents = latents
        .iter()
        .zip(&traces)
        .map(|(&l, trace)| sample_latent_examples(tokens, trace, l, config))
        .collect::<Result<_>>()?;
    Ok(QuantileExampleSet {
        config: config.clone(),
        latents,
    })
}
