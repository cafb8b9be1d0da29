// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sparse probing: how well a handful of latents linearly separate a binary
//! label.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coder::SparseCoder;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Latents kept by the selection step.
    pub m: usize,
    pub train_fraction: f64,
    /// Full-batch gradient descent iterations.
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            m: 8,
            train_fraction: 0.8,
            iterations: 500,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Held-out accuracy.
    pub accuracy: f64,
    pub train_accuracy: f64,
    /// Selected feature indices, best first.
    pub selected: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn split(labels: &[bool], config: &ProbeConfig) -> Result<Split> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::InvalidConfig("train_fraction must lie in (0, 1)".into()));
    }
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_train = ((labels.len() as f64) * config.train_fraction).round() as usize;
    let n_train = n_train.clamp(1, labels.len().saturating_sub(1));
    let (train, test) = idx.split_at(n_train);
    let has_both = |s: &[usize]| s.iter().any(|&i| labels[i]) && s.iter().any(|&i| !labels[i]);
    if test.is_empty() || !has_both(train) {
        return Err(Error::NeedsBothClasses);
    }
    Ok(Split {
        train: train.to_vec(),
        test: test.to_vec(),
    })
}

/// `|mean₁ − mean₀| / pooled standard deviation` per feature over `rows`.
fn separation(features: &[Vec<f64>], labels: &[bool], rows: &[usize]) -> Vec<f64> {
    let dim = features[0].len();
    (0..dim)
        .map(|f| {
            let (mut n, mut s, mut ss) = ([0f64; 2], [0f64; 2], [0f64; 2]);
            for &r in rows {
                let c = usize::from(labels[r]);
                let x = features[r][f];
                n[c] += 1.0;
                s[c] += x;
                ss[c] += x * x;
            }
            let mean = [s[0] / n[0], s[1] / n[1]];
            let var = |c: usize| (ss[c] - n[c] * mean[c] * mean[c]).max(0.0);
            let dof = (n[0] + n[1] - 2.0).max(1.0);
            let pooled = ((var(0) + var(1)) / dof).sqrt();
            let diff = (mean[1] - mean[0]).abs();
            if pooled > 0.0 {
                diff / pooled
            } else if diff > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect()
}

/// Standardized logistic regression on the given columns; returns
/// (train accuracy, test accuracy).
fn fit_logistic(
    features: &[Vec<f64>],
    labels: &[bool],
    columns: &[usize],
    split: &Split,
    config: &ProbeConfig,
) -> (f64, f64) {
    let m = columns.len();
    let nt = split.train.len() as f64;
    let mut mu = vec![0.0; m];
    let mut sd = vec![0.0; m];
    for (k, &c) in columns.iter().enumerate() {
        mu[k] = split.train.iter().map(|&r| features[r][c]).sum::<f64>() / nt;
        let var = split.train.iter().map(|&r| (features[r][c] - mu[k]).powi(2)).sum::<f64>() / nt;
        sd[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let row = |r: usize| -> Vec<f64> { columns.iter().enumerate().map(|(k, &c)| (features[r][c] - mu[k]) / sd[k]).collect() };
    let train_x: Vec<Vec<f64>> = split.train.iter().map(|&r| row(r)).collect();
    let mut w = vec![0.0; m];
    let mut b = 0.0;
    for _ in 0..config.iterations {
        let mut gw = vec![0.0; m];
        let mut gb = 0.0;
        for (x, &r) in train_x.iter().zip(&split.train) {
            let z = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - f64::from(u8::from(labels[r]));
            for (g, &xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(gw) {
            *wi -= config.learning_rate * g / nt;
        }
        b -= config.learning_rate * gb / nt;
    }
    let accuracy = |rows: &[usize]| {
        let correct = rows
            .iter()
            .filter(|&&r| {
                let z = b + row(r).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                (z > 0.0) == labels[r]
            })
            .count();
        correct as f64 / rows.len() as f64
    };
    (accuracy(&split.train), accuracy(&split.test))
}

fn validate(data_len: usize, labels: &[bool]) -> Result<()> {
    if data_len == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)) {
        return Err(Error::NeedsBothClasses);
    }
    Ok(())
}

/// Encodes every input, selects the `m` latents that best separate the
/// classes on the training split, fits a logistic probe on them and reports
/// held-out accuracy.
pub fn sparse_probe<T: Scalar>(coder: &SparseCoder<T>, data: &[(Vec<T>, bool)], config: &ProbeConfig) -> Result<ProbeReport> {
    let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
    validate(data.len(), &labels)?;
    if config.m == 0 || config.m > coder.n_latents() {
        return Err(Error::InvalidConfig(format!(
            "probe m must lie in 1..={}, got {}",
            coder.n_latents(),
            config.m
        )));
    }
    let features: Vec<Vec<f64>> = data
        .iter()
        .map(|(x, _)| {
            let code = coder.encode(x)?;
            Ok(code.to_dense(coder.n_latents()).into_iter().map(Scalar::as_f64).collect())
        })
        .collect::<Result<_>>()?;
    probe_features(&features, &labels, Some(config.m), config)
}

/// Logistic regression on all raw input coordinates, the reference point
/// for [`sparse_probe`].
pub fn logistic_baseline<T: Scalar>(data: &[(Vec<T>, bool)], config: &ProbeConfig) -> Result<ProbeReport> {
    let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
    validate(data.len(), &labels)?;
    let dim = data[0].0.len();
    let features: Vec<Vec<f64>> = data
        .iter()
        .map(|(x, _)| {
            check_dim("probe input", dim, x.len())?;
            Ok(x.iter().map(|v| v.as_f64()).collect())
        })
        .collect::<Result<_>>()?;
    probe_features(&features, &labels, None, config)
}

fn probe_features(features: &[Vec<f64>], labels: &[bool], m: Option<usize>, config: &ProbeConfig) -> Result<ProbeReport> {
    let split = split(labels, config)?;
    let selected: Vec<usize> = match m {
        Some(m) => {
            let stat = separation(features, labels, &split.train);
            let mut order: Vec<usize> = (0..stat.len()).collect();
            order.sort_by(|&a, &b| stat[b].total_cmp(&stat[a]).then(a.cmp(&b)));
            order.truncate(m);
            order
        }
        None => (0..features[0].len()).collect(),
    };
    let (train_accuracy, accuracy) = fit_logistic(features, labels, &selected, &split, config);
    Ok(ProbeReport {
        accuracy,
        train_accuracy,
        selected,
        n_train: split.train.len(),
        n_test: split.test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coder::{Arch, CoderConfig};
    use rand::Rng;

    fn dense_coder() -> SparseCoder<f64> {
        let cfg = CoderConfig {
            d_in: 3,
            d_out: 3,
            n_latents: 4,
            k: 4,
            arch: Arch::Transcoder,
            seed: 1,
        };
        SparseCoder::init(cfg, &[0.0; 3]).unwrap()
    }

    #[test]
    fn separable_by_one_latent() {
        let coder = dense_coder();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = Vec::new();
        while data.len() < 400 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let pre = coder.preactivations(&x).unwrap()[0];
            if pre.abs() > 0.1 {
                data.push((x, pre > 0.0));
            }
        }
        let r = sparse_probe(&coder, &data, &ProbeConfig { m: 1, ..ProbeConfig::default() }).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.n_train, r.n_test), (320, 80));
    }

    #[test]
    fn random_labels_are_chance() {
        let coder = dense_coder();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<(Vec<f64>, bool)> = (0..2000)
            .map(|_| ((0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_bool(0.5)))
            .collect();
        let r = sparse_probe(&coder, &data, &ProbeConfig { m: 2, ..ProbeConfig::default() }).unwrap();
        assert_eq!(r.n_test, 400);
        assert!((r.accuracy - 0.5).abs() <= 0.05, "{}", r.accuracy);
    }

    #[test]
    fn single_class_rejected() {
        let coder = dense_coder();
        let data = vec![(vec![0.0; 3], true); 10];
        assert!(matches!(sparse_probe(&coder, &data, &ProbeConfig::default()), Err(Error::NeedsBothClasses)));
        assert!(sparse_probe(&coder, &[(vec![0.0; 3], true), (vec![1.0; 3], false)], &ProbeConfig { m: 5, ..ProbeConfig::default() }).is_err());
    }
}
