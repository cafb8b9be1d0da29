// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coder::SparseCoder;
use crate::error::{check_dim, Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::shardio::{ShardHeader, ShardRow, ShardWriter, TensorArchive};
use crate::tensor::{dot, norm, Matrix};

const KIND: &str = "planted_dictionary";

/// Parameters for [`PlantedDictionary::random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub d_in: usize,
    pub d_out: usize,
    pub n_features: usize,
    /// Per-token firing probability of each feature under Gaussian input.
    pub feature_prob: f64,
    /// Scale of the linear component; 0 disables it.
    pub linear_scale: f64,
    /// Scale of the constant output offset.
    pub offset_scale: f64,
    pub seed: u64,
}

/// Target map `y = Σᵢ max(0, uᵢ·x − θᵢ)·vᵢ + A·x + c` with unit-norm
/// detectors `uᵢ` (rows) and output directions `vᵢ` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDictionary {
    /// `n_features × d_in`, unit rows.
    pub detectors: Matrix<f64>,
    pub thresholds: Vec<f64>,
    /// `d_out × n_features`, unit columns.
    pub directions: Matrix<f64>,
    /// `d_out × d_in`
    pub linear: Option<Matrix<f64>>,
    pub offset: Vec<f64>,
    pub feature_prob: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DictBody {
    d_in: usize,
    d_out: usize,
    n_features: usize,
    has_linear: bool,
    feature_prob: f64,
    seed: u64,
}

fn gaussian_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let len = norm(&v);
        if len > 1e-12 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Threshold at which a standard normal projection fires with probability `p`.
pub(crate) fn gaussian_threshold(p: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - p)
}

impl PlantedDictionary {
    pub fn random(spec: &PlantedSpec) -> Result<Self> {
        if spec.d_in == 0 || spec.d_out == 0 || spec.n_features == 0 {
            return Err(Error::InvalidConfig("planted dimensions must be >= 1".into()));
        }
        if !(spec.feature_prob > 0.0 && spec.feature_prob < 1.0) {
            return Err(Error::InvalidConfig("feature_prob must lie in (0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut detectors = Matrix::zeros(spec.n_features, spec.d_in);
        for i in 0..spec.n_features {
            detectors.row_mut(i).copy_from_slice(&gaussian_unit(&mut rng, spec.d_in));
        }
        let mut directions = Matrix::zeros(spec.d_out, spec.n_features);
        for j in 0..spec.n_features {
            for (o, v) in gaussian_unit(&mut rng, spec.d_out).into_iter().enumerate() {
                directions[(o, j)] = v;
            }
        }
        let theta = gaussian_threshold(spec.feature_prob);
        let linear = (spec.linear_scale != 0.0).then(|| {
            let s = spec.linear_scale / (spec.d_in as f64).sqrt();
            Matrix::from_fn(spec.d_out, spec.d_in, |_, _| {
                s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
        });
        let offset = (0..spec.d_out)
            .map(|_| spec.offset_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        Self::from_parts(
            detectors,
            vec![theta; spec.n_features],
            directions,
            linear,
            offset,
            spec.feature_prob,
            spec.seed,
        )
    }

    pub fn from_parts(
        detectors: Matrix<f64>,
        thresholds: Vec<f64>,
        directions: Matrix<f64>,
        linear: Option<Matrix<f64>>,
        offset: Vec<f64>,
        feature_prob: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = detectors.rows();
        if n == 0 {
            return Err(Error::InvalidConfig("need at least one feature".into()));
        }
        check_dim("thresholds", n, thresholds.len())?;
        check_dim("direction columns", n, directions.cols())?;
        check_dim("offset", directions.rows(), offset.len())?;
        if let Some(a) = &linear {
            check_dim("linear rows", directions.rows(), a.rows())?;
            check_dim("linear cols", detectors.cols(), a.cols())?;
        }
        let unit = |v: &[f64]| (norm(v) - 1.0).abs() < 1e-9;
        if !(0..n).all(|i| unit(detectors.row(i))) {
            return Err(Error::InvalidConfig("detector rows must be unit norm".into()));
        }
        if !(0..n).all(|j| unit(&directions.column(j))) {
            return Err(Error::InvalidConfig("direction columns must be unit norm".into()));
        }
        Ok(Self {
            detectors,
            thresholds,
            directions,
            linear,
            offset,
            feature_prob,
            seed,
        })
    }

    pub fn d_in(&self) -> usize {
        self.detectors.cols()
    }

    pub fn d_out(&self) -> usize {
        self.directions.rows()
    }

    pub fn n_features(&self) -> usize {
        self.detectors.rows()
    }

    /// `max(0, uᵢ·x − θᵢ)` for every feature.
    pub fn feature_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_features())
            .map(|i| (dot(self.detectors.row(i), x) - self.thresholds[i]).max(0.0))
            .collect()
    }

    pub fn target(&self, x: &[f64]) -> Vec<f64> {
        let acts = self.feature_activations(x);
        let mut y = self.offset.clone();
        for (j, &a) in acts.iter().enumerate() {
            if a != 0.0 {
                for (o, yo) in y.iter_mut().enumerate() {
                    *yo += a * self.directions[(o, j)];
                }
            }
        }
        if let Some(lin) = &self.linear {
            lin.matvec_acc(x, &mut y);
        }
        y
    }

    /// Infinite deterministic row stream. Inputs are rounded to `f32` before
    /// the target is computed, so rows stored in a shard satisfy the formula
    /// up to the final rounding of the target.
    pub fn rows(&self, dist: InputDist, seed: u64) -> PlantedRows<'_> {
        PlantedRows {
            dict: self,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let body = DictBody {
            d_in: self.d_in(),
            d_out: self.d_out(),
            n_features: self.n_features(),
            has_linear: self.linear.is_some(),
            feature_prob: self.feature_prob,
            seed: self.seed,
        };
        let mut ar = TensorArchive::new(KIND, Dtype::F64, serde_json::to_value(body)?);
        ar.push_matrix("detectors", &self.detectors);
        ar.push("thresholds", &[self.thresholds.len()], &self.thresholds);
        ar.push_matrix("directions", &self.directions);
        if let Some(a) = &self.linear {
            ar.push_matrix("linear", a);
        }
        ar.push("offset", &[self.offset.len()], &self.offset);
        Ok(ar)
    }

    pub fn from_archive(ar: &TensorArchive) -> Result<Self> {
        ar.expect_kind(KIND)?;
        let b: DictBody = serde_json::from_value(ar.body.clone())?;
        Self::from_parts(
            ar.matrix("detectors", b.n_features, b.d_in)?,
            ar.vector("thresholds", b.n_features)?,
            ar.matrix("directions", b.d_out, b.n_features)?,
            if b.has_linear {
                Some(ar.matrix("linear", b.d_out, b.d_in)?)
            } else {
                None
            },
            ar.vector("offset", b.d_out)?,
            b.feature_prob,
            b.seed,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&TensorArchive::read(path)?)
    }
}

/// Input distribution for generated rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputDist {
    /// `x ~ N(0, I)`.
    Gaussian,
    /// Each feature independently present with probability `feature_prob`;
    /// `x = Σ (θᵢ + |gᵢ|)·uᵢ + noise·g`.
    SparseCode { noise: f64 },
}

pub struct PlantedRows<'a> {
    dict: &'a PlantedDictionary,
    dist: InputDist,
    rng: ChaCha8Rng,
}

impl Iterator for PlantedRows<'_> {
    type Item = ShardRow<f64>;

    fn next(&mut self) -> Option<ShardRow<f64>> {
        let d = self.dict;
        let rng = &mut self.rng;
        let mut x: Vec<f64> = match self.dist {
            InputDist::Gaussian => (0..d.d_in()).map(|_| StandardNormal.sample(rng)).collect(),
            InputDist::SparseCode { noise } => {
                let mut x: Vec<f64> = (0..d.d_in())
                    .map(|_| noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect();
                for i in 0..d.n_features() {
                    if rng.random_bool(d.feature_prob) {
                        let g: f64 = StandardNormal.sample(rng);
                        let mag = d.thresholds[i] + g.abs();
                        for (xj, &u) in x.iter_mut().zip(d.detectors.row(i)) {
                            *xj += mag * u;
                        }
                    }
                }
                x
            }
        };
        for v in &mut x {
            *v = f64::from(*v as f32);
        }
        let y = d.target(&x);
        Some(ShardRow::new(x, y))
    }
}

/// Writes `n_rows` generated rows to one shard file.
pub fn gen_planted(
    dict: &PlantedDictionary,
    n_rows: u64,
    dist: InputDist,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<ShardHeader> {
    let mut w = ShardWriter::create(path, dict.d_in(), dict.d_out())?;
    for row in dict.rows(dist, seed).take(n_rows as usize) {
        w.push(&row)?;
    }
    w.finish()
}

/// Like [`gen_planted`] but splits the rows over files of at most
/// `rows_per_file` rows named `{prefix}-{index:05}.acts` in `dir`. The row
/// sequence is identical to a single-file run with the same seed.
pub fn gen_planted_sharded(
    dict: &PlantedDictionary,
    n_rows: u64,
    dist: InputDist,
    seed: u64,
    dir: impl AsRef<Path>,
    prefix: &str,
    rows_per_file: u64,
) -> Result<Vec<(PathBuf, ShardHeader)>> {
    if rows_per_file == 0 {
        return Err(Error::InvalidConfig("rows_per_file must be >= 1".into()));
    }
    if n_rows == 0 {
        return Err(Error::ZeroRows);
    }
    let mut rows = dict.rows(dist, seed);
    let mut out = Vec::new();
    let mut remaining = n_rows;
    while remaining > 0 {
        let n = remaining.min(rows_per_file);
        let path = dir.as_ref().join(format!("{prefix}-{:05}.acts", out.len()));
        let mut w = ShardWriter::create(&path, dict.d_in(), dict.d_out())?;
        for row in rows.by_ref().take(n as usize) {
            w.push(&row)?;
        }
        out.push((path, w.finish()?));
        remaining -= n;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Mean over planted directions of the best |cosine| with a decoder column.
    pub score: f64,
    pub per_feature: Vec<f64>,
    /// Decoder columns skipped because they are exactly zero.
    pub zero_columns: usize,
}

/// Mean-max cosine similarity between planted output directions and the
/// coder's decoder columns.
pub fn recovery_score<T: Scalar>(coder: &SparseCoder<T>, dict: &PlantedDictionary) -> Result<RecoveryReport> {
    check_dim("coder d_out", dict.d_out(), coder.config().d_out)?;
    let dec = coder.decoder().cast::<f64>();
    let mut columns = Vec::with_capacity(dec.cols());
    let mut zero_columns = 0;
    for j in 0..dec.cols() {
        let c = dec.column(j);
        let n = norm(&c);
        if n == 0.0 {
            zero_columns += 1;
        } else {
            columns.push(c.into_iter().map(|x| x / n).collect::<Vec<_>>());
        }
    }
    let per_feature: Vec<f64> = (0..dict.n_features())
        .map(|i| {
            let v = dict.directions.column(i);
            columns
                .iter()
                .map(|c| dot(c, &v).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let score = per_feature.iter().sum::<f64>() / per_feature.len() as f64;
    Ok(RecoveryReport {
        score,
        per_feature,
        zero_columns,
    })
}
