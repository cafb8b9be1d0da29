// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::coder::SparseCoder;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::shardio::RowSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvuReport {
    /// Fraction of variance unexplained, `mse / target_variance`.
    pub fvu: f64,
    pub variance_explained_pct: f64,
    /// Per-coordinate mean squared error.
    pub mse: f64,
    /// Mean over coordinates of the per-coordinate target variance.
    pub target_variance: f64,
    pub n_rows: u64,
}

/// Two streaming passes: target mean, then residual and variance sums.
/// Accumulation is in `f64` whatever the coder precision.
pub fn fvu<T: Scalar, S: RowSource<T>>(coder: &SparseCoder<T>, data: &mut S) -> Result<FvuReport> {
    let cfg = coder.config();
    let (d_in, d_out) = data.dims();
    check_dim("dataset d_in", cfg.d_in, d_in)?;
    check_dim("dataset d_out", cfg.d_out, d_out)?;

    data.rewind()?;
    let mut mean = vec![0.0f64; d_out];
    let mut n = 0u64;
    let mut first: Option<Vec<T>> = None;
    let mut constant = true;
    while let Some(row) = data.next_row()? {
        for (m, t) in mean.iter_mut().zip(&row.target) {
            *m += t.as_f64();
        }
        match &first {
            None => first = Some(row.target),
            Some(f) => constant &= *f == row.target,
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::ZeroRows);
    }
    if constant {
        return Err(Error::DegenerateVariance);
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    data.rewind()?;
    let mut sq_err = 0.0f64;
    let mut sq_dev = 0.0f64;
    while let Some(row) = data.next_row()? {
        let y = coder.forward(&row.input)?;
        for ((&yo, &to), &mo) in y.iter().zip(&row.target).zip(&mean) {
            let e = yo.as_f64() - to.as_f64();
            let d = to.as_f64() - mo;
            sq_err += e * e;
            sq_dev += d * d;
        }
    }
    data.rewind()?;
    let denom = (n as f64) * d_out as f64;
    let mse = sq_err / denom;
    let target_variance = sq_dev / denom;
    if target_variance <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let fvu = mse / target_variance;
    Ok(FvuReport {
        fvu,
        variance_explained_pct: 100.0 * (1.0 - fvu),
        mse,
        target_variance,
        n_rows: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coder::{Arch, CoderConfig};
    use crate::shardio::{MemoryRows, ShardRow};
    use crate::tensor::Matrix;

    fn affine_rows(n: usize) -> Vec<ShardRow<f64>> {
        (0..n)
            .map(|i| {
                let x = vec![(i as f64 * 0.3).sin(), (i as f64 * 0.7).cos()];
                let y = vec![2.0 * x[0] - x[1] + 1.0, x[1] + 0.5];
                ShardRow::new(x, y)
            })
            .collect()
    }

    fn cfg() -> CoderConfig {
        CoderConfig {
            d_in: 2,
            d_out: 2,
            n_latents: 4,
            k: 1,
            arch: Arch::SkipTranscoder,
            seed: 0,
        }
    }

    #[test]
    fn perfect_predictor() {
        let mut c = SparseCoder::<f64>::init(cfg(), &[1.0, 0.5]).unwrap();
        *c.skip_mut().unwrap() = Matrix::from_vec(2, 2, vec![2.0, -1.0, 0.0, 1.0]).unwrap();
        let r = fvu(&c, &mut MemoryRows::new(affine_rows(50))).unwrap();
        assert!(r.fvu < 1e-28, "{r:?}");
        assert!((r.variance_explained_pct - 100.0).abs() < 1e-12);
    }

    #[test]
    fn mean_predictor() {
        let rows = affine_rows(50);
        let mut src = MemoryRows::new(rows);
        let mean = crate::train::estimate_target_mean::<f64, _>(&mut src, u64::MAX).unwrap();
        let c = SparseCoder::<f64>::init(cfg(), &mean).unwrap();
        let r = fvu(&c, &mut src).unwrap();
        assert!((r.fvu - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_targets_are_degenerate() {
        let rows: Vec<_> = affine_rows(10)
            .into_iter()
            .map(|r| ShardRow::new(r.input, vec![3.0, 3.0]))
            .collect();
        let c = SparseCoder::<f64>::init(cfg(), &[0.0, 0.0]).unwrap();
        let err = fvu(&c, &mut MemoryRows::new(rows)).unwrap_err();
        assert!(err.to_string().starts_with("degenerate variance"));
    }
}
