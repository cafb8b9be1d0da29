// SPDX-License-Identifier: MIT OR Apache-2.0

//! The sparse coder family: autoencoder, transcoder and skip transcoder.
//!
//! All three share one functional form,
//!
//! ```text
//! f(x) = W_dec · TopK(W_enc · x + b_enc) + W_skip · x + b_dec
//! ```
//!
//! where the skip term is present only for [`Arch::SkipTranscoder`], and an
//! autoencoder is a transcoder whose target is its own input.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{all_finite, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Sae,
    Transcoder,
    SkipTranscoder,
}

impl Arch {
    pub fn has_skip(self) -> bool {
        matches!(self, Arch::SkipTranscoder)
    }

    /// Short name used in CLI flags and output directory names.
    pub fn short_name(self) -> &'static str {
        match self {
            Arch::Sae => "sae",
            Arch::Transcoder => "transcoder",
            Arch::SkipTranscoder => "skip",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sae" => Ok(Arch::Sae),
            "transcoder" | "tc" => Ok(Arch::Transcoder),
            "skip" | "skip_transcoder" | "skip-transcoder" | "sst" => Ok(Arch::SkipTranscoder),
            other => Err(Error::InvalidConfig(format!("unknown arch {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoderConfig {
    pub d_in: usize,
    pub d_out: usize,
    pub n_latents: usize,
    /// Active latents per example.
    pub k: usize,
    pub arch: Arch,
    pub seed: u64,
}

impl CoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 || self.n_latents == 0 {
            return Err(Error::InvalidConfig("all dimensions must be >= 1".into()));
        }
        if self.k == 0 || self.k > self.n_latents {
            return Err(Error::InvalidConfig(format!(
                "k must satisfy 1 <= k <= n_latents, got k={} n_latents={}",
                self.k, self.n_latents
            )));
        }
        if self.arch == Arch::Sae && self.d_in != self.d_out {
            return Err(Error::InvalidConfig(format!(
                "sae requires d_in = d_out, got {} and {}",
                self.d_in, self.d_out
            )));
        }
        Ok(())
    }
}

/// Output of the TopK encoder: the selected latents in increasing index
/// order with their (unrectified) pre-activation values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode<T> {
    pub indices: Vec<usize>,
    pub values: Vec<T>,
    /// Full pre-activation vector, kept when requested for training.
    pub preacts: Option<Vec<T>>,
}

impl<T: Scalar> SparseCode<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self, n_latents: usize) -> Vec<T> {
        let mut dense = vec![T::zero(); n_latents];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }
}

/// Indices of the `k` largest values, returned in increasing index order.
/// Ties go to the lower index.
pub fn top_k<T: Scalar>(values: &[T], k: usize) -> Vec<usize> {
    let k = k.min(values.len());
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        let cmp = |&a: &usize, &b: &usize| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        };
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoder<T> {
    config: CoderConfig,
    /// `n_latents × d_in`
    encoder: Matrix<T>,
    encoder_bias: Vec<T>,
    /// `d_out × n_latents`
    decoder: Matrix<T>,
    decoder_bias: Vec<T>,
    /// `d_out × d_in`, skip architecture only.
    skip: Option<Matrix<T>>,
}

impl<T: Scalar> SparseCoder<T> {
    /// Fresh coder that outputs `target_mean` for every input.
    ///
    /// The decoder and skip matrices start at zero and the output bias at the
    /// empirical target mean. Encoder weights are uniform in
    /// `[-1/√d_in, 1/√d_in]`, drawn from a ChaCha8 stream seeded with
    /// `config.seed`; encoder biases start at zero.
    pub fn init(config: CoderConfig, target_mean: &[T]) -> Result<Self> {
        config.validate()?;
        check_dim("target mean", config.d_out, target_mean.len())?;
        if !all_finite(target_mean) {
            return Err(Error::NonFinite("target mean"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / (config.d_in as f64).sqrt();
        let encoder = Matrix::from_fn(config.n_latents, config.d_in, |_, _| {
            T::lit(rng.random_range(-bound..=bound))
        });
        Ok(Self {
            encoder,
            encoder_bias: vec![T::zero(); config.n_latents],
            decoder: Matrix::zeros(config.d_out, config.n_latents),
            decoder_bias: target_mean.to_vec(),
            skip: config
                .arch
                .has_skip()
                .then(|| Matrix::zeros(config.d_out, config.d_in)),
            config,
        })
    }

    /// Assembles a coder from explicit weights, checking every shape.
    pub fn from_parts(
        config: CoderConfig,
        encoder: Matrix<T>,
        encoder_bias: Vec<T>,
        decoder: Matrix<T>,
        decoder_bias: Vec<T>,
        skip: Option<Matrix<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let shape = |name: &str, m: &Matrix<T>, r: usize, c: usize| -> Result<()> {
            if m.shape() != [r, c] {
                return Err(Error::ShapeMismatch {
                    name: name.into(),
                    expected: vec![r, c],
                    got: m.shape().to_vec(),
                });
            }
            Ok(())
        };
        shape("encoder", &encoder, config.n_latents, config.d_in)?;
        shape("decoder", &decoder, config.d_out, config.n_latents)?;
        check_dim("encoder bias", config.n_latents, encoder_bias.len())?;
        check_dim("decoder bias", config.d_out, decoder_bias.len())?;
        match (&skip, config.arch.has_skip()) {
            (Some(s), true) => shape("skip", s, config.d_out, config.d_in)?,
            (None, false) => {}
            (None, true) => return Err(Error::MissingTensor("skip".into())),
            (Some(_), false) => {
                return Err(Error::InvalidConfig(format!(
                    "{} coder cannot carry a skip matrix",
                    config.arch
                )))
            }
        }
        let coder = Self {
            config,
            encoder,
            encoder_bias,
            decoder,
            decoder_bias,
            skip,
        };
        if !coder.is_finite() {
            return Err(Error::NonFinite("coder weights"));
        }
        Ok(coder)
    }

    pub fn config(&self) -> &CoderConfig {
        &self.config
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    pub fn n_latents(&self) -> usize {
        self.config.n_latents
    }

    pub fn encoder(&self) -> &Matrix<T> {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Matrix<T> {
        &mut self.encoder
    }

    pub fn encoder_bias(&self) -> &[T] {
        &self.encoder_bias
    }

    pub fn encoder_bias_mut(&mut self) -> &mut [T] {
        &mut self.encoder_bias
    }

    pub fn decoder(&self) -> &Matrix<T> {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut Matrix<T> {
        &mut self.decoder
    }

    pub fn decoder_bias(&self) -> &[T] {
        &self.decoder_bias
    }

    pub fn decoder_bias_mut(&mut self) -> &mut [T] {
        &mut self.decoder_bias
    }

    pub fn skip(&self) -> Option<&Matrix<T>> {
        self.skip.as_ref()
    }

    pub fn skip_mut(&mut self) -> Option<&mut Matrix<T>> {
        self.skip.as_mut()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite()
            && all_finite(&self.encoder_bias)
            && self.decoder.is_finite()
            && all_finite(&self.decoder_bias)
            && self.skip.as_ref().is_none_or(Matrix::is_finite)
    }

    /// `W_enc · x + b_enc`
    pub fn preactivations(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim("encoder input", self.config.d_in, x.len())?;
        if !all_finite(x) {
            return Err(Error::NonFinite("encoder input"));
        }
        let mut pre = self.encoder_bias.clone();
        self.encoder.matvec_acc(x, &mut pre);
        if !all_finite(&pre) {
            return Err(Error::NonFinite("pre-activations"));
        }
        Ok(pre)
    }

    pub fn encode(&self, x: &[T]) -> Result<SparseCode<T>> {
        let mut code = self.encode_full(x)?;
        code.preacts = None;
        Ok(code)
    }

    /// Like [`Self::encode`] but keeps the full pre-activation vector.
    pub fn encode_full(&self, x: &[T]) -> Result<SparseCode<T>> {
        let pre = self.preactivations(x)?;
        let indices = top_k(&pre, self.config.k);
        let values = indices.iter().map(|&i| pre[i]).collect();
        Ok(SparseCode {
            indices,
            values,
            preacts: Some(pre),
        })
    }

    /// `W_dec · code + b_dec`, plus `W_skip · x` for the skip architecture.
    pub fn decode(&self, code: &SparseCode<T>, x: &[T]) -> Result<Vec<T>> {
        check_dim("decoder input", self.config.d_in, x.len())?;
        check_dim("sparse code values", code.indices.len(), code.values.len())?;
        let n = self.config.n_latents;
        if let Some(&bad) = code.indices.iter().find(|&&i| i >= n) {
            return Err(Error::LatentOutOfRange {
                index: bad,
                n_latents: n,
            });
        }
        let mut out = self.decoder_bias.clone();
        for (j, v) in code.iter() {
            for (o, w) in out.iter_mut().zip(0..self.config.d_out) {
                *o += self.decoder[(w, j)] * v;
            }
        }
        if let Some(skip) = &self.skip {
            skip.matvec_acc(x, &mut out);
        }
        Ok(out)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let code = self.encode(x)?;
        self.decode(&code, x)
    }

    /// Copy of a skip transcoder trained on a feed-forward block, turned into
    /// a map of the residual stream by adding the identity to the skip matrix:
    /// `converted.forward(x) = x + self.forward(x)`.
    pub fn convert_to_residual(&self) -> Result<Self> {
        let Some(skip) = &self.skip else {
            return Err(Error::RequiresSkip);
        };
        if self.config.d_in != self.config.d_out {
            return Err(Error::NotSquare {
                d_in: self.config.d_in,
                d_out: self.config.d_out,
            });
        }
        let mut skip = skip.clone();
        for i in 0..self.config.d_in {
            skip[(i, i)] += T::one();
        }
        Ok(Self {
            skip: Some(skip),
            ..self.clone()
        })
    }

    /// Trainable tensors in a fixed order shared with `Gradients`.
    pub(crate) fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![
            self.encoder.as_mut_slice(),
            &mut self.encoder_bias,
            self.decoder.as_mut_slice(),
            &mut self.decoder_bias,
        ];
        if let Some(s) = &mut self.skip {
            out.push(s.as_mut_slice());
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> SparseCoder<U> {
        SparseCoder {
            config: self.config,
            encoder: self.encoder.cast(),
            encoder_bias: crate::tensor::cast_vec(&self.encoder_bias),
            decoder: self.decoder.cast(),
            decoder_bias: crate::tensor::cast_vec(&self.decoder_bias),
            skip: self.skip.as_ref().map(Matrix::cast),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(arch: Arch, d_in: usize, d_out: usize, n_latents: usize, k: usize) -> CoderConfig {
        CoderConfig {
            d_in,
            d_out,
            n_latents,
            k,
            arch,
            seed: 7,
        }
    }

    #[test]
    fn init_is_constant_mean() {
        let c = SparseCoder::<f32>::init(
            config(Arch::SkipTranscoder, 4, 4, 8, 2),
            &[1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        assert_eq!(c.forward(&[9.0; 4]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(c.decoder().as_slice().iter().all(|&w| w == 0.0));
        assert!(c.skip().unwrap().as_slice().iter().all(|&w| w == 0.0));

        let z = SparseCoder::<f32>::init(config(Arch::Transcoder, 4, 3, 8, 2), &[0.0; 3]).unwrap();
        assert_eq!(z.forward(&[-3.0, 1.0, 0.5, 7.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = config(Arch::Transcoder, 5, 3, 6, 2);
        let a = SparseCoder::<f32>::init(cfg, &[0.0; 3]).unwrap();
        let b = SparseCoder::<f32>::init(cfg, &[0.0; 3]).unwrap();
        let bits = |c: &SparseCoder<f32>| -> Vec<u32> {
            c.encoder().as_slice().iter().map(|x| x.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let bound = 1.0 / 5f32.sqrt();
        assert!(a.encoder().as_slice().iter().all(|w| w.abs() <= bound));
        let other = SparseCoder::<f32>::init(CoderConfig { seed: 8, ..cfg }, &[0.0; 3]).unwrap();
        assert_ne!(bits(&a), bits(&other));
    }

    #[test]
    fn init_errors() {
        let cfg = config(Arch::Transcoder, 4, 3, 8, 2);
        assert!(matches!(
            SparseCoder::<f32>::init(cfg, &[0.0; 4]),
            Err(Error::DimMismatch { .. })
        ));
        assert!(SparseCoder::<f32>::init(CoderConfig { k: 9, ..cfg }, &[0.0; 3]).is_err());
        assert!(SparseCoder::<f32>::init(CoderConfig { k: 0, ..cfg }, &[0.0; 3]).is_err());
        assert!(SparseCoder::<f32>::init(config(Arch::Sae, 4, 3, 8, 2), &[0.0; 3]).is_err());
    }

    fn bias_only(bias: Vec<f64>, k: usize) -> SparseCoder<f64> {
        let n = bias.len();
        let mut c = SparseCoder::<f64>::init(config(Arch::Transcoder, 2, 2, n, k), &[0.0; 2]).unwrap();
        c.encoder_mut().as_mut_slice().fill(0.0);
        c.encoder_bias_mut().copy_from_slice(&bias);
        c
    }

    #[test]
    fn encode_orders_by_value() {
        let code = bias_only(vec![5.0, 1.0, 3.0], 2).encode(&[0.3, -0.2]).unwrap();
        assert_eq!(code.indices, vec![0, 2]);
        assert_eq!(code.values, vec![5.0, 3.0]);
    }

    #[test]
    fn encode_ties_go_low() {
        let code = bias_only(vec![2.0, 2.0, 2.0], 2).encode(&[1.0, 1.0]).unwrap();
        assert_eq!(code.indices, vec![0, 1]);
    }

    #[test]
    fn encode_keeps_negative_survivors() {
        let code = bias_only(vec![-5.0, -1.0, -3.0], 2).encode(&[0.0, 0.0]).unwrap();
        assert_eq!(code.indices, vec![1, 2]);
        assert_eq!(code.values, vec![-1.0, -3.0]);
    }

    #[test]
    fn encode_rejects_non_finite() {
        let c = bias_only(vec![0.0, 1.0], 1);
        assert!(matches!(c.encode(&[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
        assert!(matches!(c.encode(&[0.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn decode_one_hot_is_scaled_column() {
        let mut c = SparseCoder::<f64>::init(config(Arch::Transcoder, 2, 3, 4, 1), &[1.0, 0.0, -1.0]).unwrap();
        for (i, w) in c.decoder_mut().as_mut_slice().iter_mut().enumerate() {
            *w = i as f64;
        }
        let code = SparseCode {
            indices: vec![2],
            values: vec![0.5],
            preacts: None,
        };
        let y = c.decode(&code, &[0.0, 0.0]).unwrap();
        let col = c.decoder().column(2);
        let expected: Vec<f64> = col.iter().zip([1.0, 0.0, -1.0]).map(|(w, b)| 0.5 * w + b).collect();
        assert_eq!(y, expected);

        let empty = SparseCode { indices: vec![], values: vec![], preacts: None };
        assert_eq!(c.decode(&empty, &[4.0, 4.0]).unwrap(), vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn decode_zero_code_adds_skip() {
        let mut c = SparseCoder::<f64>::init(config(Arch::SkipTranscoder, 2, 2, 4, 1), &[1.0, 2.0]).unwrap();
        let skip = c.skip_mut().unwrap();
        skip[(0, 1)] = 3.0;
        skip[(1, 0)] = -1.0;
        let empty = SparseCode { indices: vec![], values: vec![], preacts: None };
        assert_eq!(c.decode(&empty, &[2.0, 5.0]).unwrap(), vec![16.0, 0.0]);
    }

    #[test]
    fn decode_rejects_out_of_range_latent() {
        let c = SparseCoder::<f64>::init(config(Arch::Transcoder, 2, 2, 4, 1), &[0.0; 2]).unwrap();
        let code = SparseCode { indices: vec![4], values: vec![1.0], preacts: None };
        assert!(matches!(c.decode(&code, &[0.0, 0.0]), Err(Error::LatentOutOfRange { .. })));
    }

    #[test]
    fn exact_reconstruction_with_inverse_decoder() {
        // Encoder A, decoder A⁻¹, k = n_latents: a dense linear autoencoder.
        let cfg = config(Arch::Sae, 2, 2, 2, 2);
        let enc = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 1.0]).unwrap();
        let dec = Matrix::from_vec(2, 2, vec![1.0, -1.0, -1.0, 2.0]).unwrap();
        let c = SparseCoder::from_parts(cfg, enc, vec![0.0; 2], dec, vec![0.0; 2], None).unwrap();
        for x in [[1.0, 2.0], [-3.5, 0.25], [0.0, 0.0]] {
            assert_eq!(c.forward(&x).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn affine_skip_path() {
        let mut c = SparseCoder::<f64>::init(config(Arch::SkipTranscoder, 2, 2, 3, 1), &[0.5, -0.5]).unwrap();
        *c.skip_mut().unwrap() = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.forward(&[1.0, 1.0]).unwrap(), vec![3.5, 6.5]);
    }

    #[test]
    fn convert_requires_skip_and_square() {
        let tc = SparseCoder::<f64>::init(config(Arch::Transcoder, 2, 2, 3, 1), &[0.0; 2]).unwrap();
        let err = tc.convert_to_residual().unwrap_err();
        assert_eq!(err.to_string(), "requires skip architecture");

        let rect = SparseCoder::<f64>::init(config(Arch::SkipTranscoder, 3, 2, 3, 1), &[0.0; 2]).unwrap();
        assert!(matches!(rect.convert_to_residual(), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn convert_fresh_coder() {
        let c = SparseCoder::<f64>::init(config(Arch::SkipTranscoder, 2, 2, 4, 2), &[0.25, 3.0]).unwrap();
        let r = c.convert_to_residual().unwrap();
        assert_eq!(r.forward(&[1.0, -1.0]).unwrap(), vec![1.25, 2.0]);
        // The original is untouched.
        assert_eq!(c.forward(&[1.0, -1.0]).unwrap(), vec![0.25, 3.0]);
    }

    proptest! {
        #[test]
        fn top_k_matches_sort(values in prop::collection::vec(-4i32..4, 1..40), k in 1usize..40) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let k = k.min(values.len());
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
            let mut expected = order[..k].to_vec();
            expected.sort();
            prop_assert_eq!(top_k(&values, k), expected);
        }

        #[test]
        fn code_has_exactly_k_entries(seed in 0u64..1000, k in 1usize..8) {
            let cfg = CoderConfig { d_in: 5, d_out: 3, n_latents: 8, k, arch: Arch::Transcoder, seed };
            let c = SparseCoder::<f32>::init(cfg, &[0.0; 3]).unwrap();
            let code = c.encode(&[1.0, -2.0, 0.5, 0.0, 3.0]).unwrap();
            prop_assert_eq!(code.len(), k);
            prop_assert!(code.indices.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
