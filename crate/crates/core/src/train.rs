// SPDX-License-Identifier: MIT OR Apache-2.0

//! Mean-squared-error training with hand-written backpropagation and Adam.
//!
//! The objective is plain MSE between the coder output and the target with
//! no auxiliary terms. TopK is piecewise linear, so within a step the
//! selection mask is treated as constant and gradients flow only through the
//! selected latents.

use serde::{Deserialize, Serialize};

use crate::coder::{CoderConfig, SparseCode, SparseCoder};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::shardio::{RowSource, ShardRow};
use crate::tensor::{all_finite, dot, Matrix};

/// Rows used to estimate the output-bias initialization.
pub const MEAN_ESTIMATE_ROWS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Examples (token positions) per optimizer step.
    pub batch_size: usize,
    pub n_steps: u64,
    /// A latent that has not fired for more than this many tokens is dead.
    pub dead_token_window: u64,
    /// Progress callback period in steps.
    pub log_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            n_steps: 1000,
            dead_token_window: 1_000_000,
            log_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::InvalidConfig("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon.is_sign_positive()) {
            return Err(Error::InvalidConfig("epsilon must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One tensor per trainable parameter. Also used for the Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub encoder: Matrix<T>,
    pub encoder_bias: Vec<T>,
    pub decoder: Matrix<T>,
    pub decoder_bias: Vec<T>,
    pub skip: Option<Matrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(coder: &SparseCoder<T>) -> Self {
        Self::zeros(coder.config())
    }

    pub fn zeros(cfg: &CoderConfig) -> Self {
        Self {
            encoder: Matrix::zeros(cfg.n_latents, cfg.d_in),
            encoder_bias: vec![T::zero(); cfg.n_latents],
            decoder: Matrix::zeros(cfg.d_out, cfg.n_latents),
            decoder_bias: vec![T::zero(); cfg.d_out],
            skip: cfg.arch.has_skip().then(|| Matrix::zeros(cfg.d_out, cfg.d_in)),
        }
    }

    /// Names and slices in parameter order.
    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        let mut out = vec![
            ("encoder", self.encoder.as_slice()),
            ("encoder_bias", self.encoder_bias.as_slice()),
            ("decoder", self.decoder.as_slice()),
            ("decoder_bias", self.decoder_bias.as_slice()),
        ];
        if let Some(s) = &self.skip {
            out.push(("skip", s.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
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

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| all_finite(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    /// Adam first moments.
    pub m: Gradients<T>,
    /// Adam second moments.
    pub v: Gradients<T>,
    pub step: u64,
    pub tokens_seen: u64,
    /// 1-based token index of each latent's most recent selection.
    pub last_fired: Vec<Option<u64>>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(coder: &SparseCoder<T>) -> Self {
        Self {
            m: Gradients::zeros_like(coder),
            v: Gradients::zeros_like(coder),
            step: 0,
            tokens_seen: 0,
            last_fired: vec![None; coder.n_latents()],
        }
    }
}

fn check_row<T: Scalar>(coder: &SparseCoder<T>, row: &ShardRow<T>) -> Result<()> {
    let cfg = coder.config();
    check_dim("row input", cfg.d_in, row.input.len())?;
    check_dim("row target", cfg.d_out, row.target.len())?;
    if !all_finite(&row.target) {
        return Err(Error::NonFinite("row target"));
    }
    Ok(())
}

/// Per-coordinate mean squared error, averaged over the batch.
pub fn loss<T: Scalar>(coder: &SparseCoder<T>, batch: &[ShardRow<T>]) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d_out = T::from_usize_lossy(coder.config().d_out);
    let mut total = T::zero();
    for row in batch {
        check_row(coder, row)?;
        let y = coder.forward(&row.input)?;
        let sq: T = y.iter().zip(&row.target).map(|(&a, &b)| (a - b) * (a - b)).sum();
        total += sq / d_out;
    }
    Ok(total / T::from_usize_lossy(batch.len()))
}

/// Loss and exact gradients of [`loss`] with the TopK mask held fixed.
pub fn backward<T: Scalar>(coder: &SparseCoder<T>, batch: &[ShardRow<T>]) -> Result<(T, Gradients<T>)> {
    backward_with(coder, batch, |_, _| {})
}

/// [`backward`], reporting each example's code to `on_code`.
pub(crate) fn backward_with<T: Scalar>(
    coder: &SparseCoder<T>,
    batch: &[ShardRow<T>],
    mut on_code: impl FnMut(usize, &SparseCode<T>),
) -> Result<(T, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let cfg = coder.config();
    let d_out = T::from_usize_lossy(cfg.d_out);
    let scale = T::lit(2.0) / (d_out * T::from_usize_lossy(batch.len()));
    let mut grads = Gradients::zeros_like(coder);
    let mut total = T::zero();
    let mut resid = vec![T::zero(); cfg.d_out];
    let mut column = vec![T::zero(); cfg.d_out];

    for (i, row) in batch.iter().enumerate() {
        check_row(coder, row)?;
        let x = &row.input;
        let code = coder.encode(x)?;
        let y = coder.decode(&code, x)?;
        let mut sq = T::zero();
        for ((r, &yo), &to) in resid.iter_mut().zip(&y).zip(&row.target) {
            let diff = yo - to;
            sq += diff * diff;
            *r = diff * scale;
        }
        total += sq / d_out;

        for (g, &r) in grads.decoder_bias.iter_mut().zip(&resid) {
            *g += r;
        }
        if let Some(gs) = &mut grads.skip {
            gs.add_outer(T::one(), &resid, x);
        }
        for (j, v) in code.iter() {
            for (o, c) in column.iter_mut().enumerate() {
                *c = coder.decoder()[(o, j)];
                grads.decoder[(o, j)] += resid[o] * v;
            }
            // dL/d(pre_j), routed through the selected latent only
            let g_pre = dot(&column, &resid);
            grads.encoder_bias[j] += g_pre;
            for (g, &xi) in grads.encoder.row_mut(j).iter_mut().zip(x) {
                *g += g_pre * xi;
            }
        }
        on_code(i, &code);
    }
    Ok((total / T::from_usize_lossy(batch.len()), grads))
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// anything is modified.
pub fn adam_step<T: Scalar>(
    coder: &mut SparseCoder<T>,
    state: &mut TrainState<T>,
    grads: &Gradients<T>,
    config: &TrainConfig,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    let expect = Gradients::zeros_like(coder);
    for (((name, g), (_, e)), (_, m)) in grads
        .tensors()
        .iter()
        .zip(expect.tensors())
        .zip(state.m.tensors())
    {
        check_dim(name, e.len(), g.len())?;
        check_dim(name, e.len(), m.len())?;
    }
    if grads.skip.is_some() != coder.skip().is_some() {
        return Err(Error::MissingTensor("skip".into()));
    }

    let t = state.step + 1;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let bc1 = T::one() - T::lit(config.beta1.powi(t.min(i32::MAX as u64) as i32));
    let bc2 = T::one() - T::lit(config.beta2.powi(t.min(i32::MAX as u64) as i32));
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.epsilon);

    let params = coder.params_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, m), v), (_, g)) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step = t;
    Ok(())
}

/// Latents not selected within the last `dead_token_window` tokens. A latent
/// that never fired counts from token zero.
pub fn dead_latents<T>(state: &TrainState<T>, config: &TrainConfig) -> Vec<usize> {
    state
        .last_fired
        .iter()
        .enumerate()
        .filter(|(_, last)| state.tokens_seen - last.unwrap_or(0) > config.dead_token_window)
        .map(|(i, _)| i)
        .collect()
}

/// One line of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub dead: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub coder: SparseCoder<T>,
    pub state: TrainState<T>,
    /// One record per optimizer step.
    pub curve: Vec<StepRecord>,
}

/// Trains a fresh coder for `config.n_steps` steps.
pub fn train<T: Scalar, S: RowSource<T>>(
    coder: SparseCoder<T>,
    data: &mut S,
    config: &TrainConfig,
    on_record: impl FnMut(&StepRecord),
) -> Result<TrainOutcome<T>> {
    let state = TrainState::new(&coder);
    resume(coder, state, data, config, on_record)
}

/// Continues training from an existing optimizer state until
/// `state.step == config.n_steps`. The data source wraps around when
/// exhausted.
pub fn resume<T: Scalar, S: RowSource<T>>(
    mut coder: SparseCoder<T>,
    mut state: TrainState<T>,
    data: &mut S,
    config: &TrainConfig,
    mut on_record: impl FnMut(&StepRecord),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let (d_in, d_out) = data.dims();
    check_dim("dataset d_in", coder.config().d_in, d_in)?;
    check_dim("dataset d_out", coder.config().d_out, d_out)?;
    check_dim("last_fired", coder.n_latents(), state.last_fired.len())?;

    let mut curve = Vec::with_capacity(config.n_steps.saturating_sub(state.step) as usize);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut epoch = 0u64;
    while state.step < config.n_steps {
        batch.clear();
        while batch.len() < config.batch_size {
            match data.next_row()? {
                Some(row) => batch.push(row),
                None => {
                    data.rewind()?;
                    epoch += 1;
                    tracing::info!(epoch, step = state.step, "dataset exhausted, wrapping around");
                    match data.next_row()? {
                        Some(row) => batch.push(row),
                        None => return Err(Error::ZeroRows),
                    }
                }
            }
        }

        let base = state.tokens_seen;
        let last_fired = &mut state.last_fired;
        let (loss, grads) = backward_with(&coder, &batch, |i, code| {
            for &j in &code.indices {
                last_fired[j] = Some(base + i as u64 + 1);
            }
        })?;
        state.tokens_seen += batch.len() as u64;
        adam_step(&mut coder, &mut state, &grads, config)?;

        let record = StepRecord {
            step: state.step,
            loss: loss.as_f64(),
            dead: dead_latents(&state, config).len(),
        };
        curve.push(record);
        if config.log_every > 0 && (state.step.is_multiple_of(config.log_every) || state.step == config.n_steps) {
            on_record(&record);
        }
    }
    Ok(TrainOutcome { coder, state, curve })
}

/// Mean target over the first `max_rows` rows, accumulated in `f64`.
/// The source is rewound afterwards.
pub fn estimate_target_mean<T: Scalar, S: RowSource<T>>(data: &mut S, max_rows: u64) -> Result<Vec<T>> {
    data.rewind()?;
    let (_, d_out) = data.dims();
    let mut sum = vec![0.0f64; d_out];
    let mut n = 0u64;
    while n < max_rows {
        let Some(row) = data.next_row()? else { break };
        check_dim("row target", d_out, row.target.len())?;
        for (s, t) in sum.iter_mut().zip(&row.target) {
            *s += t.as_f64();
        }
        n += 1;
    }
    data.rewind()?;
    if n == 0 {
        return Err(Error::ZeroRows);
    }
    Ok(sum.into_iter().map(|s| T::lit(s / n as f64)).collect())
}

/// Initializes a coder with its output bias at the data's target mean.
pub fn init_from_data<T: Scalar, S: RowSource<T>>(config: CoderConfig, data: &mut S) -> Result<SparseCoder<T>> {
    let mean = estimate_target_mean(data, MEAN_ESTIMATE_ROWS)?;
    SparseCoder::init(config, &mean)
}
