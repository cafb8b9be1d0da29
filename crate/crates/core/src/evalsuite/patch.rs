// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::coder::SparseCoder;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::shardio::RowView;
use crate::synth::{cross_entropy, ToyLm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    /// Mean next-token cross-entropy of the unmodified model, in nats.
    pub ce_base: f64,
    /// Same with the MLP block's output replaced by the coder.
    pub ce_patched: f64,
    pub delta_ce: f64,
    /// `100 · delta_ce / ce_base`
    pub delta_ce_pct: f64,
    pub n_predictions: u64,
}

/// Cross-entropy increase when a transcoder replaces the toy model's MLP.
pub fn patch_delta_ce<T: Scalar>(model: &ToyLm<T>, coder: &SparseCoder<T>, tokens: &[u32]) -> Result<PatchReport> {
    patch_delta_ce_viewed(model, coder, tokens, RowView::Pairs)
}

/// [`patch_delta_ce`] for any coder role:
///
/// - `Pairs`: transcoder, MLP output ← `coder(h)`
/// - `TargetOnly`: autoencoder on MLP outputs, MLP output ← `coder(mlp(h))`
/// - `InputOnly`: autoencoder on MLP inputs, MLP output ← `mlp(coder(h))`
pub fn patch_delta_ce_viewed<T: Scalar>(
    model: &ToyLm<T>,
    coder: &SparseCoder<T>,
    tokens: &[u32],
    view: RowView,
) -> Result<PatchReport> {
    let d = model.d_model();
    check_dim("coder d_in vs mlp", d, coder.config().d_in)?;
    check_dim("coder d_out vs mlp", d, coder.config().d_out)?;
    if tokens.len() < 2 {
        return Err(Error::EmptyCorpus);
    }
    let mut base = 0.0;
    let mut patched = 0.0;
    for w in tokens.windows(2) {
        let next = w[1] as usize;
        if next >= model.vocab() {
            return Err(Error::InvalidConfig(format!("token {next} outside vocabulary")));
        }
        let h = model.mlp_input(w[0])?;
        let out = model.mlp(&h)?;
        let substitute = match view {
            RowView::Pairs => coder.forward(&h)?,
            RowView::TargetOnly => coder.forward(&out)?,
            RowView::InputOnly => model.mlp(&coder.forward(&h)?)?,
        };
        base += cross_entropy(&model.logits_with(&h, &out)?, next);
        patched += cross_entropy(&model.logits_with(&h, &substitute)?, next);
    }
    let n = (tokens.len() - 1) as f64;
    let ce_base = base / n;
    let ce_patched = patched / n;
    let delta_ce = ce_patched - ce_base;
    Ok(PatchReport {
        ce_base,
        ce_patched,
        delta_ce,
        delta_ce_pct: 100.0 * delta_ce / ce_base,
        n_predictions: n as u64,
    })
}
