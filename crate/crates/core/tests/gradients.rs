// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tcoder_core::train::{backward, loss};
use tcoder_core::{Arch, CoderConfig, Matrix, ShardRow, SparseCoder};

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn setup(arch: Arch, seed: u64) -> (SparseCoder<f64>, Vec<ShardRow<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_in = rng.random_range(1..=6);
    let d_out = if arch == Arch::Sae { d_in } else { rng.random_range(1..=6) };
    let n_latents = rng.random_range(2..=12);
    let k = rng.random_range(1..=n_latents.min(4));
    let cfg = CoderConfig {
        d_in,
        d_out,
        n_latents,
        k,
        arch,
        seed,
    };
    let mut mat = |r: usize, c: usize| Matrix::from_vec(r, c, gauss(&mut rng, r * c)).unwrap();
    let (enc, dec) = (mat(n_latents, d_in), mat(d_out, n_latents));
    let skip = arch.has_skip().then(|| mat(d_out, d_in));
    let coder = SparseCoder::from_parts(cfg, enc, gauss(&mut rng, n_latents), dec, gauss(&mut rng, d_out), skip).unwrap();
    let batch = (0..3).map(|_| ShardRow::new(gauss(&mut rng, d_in), gauss(&mut rng, d_out))).collect();
    (coder, batch)
}

/// Loss as an explicit sum over the dense TopK-masked code.
fn brute_loss(c: &SparseCoder<f64>, batch: &[ShardRow<f64>]) -> f64 {
    let cfg = c.config();
    let mut total = 0.0;
    for r in batch {
        let pre = c.preactivations(&r.input).unwrap();
        let mut order: Vec<usize> = (0..pre.len()).collect();
        order.sort_by(|&a, &b| pre[b].total_cmp(&pre[a]).then(a.cmp(&b)));
        let mut z = vec![0.0; pre.len()];
        for &i in &order[..cfg.k] {
            z[i] = pre[i];
        }
        for o in 0..cfg.d_out {
            let mut y = c.decoder_bias()[o];
            for (j, zj) in z.iter().enumerate() {
                y += c.decoder()[(o, j)] * zj;
            }
            if let Some(s) = c.skip() {
                for (i, xi) in r.input.iter().enumerate() {
                    y += s[(o, i)] * xi;
                }
            }
            total += (y - r.target[o]).powi(2);
        }
    }
    total / (cfg.d_out * batch.len()) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_matches_dense_formula(seed in any::<u64>(), a in 0usize..3) {
        let arch = [Arch::Sae, Arch::Transcoder, Arch::SkipTranscoder][a];
        let (coder, batch) = setup(arch, seed);
        let l = loss(&coder, &batch).unwrap();
        let b = brute_loss(&coder, &batch);
        prop_assert!((l - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn decoder_bias_gradient_is_mean_residual(seed in any::<u64>(), a in 0usize..3) {
        let arch = [Arch::Sae, Arch::Transcoder, Arch::SkipTranscoder][a];
        let (coder, batch) = setup(arch, seed);
        let (_, g) = backward(&coder, &batch).unwrap();
        let d_out = coder.config().d_out;
        for o in 0..d_out {
            let expected: f64 = batch
                .iter()
                .map(|r| 2.0 * (coder.forward(&r.input).unwrap()[o] - r.target[o]))
                .sum::<f64>()
                / (d_out * batch.len()) as f64;
            prop_assert!((g.decoder_bias[o] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn central_differences_agree(seed in any::<u64>(), a in 0usize..3) {
        let arch = [Arch::Sae, Arch::Transcoder, Arch::SkipTranscoder][a];
        let (mut coder, batch) = setup(arch, seed);
        let (_, g) = backward(&coder, &batch).unwrap();
        let h = 1e-5;
        let base: Vec<_> = batch.iter().map(|r| coder.encode(&r.input).unwrap().indices).collect();
        // Encoder bias perturbations move the selection only when a gap is tiny.
        for j in 0..coder.n_latents() {
            let orig = coder.encoder_bias()[j];
            coder.encoder_bias_mut()[j] = orig + h;
            let plus = brute_loss(&coder, &batch);
            let sel_p: Vec<_> = batch.iter().map(|r| coder.encode(&r.input).unwrap().indices).collect();
            coder.encoder_bias_mut()[j] = orig - h;
            let minus = brute_loss(&coder, &batch);
            let sel_m: Vec<_> = batch.iter().map(|r| coder.encode(&r.input).unwrap().indices).collect();
            coder.encoder_bias_mut()[j] = orig;
            if sel_p != base || sel_m != base {
                continue;
            }
            let n = (plus - minus) / (2.0 * h);
            let an = g.encoder_bias[j];
            prop_assert!((an - n).abs() <= 1e-4 * an.abs().max(n.abs()) + 1e-9, "{} vs {}", an, n);
        }
    }
}
