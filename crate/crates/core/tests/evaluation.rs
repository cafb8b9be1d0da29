// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tcoder_core::evalsuite::{
    fvu, latent_activations, latent_stats, patch_delta_ce, sample_latent_examples, SamplingConfig,
};
use tcoder_core::shardio::{read_shard, MemoryRows};
use tcoder_core::synth::{
    gen_planted, gen_toy_corpus, recovery_score, CorpusSampling, InputDist, PlantedDictionary, PlantedSpec, ToyLm,
    ToyLmConfig,
};
use tcoder_core::{Arch, CoderConfig, Matrix, ShardRow, SparseCoder};

fn random_coder(seed: u64, d_in: usize, d_out: usize, n_latents: usize, k: usize) -> SparseCoder<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let cfg = CoderConfig {
        d_in,
        d_out,
        n_latents,
        k,
        arch: Arch::SkipTranscoder,
        seed,
    };
    SparseCoder::from_parts(
        cfg,
        Matrix::from_vec(n_latents, d_in, g(n_latents * d_in)).unwrap(),
        g(n_latents),
        Matrix::from_vec(d_out, n_latents, g(d_out * n_latents)).unwrap(),
        g(d_out),
        Some(Matrix::from_vec(d_out, d_in, g(d_out * d_in)).unwrap()),
    )
    .unwrap()
}

fn random_rows(seed: u64, n: usize, d_in: usize, d_out: usize) -> Vec<ShardRow<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            ShardRow::new(
                (0..d_in).map(|_| rng.sample(StandardNormal)).collect(),
                (0..d_out).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal) + 1.0).collect(),
            )
        })
        .collect()
}

#[test]
fn fvu_matches_brute_force() {
    let coder = random_coder(1, 5, 4, 12, 3);
    let rows = random_rows(2, 3000, 5, 4);
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..4).map(|o| rows.iter().map(|r| r.target[o]).sum::<f64>() / n).collect();
    let mut err = 0.0;
    let mut var = 0.0;
    for r in &rows {
        let y = coder.forward(&r.input).unwrap();
        for o in 0..4 {
            err += (y[o] - r.target[o]).powi(2);
            var += (r.target[o] - mean[o]).powi(2);
        }
    }
    let report = fvu(&coder, &mut MemoryRows::new(rows)).unwrap();
    assert!((report.fvu - err / var).abs() <= 1e-10 * (err / var));
    assert!((report.variance_explained_pct - 100.0 * (1.0 - err / var)).abs() < 1e-8);
    assert_eq!(report.n_rows, 3000);
}

#[test]
fn latent_stats_match_brute_force() {
    let coder = random_coder(3, 4, 4, 10, 2);
    let rows = random_rows(4, 800, 4, 4);
    let mut counts = [0u64; 10];
    let mut sums = [0.0f64; 10];
    for r in &rows {
        let pre = coder.preactivations(&r.input).unwrap();
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| pre[b].total_cmp(&pre[a]).then(a.cmp(&b)));
        for &i in &order[..2] {
            if pre[i] != 0.0 {
                counts[i] += 1;
                sums[i] += pre[i];
            }
        }
    }
    let report = latent_stats(&coder, &mut MemoryRows::new(rows)).unwrap();
    assert_eq!(report.n_tokens, 800);
    for (l, (&c, &s)) in report.latents.iter().zip(counts.iter().zip(&sums)) {
        assert_eq!(l.active_tokens, c);
        assert_eq!(l.density, c as f64 / 800.0);
        assert!((l.activation_sum - s).abs() < 1e-9);
    }
    assert_eq!(report.histogram.total(), 10);
}

#[test]
fn planted_shard_rows_satisfy_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let dict = PlantedDictionary::random(&PlantedSpec {
        d_in: 8,
        d_out: 6,
        n_features: 10,
        feature_prob: 0.2,
        linear_scale: 1.0,
        offset_scale: 0.5,
        seed: 5,
    })
    .unwrap();
    let path = dir.path().join("p.acts");
    gen_planted(&dict, 500, InputDist::Gaussian, 6, &path).unwrap();

    let saved = dir.path().join("dict.tck");
    dict.save(&saved).unwrap();
    let dict = PlantedDictionary::load(&saved).unwrap();

    let mut fired = 0;
    for row in read_shard(&path).unwrap().1 {
        let row = row.unwrap();
        let x: Vec<f64> = row.input.iter().map(|&v| f64::from(v)).collect();
        // Recompute from the raw definition rather than `dict.target`.
        let mut y = dict.offset.clone();
        for i in 0..dict.n_features() {
            let pre: f64 = dict.detectors.row(i).iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() - dict.thresholds[i];
            if pre > 0.0 {
                fired += 1;
                for (o, yo) in y.iter_mut().enumerate() {
                    *yo += pre * dict.directions[(o, i)];
                }
            }
        }
        let lin = dict.linear.as_ref().unwrap();
        for (o, yo) in y.iter_mut().enumerate() {
            *yo += lin.row(o).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        }
        for (&got, want) in row.target.iter().zip(y) {
            assert_eq!(got, want as f32);
        }
    }
    // About 0.2 · 10 · 500 firings.
    assert!((700..1300).contains(&fired), "{fired}");
}

#[test]
fn recovery_score_matches_brute_force_under_noise() {
    let dict = PlantedDictionary::random(&PlantedSpec {
        d_in: 6,
        d_out: 6,
        n_features: 5,
        feature_prob: 0.1,
        linear_scale: 0.0,
        offset_scale: 0.0,
        seed: 8,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n_latents = 12;
    let mut decoder = Matrix::zeros(6, n_latents);
    for j in 0..n_latents {
        for o in 0..6 {
            let base = if j < 5 { 2.0 * dict.directions[(o, j)] } else { 0.0 };
            decoder[(o, j)] = base + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    // One all-zero column is ignored.
    for o in 0..6 {
        decoder[(o, 11)] = 0.0;
    }
    let cfg = CoderConfig {
        d_in: 6,
        d_out: 6,
        n_latents,
        k: 2,
        arch: Arch::Transcoder,
        seed: 0,
    };
    let coder = SparseCoder::from_parts(cfg, Matrix::zeros(n_latents, 6), vec![0.0; n_latents], decoder.clone(), vec![0.0; 6], None).unwrap();
    let r = recovery_score(&coder, &dict).unwrap();
    assert_eq!(r.zero_columns, 1);
    let mut total = 0.0;
    for i in 0..5 {
        let v = dict.directions.column(i);
        let mut best = 0.0f64;
        for j in 0..11 {
            let c = decoder.column(j);
            let cos = c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / c.iter().map(|a| a * a).sum::<f64>().sqrt();
            best = best.max(cos.abs());
        }
        assert!((r.per_feature[i] - best).abs() < 1e-12);
        total += best;
    }
    assert!((r.score - total / 5.0).abs() < 1e-12);
    assert!(r.score > 0.95 && r.score < 1.0);
}

#[test]
fn patching_with_the_mean_output_costs_cross_entropy() {
    let model = ToyLm::<f64>::new(ToyLmConfig::default()).unwrap();
    let corpus = gen_toy_corpus(&model, 2000, CorpusSampling::Model, 1).unwrap();
    let mut data = MemoryRows::new(corpus.rows.clone());
    let cfg = CoderConfig {
        d_in: 32,
        d_out: 32,
        n_latents: 64,
        k: 8,
        arch: Arch::Transcoder,
        seed: 2,
    };
    let coder = tcoder_core::train::init_from_data(cfg, &mut data).unwrap();
    let r = patch_delta_ce(&model, &coder, &corpus.tokens).unwrap();
    assert!(r.delta_ce > 0.0);
    assert_eq!(r.n_predictions, 1999);
    assert!((r.delta_ce - (r.ce_patched - r.ce_base)).abs() < 1e-12);
}

#[test]
fn sampled_windows_are_consistent_with_the_trace() {
    let coder = random_coder(10, 4, 4, 16, 2);
    let rows = random_rows(11, 3000, 4, 4);
    let tokens: Vec<u32> = (0..3000).map(|i| (i * 7 % 50) as u32).collect();
    let config = SamplingConfig {
        seed: 12,
        ..SamplingConfig::default()
    };
    let traces = latent_activations(&coder, &mut MemoryRows::new(rows), &[0, 5]).unwrap();
    for (latent, trace) in [0usize, 5].iter().zip(&traces) {
        let ex = match sample_latent_examples(&tokens, trace, *latent, &config) {
            Ok(ex) => ex,
            Err(_) => continue,
        };
        for (b, bin) in ex.activating.iter().enumerate() {
            let (lo, hi) = ex.bin_bounds[b];
            for w in bin {
                let pos = w.record_position.unwrap();
                assert!(trace[pos] >= lo && trace[pos] <= hi);
                assert_eq!(w.tokens, tokens[w.start..w.start + w.tokens.len()]);
                assert_eq!(w.activations[pos - w.start], trace[pos]);
                assert_eq!(w.truncated, w.tokens.len() < 32);
            }
        }
        for w in &ex.non_activating {
            assert!(w.activations.iter().all(|&a| a == 0.0));
            assert_eq!(w.tokens.len(), 32);
        }
        let again = sample_latent_examples(&tokens, trace, *latent, &config).unwrap();
        assert_eq!(again, ex);
    }
}

proptest! {
    #[test]
    fn fvu_is_scale_invariant(scale in 0.01f64..100.0, seed in 0u64..1000) {
        let coder = random_coder(seed, 3, 3, 6, 2);
        let rows = random_rows(seed + 1, 200, 3, 3);
        let base = fvu(&coder, &mut MemoryRows::new(rows.clone())).unwrap().fvu;
        // Scaling targets and the coder's output layer together leaves FVU fixed.
        let mut scaled = coder.clone();
        for v in scaled.decoder_mut().as_mut_slice() { *v *= scale; }
        for v in scaled.decoder_bias_mut() { *v *= scale; }
        for v in scaled.skip_mut().unwrap().as_mut_slice() { *v *= scale; }
        let rows: Vec<ShardRow<f64>> = rows
            .into_iter()
            .map(|r| ShardRow::new(r.input, r.target.iter().map(|t| t * scale).collect()))
            .collect();
        let f = fvu(&scaled, &mut MemoryRows::new(rows)).unwrap().fvu;
        prop_assert!((f - base).abs() <= 1e-9 * base);
    }
}
