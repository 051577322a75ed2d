#![allow(dead_code)]

use locustcast::dataset::SequenceSample;
use locustcast::grid::{CellIndex, MonthIndex};
use locustcast::ingest::{FeatureVector, FEATURE_DIM};
use locustcast::lstm::{backward, forward, init_params, ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Evaluates the recurrence and head directly from the flat parameter
/// buffer, laid out as W_i W_f W_o W_c | U_i U_f U_o U_c | b_i b_f b_o b_c |
/// W_p | b_p with row-major hidden x hidden and hidden x input blocks.
pub fn reference_forward(params: &ModelParams, inputs: &[Vec<f64>]) -> f64 {
    let cfg = *params.config();
    let (n, d) = (cfg.hidden_dim, cfg.input_dim);
    let p = params.as_slice();
    let w_off = |g: usize| g * n * n;
    let u_off = |g: usize| 4 * n * n + g * n * d;
    let b_off = |g: usize| 4 * n * n + 4 * n * d + g * n;
    let wp_off = 4 * n * n + 4 * n * d + 4 * n;

    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for x in inputs {
        let mut pre = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (g, out) in pre.iter_mut().enumerate() {
            for r in 0..n {
                let mut s = p[b_off(g) + r];
                for j in 0..n {
                    s += p[w_off(g) + r * n + j] * h[j];
                }
                for j in 0..d {
                    s += p[u_off(g) + r * d + j] * x[j];
                }
                out[r] = s;
            }
        }
        let mut h_new = vec![0.0; n];
        for r in 0..n {
            let i = sig(pre[0][r]);
            let f = sig(pre[1][r]);
            let o = sig(pre[2][r]);
            let cand = pre[3][r].tanh();
            c[r] = i * cand + f * c[r];
            h_new[r] = if cfg.follow_paper_hidden_update {
                o * c[r]
            } else {
                o * c[r].tanh()
            };
        }
        h = h_new;
    }
    let mut z = p[wp_off + n];
    for r in 0..n {
        z += p[wp_off + r] * h[r];
    }
    z
}

/// A seeded model whose biases are also randomised, so every gate is away
/// from its initial operating point.
pub fn random_model(config: ModelConfig, seed: u64) -> ModelParams {
    let mut p = init_params(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let n = p.len();
    let bias_start =
        4 * config.hidden_dim * config.hidden_dim + 4 * config.hidden_dim * config.input_dim;
    for v in &mut p.as_mut_slice()[bias_start..n] {
        *v += rng.random_range(-0.5..0.5);
    }
    p
}

pub fn random_sequence(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Largest per-parameter relative error between backprop and central
/// differences of `0.5 (z - y)^2`. The denominator is floored at 1e-7 so that
/// parameters with vanishing gradients compare on absolute error.
pub fn max_fd_relative_error(
    params: &ModelParams,
    inputs: &[Vec<f64>],
    target: f64,
    eps: f64,
) -> f64 {
    let loss = |p: &ModelParams| {
        let (z, _) = forward(inputs, p).unwrap();
        0.5 * (z - target) * (z - target)
    };
    let (z, trace) = forward(inputs, params).unwrap();
    let analytic = backward(&trace, z - target, params).unwrap();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + eps;
        let up = loss(&probe);
        probe.as_mut_slice()[k] = orig - eps;
        let down = loss(&probe);
        probe.as_mut_slice()[k] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.as_slice()[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    worst
}

pub fn sample(inputs: Vec<FeatureVector>, target: u32) -> SequenceSample {
    SequenceSample {
        cell: CellIndex::new(0, 0),
        target_month: MonthIndex(inputs.len() as u32),
        inputs,
        target,
    }
}

/// `n` distinct samples of length `len` with small integer targets tied to
/// their inputs.
pub fn distinct_samples(n: usize, len: usize, seed: u64) -> Vec<SequenceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let target = rng.random_range(0..4u32);
            let inputs = (0..len)
                .map(|_| {
                    let mut v = [0.0; FEATURE_DIM];
                    for x in v.iter_mut() {
                        *x = rng.random_range(-1.0..1.0);
                    }
                    v[0] = target as f64 - 1.5;
                    v
                })
                .collect();
            sample(inputs, target)
        })
        .collect()
}
