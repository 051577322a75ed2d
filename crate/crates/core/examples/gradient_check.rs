//! Compares backpropagation-through-time gradients with central finite
//! differences for both hidden-state variants.

use locustcast::lstm::{backward, forward, init_params, ModelConfig, ModelParams};

fn loss(inputs: &[Vec<f64>], p: &ModelParams, target: f64) -> f64 {
    let z = forward(inputs, p).unwrap().0;
    0.5 * (z - target).powi(2)
}

fn main() {
    let inputs: Vec<Vec<f64>> = (0..5)
        .map(|t| {
            (0..15)
                .map(|j| ((t * 15 + j) as f64 * 0.37).sin())
                .collect()
        })
        .collect();
    let target = 2.0;
    let eps = 1e-5;
    for raw_cell in [true, false] {
        let cfg = ModelConfig {
            input_dim: 15,
            hidden_dim: 4,
            follow_paper_hidden_update: raw_cell,
        };
        let params = init_params(cfg, 42).unwrap();
        let (z, trace) = forward(&inputs, &params).unwrap();
        let grads = backward(&trace, z - target, &params).unwrap();

        let mut probe = params.clone();
        let mut worst: f64 = 0.0;
        for k in 0..params.len() {
            let v = probe.as_slice()[k];
            probe.as_mut_slice()[k] = v + eps;
            let up = loss(&inputs, &probe, target);
            probe.as_mut_slice()[k] = v - eps;
            let down = loss(&inputs, &probe, target);
            probe.as_mut_slice()[k] = v;
            let numeric = (up - down) / (2.0 * eps);
            let a = grads.as_slice()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7));
        }
        let variant = if raw_cell {
            "h = o * c"
        } else {
            "h = o * tanh(c)"
        };
        println!(
            "{variant:<16} {} parameters, max relative error {worst:.2e}",
            params.len()
        );
    }
}
