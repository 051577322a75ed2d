mod support;

use locustcast::lstm::ModelConfig;
use locustcast::optim::{dataset_mse, train, AdamHyper, SelectionMetric, TrainConfig};

fn overfit_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 64,
        seed: 2,
        selection: SelectionMetric::FinalEpoch,
    }
}

fn fast() -> AdamHyper {
    AdamHyper {
        learning_rate: 1e-2,
        ..AdamHyper::default()
    }
}

#[test]
fn memorises_repeated_sample() {
    let one = support::distinct_samples(1, 12, 21).remove(0);
    let mut one = one;
    one.target = 3;
    let samples = vec![one; 20];
    let (params, history) = train(
        &samples,
        &[],
        ModelConfig::default(),
        &overfit_config(500),
        &fast(),
    )
    .unwrap();
    let mse = dataset_mse(&samples, &params).unwrap();
    assert!(mse < 1e-2, "mse {mse}");
    assert_eq!(history.selected_epoch, 499);
}

#[test]
fn smoothed_loss_does_not_increase_on_overfit_fixture() {
    let samples = support::distinct_samples(20, 12, 5);
    let (_, history) = train(
        &samples,
        &[],
        ModelConfig::default(),
        &overfit_config(200),
        &fast(),
    )
    .unwrap();
    let medians: Vec<f64> = history
        .train_mse
        .chunks(10)
        .map(|w| {
            let mut w = w.to_vec();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        })
        .collect();
    for pair in medians.windows(2) {
        assert!(pair[1] <= pair[0], "{medians:?}");
    }
}

#[test]
fn same_seed_same_history_and_params() {
    let samples = support::distinct_samples(40, 6, 8);
    let val = support::distinct_samples(10, 6, 9);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 16,
        seed: 4,
        selection: SelectionMetric::ValidationMse,
    };
    let model = ModelConfig {
        hidden_dim: 8,
        ..ModelConfig::default()
    };
    let a = train(&samples, &val, model, &cfg, &AdamHyper::default()).unwrap();
    let b = train(&samples, &val, model, &cfg, &AdamHyper::default()).unwrap();
    assert_eq!(a.0.as_slice(), b.0.as_slice());
    assert_eq!(a.1, b.1);
    let c = train(
        &samples,
        &val,
        model,
        &TrainConfig { seed: 5, ..cfg },
        &AdamHyper::default(),
    )
    .unwrap();
    assert_ne!(a.0.as_slice(), c.0.as_slice());
}
