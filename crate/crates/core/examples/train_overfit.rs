//! Trains the LSTM with Adam on a tiny fixed dataset until it memorises the
//! targets, printing the loss curve.

use locustcast::dataset::SequenceSample;
use locustcast::grid::{CellIndex, MonthIndex};
use locustcast::ingest::FEATURE_DIM;
use locustcast::lstm::ModelConfig;
use locustcast::optim::{dataset_mse, train, AdamHyper, SelectionMetric, TrainConfig};

fn main() -> locustcast::Result<()> {
    let samples: Vec<SequenceSample> = (0..20u32)
        .map(|i| {
            let target = i % 4;
            let inputs = (0..12)
                .map(|t| {
                    let mut v = [0.0; FEATURE_DIM];
                    v[0] = target as f64 - 1.5;
                    v[1] = ((i * 12 + t) as f64).cos();
                    v
                })
                .collect();
            SequenceSample {
                cell: CellIndex::new(i as usize, 0),
                target_month: MonthIndex(12),
                inputs,
                target,
            }
        })
        .collect();

    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 64,
        seed: 1,
        selection: SelectionMetric::FinalEpoch,
    };
    let hyper = AdamHyper {
        learning_rate: 1e-2,
        ..AdamHyper::default()
    };
    let (params, history) = train(&samples, &[], ModelConfig::default(), &cfg, &hyper)?;
    for (epoch, mse) in history.train_mse.iter().enumerate().step_by(30) {
        println!("epoch {:>3}  mse {mse:.5}", epoch + 1);
    }
    println!("final mse {:.2e}", dataset_mse(&samples, &params)?);
    Ok(())
}
