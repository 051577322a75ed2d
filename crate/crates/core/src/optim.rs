//! MSE loss, Adam, and the epoch loop with validation-based model selection.

use std::io::Write;

use log::{debug, warn};
use rayon::prelude::*;

use crate::dataset::{batch_indices, SequenceSample};
use crate::error::{Error, Result};
use crate::lstm::{backward, forward, init_params, predict, Gradients, ModelConfig, ModelParams};

/// Mean squared error and its gradient with respect to each prediction.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "mse needs equal non-empty lengths, got {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grads = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if !ok {
            return Err(Error::Config(format!(
                "invalid Adam hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            t: 0,
        }
    }
}

/// One Adam update in place. Gradients are clipped to `clip_norm` by global
/// norm before the moment updates.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    params.check_same_shape(grads)?;
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(
            "optimizer state does not match parameters".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    let norm = grads.global_norm();
    let scale = match hyper.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    let t = state.t + 1;
    let bc1 = 1.0 - hyper.beta1.powf(t as f64);
    let bc2 = 1.0 - hyper.beta2.powf(t as f64);
    let p = params.as_mut_slice();
    for (k, &g) in grads.as_slice().iter().enumerate() {
        let g = g * scale;
        state.m[k] = hyper.beta1 * state.m[k] + (1.0 - hyper.beta1) * g;
        state.v[k] = hyper.beta2 * state.v[k] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        p[k] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
    state.t = t;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMetric {
    ValidationMse,
    FinalEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub selection: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            seed: 0,
            selection: SelectionMetric::ValidationMse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "epochs ({}) and batch size ({}) must be positive",
                self.epochs, self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_mse: Vec<f64>,
    /// `None` for every epoch when there is no validation data.
    pub val_mse: Vec<Option<f64>>,
    pub selected_epoch: usize,
}

impl TrainHistory {
    /// CSV with header `epoch,train_mse,val_mse`; epochs count from 1 and a
    /// missing validation loss is an empty field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_mse", "val_mse"])?;
        for (e, (tr, va)) in self.train_mse.iter().zip(&self.val_mse).enumerate() {
            w.write_record([
                (e + 1).to_string(),
                tr.to_string(),
                va.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean squared error of the model over a sample set, evaluated in parallel
/// and reduced in sample order.
pub fn dataset_mse(samples: &[SequenceSample], params: &ModelParams) -> Result<f64> {
    let preds = samples
        .par_iter()
        .map(|s| predict(&s.inputs, params))
        .collect::<Result<Vec<f64>>>()?;
    let targets: Vec<f64> = samples.iter().map(|s| s.target as f64).collect();
    Ok(mse_loss(&preds, &targets)?.0)
}

/// Mean loss and mean gradient over one batch.
fn batch_gradient(batch: &[&SequenceSample], params: &ModelParams) -> Result<(f64, Gradients)> {
    let n = batch.len() as f64;
    let per_sample = batch
        .par_iter()
        .map(|s| {
            let (z, trace) = forward(&s.inputs, params)?;
            let diff = z - s.target as f64;
            if !diff.is_finite() {
                return Ok((f64::INFINITY, None));
            }
            Ok((diff * diff, Some(backward(&trace, 2.0 * diff / n, params)?)))
        })
        .collect::<Result<Vec<(f64, Option<Gradients>)>>>()?;
    let mut total = ModelParams::zeros(*params.config());
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        if let Some(g) = g {
            total.accumulate(g)?;
        }
    }
    Ok((loss / n, total))
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch as u64)
}

/// Trains from a seeded initialisation. Samples are expected to be
/// normalised already. Returns the parameters of the selected epoch.
pub fn train(
    train_samples: &[SequenceSample],
    val_samples: &[SequenceSample],
    model: ModelConfig,
    cfg: &TrainConfig,
    hyper: &AdamHyper,
) -> Result<(ModelParams, TrainHistory)> {
    let init = init_params(model, cfg.seed)?;
    train_from(init, train_samples, val_samples, cfg, hyper)
}

pub fn train_from(
    mut params: ModelParams,
    train_samples: &[SequenceSample],
    val_samples: &[SequenceSample],
    cfg: &TrainConfig,
    hyper: &AdamHyper,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    hyper.validate()?;
    if train_samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let use_val = cfg.selection == SelectionMetric::ValidationMse && !val_samples.is_empty();
    if cfg.selection == SelectionMetric::ValidationMse && val_samples.is_empty() {
        warn!("validation set is empty; selecting the final epoch");
    }

    let mut state = AdamState::new(&params);
    let mut history = TrainHistory {
        train_mse: Vec::with_capacity(cfg.epochs),
        val_mse: Vec::with_capacity(cfg.epochs),
        selected_epoch: cfg.epochs - 1,
    };
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        let order = batch_indices(
            train_samples.len(),
            cfg.batch_size,
            epoch_seed(cfg.seed, epoch),
        )?;
        let mut weighted = 0.0;
        for (b, idx) in order.iter().enumerate() {
            let batch: Vec<&SequenceSample> = idx.iter().map(|&i| &train_samples[i]).collect();
            let (loss, grads) = batch_gradient(&batch, &params)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss,
                });
            }
            adam_step(&mut params, &grads, &mut state, hyper)?;
            weighted += loss * batch.len() as f64;
        }
        let train_mse = weighted / train_samples.len() as f64;
        let val_mse = if use_val {
            Some(dataset_mse(val_samples, &params)?)
        } else {
            None
        };
        if val_mse.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                batch: order.len(),
                loss: val_mse.unwrap_or(f64::NAN),
            });
        }
        debug!(
            "epoch {}: train mse {train_mse:.6}, val mse {val_mse:?}",
            epoch + 1
        );
        history.train_mse.push(train_mse);
        history.val_mse.push(val_mse);

        if let Some(v) = val_mse {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, params.clone()));
                history.selected_epoch = epoch;
            }
        }
    }

    let chosen = match best {
        Some((_, p)) => p,
        None => params,
    };
    Ok((chosen, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellIndex, MonthIndex};

    #[test]
    fn mse_hand_values() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
        let (l, g) = mse_loss(&[3.0], &[1.0]).unwrap();
        assert_eq!((l, g), (4.0, vec![4.0]));
        let (l, g) = mse_loss(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
        assert!(
            (g[0] + 2.0 / 3.0).abs() < 1e-15 && g[1] == 0.0 && (g[2] - 2.0 / 3.0).abs() < 1e-15
        );
        assert!(mse_loss(&[], &[]).is_err());
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn scalar_params(v: f64) -> ModelParams {
        let cfg = ModelConfig {
            input_dim: 1,
            hidden_dim: 1,
            follow_paper_hidden_update: true,
        };
        let mut p = ModelParams::zeros(cfg);
        p.set_b_p(v);
        p
    }

    fn only_bias_grad(g: f64) -> Gradients {
        scalar_params(g)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = crate::lstm::init_params(ModelConfig::default(), 2).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(
            &mut p,
            &ModelParams::zeros(ModelConfig::default()),
            &mut st,
            &AdamHyper::default(),
        )
        .unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let hyper = AdamHyper {
            clip_norm: None,
            ..AdamHyper::default()
        };
        adam_step(&mut p, &only_bias_grad(1.0), &mut st, &hyper).unwrap();
        assert!((p.b_p() - (-1e-4 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn clipping_scales_gradients() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let hyper = AdamHyper {
            clip_norm: Some(1.0),
            ..AdamHyper::default()
        };
        adam_step(&mut p, &only_bias_grad(10.0), &mut st, &hyper).unwrap();
        let n = st.m.len();
        assert!((st.m[n - 1] - 0.1 * 1.0).abs() < 1e-15);
        assert!((st.v[n - 1] - 0.001 * 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradients_rejected() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let r = adam_step(
            &mut p,
            &only_bias_grad(f64::INFINITY),
            &mut st,
            &AdamHyper::default(),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn step_decreases_quadratic() {
        // loss (w - 1)^2 / 2 from w = 0
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let hyper = AdamHyper {
            learning_rate: 1e-3,
            ..AdamHyper::default()
        };
        let loss = |w: f64| (w - 1.0) * (w - 1.0) / 2.0;
        let before = loss(p.b_p());
        let g = p.b_p() - 1.0;
        adam_step(&mut p, &only_bias_grad(g), &mut st, &hyper).unwrap();
        assert!(loss(p.b_p()) < before);
    }

    #[test]
    fn hyper_validation() {
        assert!(AdamHyper::default().validate().is_ok());
        assert!(AdamHyper {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamHyper {
            beta2: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamHyper {
            clip_norm: Some(-1.0),
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    fn tiny_sample(target: u32, v: f64) -> SequenceSample {
        SequenceSample {
            cell: CellIndex::new(0, 0),
            target_month: MonthIndex(20),
            inputs: vec![[v; 15]; 3],
            target,
        }
    }

    #[test]
    fn empty_validation_falls_back_to_final_epoch() {
        let samples = vec![tiny_sample(1, 0.1), tiny_sample(0, -0.1)];
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            seed: 4,
            selection: SelectionMetric::ValidationMse,
        };
        let model = ModelConfig {
            hidden_dim: 3,
            ..ModelConfig::default()
        };
        let (p, h) = train(&samples, &[], model, &cfg, &AdamHyper::default()).unwrap();
        assert_eq!(h.selected_epoch, 0);
        assert_eq!(h.val_mse, vec![None]);
        assert_ne!(p, crate::lstm::init_params(model, 4).unwrap());
        assert!(train(&[], &[], model, &cfg, &AdamHyper::default()).is_err());
    }

    #[test]
    fn history_csv_format() {
        let h = TrainHistory {
            train_mse: vec![1.5, 0.25],
            val_mse: vec![Some(2.0), None],
            selected_epoch: 0,
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_mse,val_mse\n1,1.5,2\n2,0.25,\n"
        );
    }

    #[test]
    fn divergence_is_reported() {
        let samples = vec![tiny_sample(1, 0.1)];
        let mut p = crate::lstm::init_params(ModelConfig::default(), 1).unwrap();
        p.set_b_p(f64::INFINITY);
        let r = train_from(
            p,
            &samples,
            &[],
            &TrainConfig {
                epochs: 1,
                ..Default::default()
            },
            &AdamHyper::default(),
        );
        assert!(matches!(
            r,
            Err(Error::Divergence {
                epoch: 1,
                batch: 1,
                ..
            })
        ));
    }
}
