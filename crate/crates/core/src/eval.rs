//! Binarised attack/no-attack evaluation: macro precision and recall over the
//! two classes, plus recall per attack-density bin.

use std::fmt::Write as _;
use std::io::Write;

use log::warn;
use rayon::prelude::*;

use crate::dataset::{HistoryIndex, SampleSet};
use crate::error::{Error, Result};
use crate::grid::{CellIndex, MonthIndex};
use crate::ingest::{CellMonthFeatures, FEATURE_SCHEMA_VERSION};
use crate::lstm::{predict, Checkpoint};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Attack density of a positive count: 1, 2 to 4, or more than 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DensityBin {
    Low,
    Medium,
    High,
}

impl DensityBin {
    pub const ALL: [DensityBin; 3] = [DensityBin::Low, DensityBin::Medium, DensityBin::High];

    /// `None` for a zero count.
    pub fn of(count: u64) -> Option<DensityBin> {
        match count {
            0 => None,
            1 => Some(DensityBin::Low),
            2..=4 => Some(DensityBin::Medium),
            _ => Some(DensityBin::High),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DensityBin::Low => "low",
            DensityBin::Medium => "medium",
            DensityBin::High => "high",
        }
    }
}

/// 1 iff `value > threshold`.
pub fn binarize(value: f64, threshold: f64) -> Result<u8> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("prediction {value}")));
    }
    Ok((value > threshold) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroMetrics {
    pub confusion: ConfusionCounts,
    pub no_attack: ClassMetrics,
    pub attack: ClassMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

fn ratio(num: u64, den: u64, what: &str) -> f64 {
    if den == 0 {
        warn!("{what} has a zero denominator; scoring it 0");
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn macro_precision_recall(pred: &[u8], truth: &[u8]) -> Result<MacroMetrics> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "need equal non-empty label vectors, got {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => {
                return Err(Error::Data(format!(
                    "labels must be 0 or 1, got ({p}, {t})"
                )))
            }
        }
    }
    let attack = ClassMetrics {
        precision: ratio(c.tp, c.tp + c.fp, "attack-class precision"),
        recall: ratio(c.tp, c.tp + c.fn_, "attack-class recall"),
    };
    let no_attack = ClassMetrics {
        precision: ratio(c.tn, c.tn + c.fn_, "no-attack-class precision"),
        recall: ratio(c.tn, c.tn + c.fp, "no-attack-class recall"),
    };
    Ok(MacroMetrics {
        confusion: c,
        no_attack,
        attack,
        macro_precision: (attack.precision + no_attack.precision) / 2.0,
        macro_recall: (attack.recall + no_attack.recall) / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinRecall {
    /// Indexed by `DensityBin as usize`.
    pub recall: [f64; 3],
    pub support: [u64; 3],
}

impl BinRecall {
    pub fn get(&self, bin: DensityBin) -> f64 {
        self.recall[bin as usize]
    }
}

/// For each density bin, the share of entries whose true count is in the bin
/// and whose prediction binarises to 1. Zero-count entries are ignored.
pub fn density_bin_recall(pred: &[f64], truth: &[u64], threshold: f64) -> Result<BinRecall> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} true counts",
            pred.len(),
            truth.len()
        )));
    }
    let mut hits = [0u64; 3];
    let mut out = BinRecall::default();
    for (&p, &t) in pred.iter().zip(truth) {
        if let Some(bin) = DensityBin::of(t) {
            out.support[bin as usize] += 1;
            hits[bin as usize] += binarize(p, threshold)? as u64;
        }
    }
    for bin in DensityBin::ALL {
        let i = bin as usize;
        out.recall[i] = ratio(
            hits[i],
            out.support[i],
            &format!("{} density bin", bin.label()),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    pub n_evaluated: usize,
    pub metrics: MacroMetrics,
    pub bins: BinRecall,
}

impl EvalReport {
    pub fn macro_precision(&self) -> f64 {
        self.metrics.macro_precision
    }

    pub fn macro_recall(&self) -> f64 {
        self.metrics.macro_recall
    }

    /// `key=value` lines, one per metric.
    pub fn to_key_values(&self) -> String {
        let m = &self.metrics;
        let c = &m.confusion;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("macro_precision", m.macro_precision.to_string());
        kv("macro_recall", m.macro_recall.to_string());
        kv("recall_low", self.bins.get(DensityBin::Low).to_string());
        kv(
            "recall_medium",
            self.bins.get(DensityBin::Medium).to_string(),
        );
        kv("recall_high", self.bins.get(DensityBin::High).to_string());
        kv("tp", c.tp.to_string());
        kv("fp", c.fp.to_string());
        kv("fn", c.fn_.to_string());
        kv("tn", c.tn.to_string());
        kv("precision_attack", m.attack.precision.to_string());
        kv("recall_attack", m.attack.recall.to_string());
        kv("precision_no_attack", m.no_attack.precision.to_string());
        kv("recall_no_attack", m.no_attack.recall.to_string());
        kv("support_low", self.bins.support[0].to_string());
        kv("support_medium", self.bins.support[1].to_string());
        kv("support_high", self.bins.support[2].to_string());
        kv("n_evaluated", self.n_evaluated.to_string());
        kv("threshold", self.threshold.to_string());
        s
    }

    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let c = &m.confusion;
        let pct = |v: f64| format!("{:.1}%", 100.0 * v);
        let mut s = String::new();
        writeln!(
            s,
            "entries evaluated: {} (threshold > {})",
            self.n_evaluated, self.threshold
        )
        .unwrap();
        writeln!(s, "macro precision:   {}", pct(m.macro_precision)).unwrap();
        writeln!(s, "macro recall:      {}", pct(m.macro_recall)).unwrap();
        writeln!(
            s,
            "  attack     precision {} recall {}",
            pct(m.attack.precision),
            pct(m.attack.recall)
        )
        .unwrap();
        writeln!(
            s,
            "  no attack  precision {} recall {}",
            pct(m.no_attack.precision),
            pct(m.no_attack.recall)
        )
        .unwrap();
        writeln!(
            s,
            "confusion: tp {} fp {} fn {} tn {}",
            c.tp, c.fp, c.fn_, c.tn
        )
        .unwrap();
        writeln!(s, "recall by density:").unwrap();
        for bin in DensityBin::ALL {
            writeln!(
                s,
                "  {:<6} {} ({} entries)",
                bin.label(),
                pct(self.bins.get(bin)),
                self.bins.support[bin as usize]
            )
            .unwrap();
        }
        s
    }

    pub fn write_key_values<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_key_values().as_bytes())?;
        Ok(())
    }
}

/// Scores raw predicted counts against true counts.
pub fn evaluate_predictions(pred: &[f64], truth: &[u64], threshold: f64) -> Result<EvalReport> {
    if pred.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let pred_labels = pred
        .iter()
        .map(|&p| binarize(p, threshold))
        .collect::<Result<Vec<u8>>>()?;
    let true_labels: Vec<u8> = truth.iter().map(|&t| (t >= 1) as u8).collect();
    Ok(EvalReport {
        threshold,
        n_evaluated: pred.len(),
        metrics: macro_precision_recall(&pred_labels, &true_labels)?,
        bins: density_bin_recall(pred, truth, threshold)?,
    })
}

/// Raw predictions for every sample, with the checkpoint's normalisation applied.
pub fn predict_samples(ckpt: &Checkpoint, set: &SampleSet) -> Result<Vec<f64>> {
    if ckpt.schema_version != set.schema_version {
        return Err(Error::SchemaMismatch {
            checkpoint: ckpt.schema_version,
            samples: set.schema_version,
        });
    }
    set.samples
        .par_iter()
        .map(|s| predict(&ckpt.norm.apply(s).inputs, &ckpt.params))
        .collect()
}

pub fn evaluate(ckpt: &Checkpoint, set: &SampleSet, threshold: f64) -> Result<EvalReport> {
    if set.samples.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let pred = predict_samples(ckpt, set)?;
    let truth: Vec<u64> = set.samples.iter().map(|s| s.target as u64).collect();
    evaluate_predictions(&pred, &truth, threshold)
}

/// Forecast for `month` at every cell with at least one row in the preceding
/// `window` months, in `y`, then `x` order.
pub fn forecast_month(
    ckpt: &Checkpoint,
    rows: &[CellMonthFeatures],
    month: MonthIndex,
    window: usize,
) -> Result<Vec<(CellIndex, f64)>> {
    if ckpt.schema_version != FEATURE_SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            checkpoint: ckpt.schema_version,
            samples: FEATURE_SCHEMA_VERSION,
        });
    }
    if window == 0 || (month.0 as usize) < window {
        return Err(Error::Data(format!(
            "month {month} has fewer than {window} months of history after the epoch"
        )));
    }
    let index = HistoryIndex::new(rows);
    let cells = index.cells_with_history(month, window);
    cells
        .par_iter()
        .map(|&cell| {
            let mut inputs = index.window(cell, month, window);
            inputs.iter_mut().for_each(|v| ckpt.norm.apply_vector(v));
            Ok((cell, predict(&inputs, &ckpt.params)?))
        })
        .collect()
}
