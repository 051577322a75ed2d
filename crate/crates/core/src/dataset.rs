//! Date splits, 12-month sequence samples, input normalisation and seeded batching.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{month_index, CellIndex, MonthIndex};
use crate::ingest::{
    CellMonthFeatures, FeatureVector, CONTINUOUS_DIMS, FEATURE_DIM, FEATURE_SCHEMA_VERSION,
};

pub const DEFAULT_WINDOW: usize = 12;
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Validation, SplitKind::Test];

    pub fn label(self) -> &'static str {
        match self {
            SplitKind::Train => "Training",
            SplitKind::Validation => "Validation",
            SplitKind::Test => "Test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Inclusive month span touched by the range.
    pub fn months(&self) -> Result<(MonthIndex, MonthIndex)> {
        let m = |d: NaiveDate| {
            month_index(d.year(), d.month())
                .map_err(|e| Error::Config(format!("split date {d}: {e}")))
        };
        Ok((m(self.start)?, m(self.end)?))
    }
}

/// Train / validation / test date ranges. Defaults are the historical
/// 1985-01-01..2017-05-31, 2017-06-01..2019-06-30 and 2019-07-01..2021-07-31.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: DateRange,
    pub validation: DateRange,
    pub test: DateRange,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: DateRange::new(ymd(1985, 1, 1), ymd(2017, 5, 31)),
            validation: DateRange::new(ymd(2017, 6, 1), ymd(2019, 6, 30)),
            test: DateRange::new(ymd(2019, 7, 1), ymd(2021, 7, 31)),
        }
    }
}

impl SplitSpec {
    pub fn range(&self, kind: SplitKind) -> &DateRange {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Validation => &self.validation,
            SplitKind::Test => &self.test,
        }
    }

    /// Ranges must be non-empty, chronologically ordered, and must not share
    /// a calendar month (rows are monthly).
    pub fn validate(&self) -> Result<()> {
        let mut prev_end: Option<(SplitKind, MonthIndex)> = None;
        for kind in SplitKind::ALL {
            let r = self.range(kind);
            if r.start > r.end {
                return Err(Error::Config(format!(
                    "{} split starts ({}) after it ends ({})",
                    kind.label(),
                    r.start,
                    r.end
                )));
            }
            let (first, last) = r.months()?;
            if let Some((pk, pend)) = prev_end {
                if first <= pend {
                    return Err(Error::Config(format!(
                        "{} split overlaps {} split in month {}",
                        kind.label(),
                        pk.label(),
                        first
                    )));
                }
            }
            prev_end = Some((kind, last));
        }
        Ok(())
    }

    pub fn route_date(&self, date: NaiveDate) -> Option<SplitKind> {
        SplitKind::ALL
            .into_iter()
            .find(|k| self.range(*k).contains(date))
    }

    pub fn route_month(&self, month: MonthIndex) -> Result<Option<SplitKind>> {
        for kind in SplitKind::ALL {
            let (first, last) = self.range(kind).months()?;
            if first <= month && month <= last {
                return Ok(Some(kind));
            }
        }
        Ok(None)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitTables {
    pub train: Vec<CellMonthFeatures>,
    pub validation: Vec<CellMonthFeatures>,
    pub test: Vec<CellMonthFeatures>,
    pub dropped: usize,
}

impl SplitTables {
    pub fn get(&self, kind: SplitKind) -> &[CellMonthFeatures] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Validation => &self.validation,
            SplitKind::Test => &self.test,
        }
    }
}

pub fn split_by_date(rows: &[CellMonthFeatures], spec: &SplitSpec) -> Result<SplitTables> {
    spec.validate()?;
    let mut out = SplitTables::default();
    for row in rows {
        match spec.route_month(row.month)? {
            Some(SplitKind::Train) => out.train.push(row.clone()),
            Some(SplitKind::Validation) => out.validation.push(row.clone()),
            Some(SplitKind::Test) => out.test.push(row.clone()),
            None => out.dropped += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub cell: CellIndex,
    pub target_month: MonthIndex,
    /// Feature vectors for `target_month - window .. target_month`, oldest first.
    pub inputs: Vec<FeatureVector>,
    pub target: u32,
}

impl SequenceSample {
    pub fn input_months(&self) -> impl Iterator<Item = i64> + '_ {
        let w = self.inputs.len() as i64;
        (0..w).map(move |i| self.target_month.0 as i64 - w + i)
    }
}

/// Looks up rows by (cell, month) for history assembly.
pub struct HistoryIndex<'a> {
    by_key: HashMap<(CellIndex, MonthIndex), &'a CellMonthFeatures>,
}

impl<'a> HistoryIndex<'a> {
    pub fn new(rows: &'a [CellMonthFeatures]) -> Self {
        HistoryIndex {
            by_key: rows.iter().map(|r| ((r.cell, r.month), r)).collect(),
        }
    }

    pub fn get(&self, cell: CellIndex, month: MonthIndex) -> Option<&'a CellMonthFeatures> {
        self.by_key.get(&(cell, month)).copied()
    }

    /// The `window` feature vectors preceding `target`, zero-filled where a
    /// month has no row or lies before the epoch.
    pub fn window(&self, cell: CellIndex, target: MonthIndex, window: usize) -> Vec<FeatureVector> {
        (1..=window)
            .rev()
            .map(|back| {
                target
                    .checked_sub(back as u32)
                    .and_then(|m| self.get(cell, m))
                    .map(|r| r.features)
                    .unwrap_or([0.0; FEATURE_DIM])
            })
            .collect()
    }

    /// Cells with at least one row in the `window` months before `target`.
    pub fn cells_with_history(&self, target: MonthIndex, window: usize) -> Vec<CellIndex> {
        let lo = target.0.saturating_sub(window as u32);
        let mut cells: Vec<CellIndex> = self
            .by_key
            .keys()
            .filter(|(_, m)| m.0 >= lo && m.0 < target.0)
            .map(|(c, _)| *c)
            .collect();
        cells.sort_by_key(|c| (c.y, c.x));
        cells.dedup();
        cells
    }
}

/// One sample per row of `targets`, with inputs drawn from `history` (which
/// may extend before the split start). Output follows the order of `targets`.
pub fn build_sequences(
    targets: &[CellMonthFeatures],
    history: &[CellMonthFeatures],
    window: usize,
) -> Result<Vec<SequenceSample>> {
    if window == 0 {
        return Err(Error::Config("sequence window must be at least 1".into()));
    }
    let index = HistoryIndex::new(history);
    Ok(targets
        .iter()
        .map(|row| SequenceSample {
            cell: row.cell,
            target_month: row.month,
            inputs: index.window(row.cell, row.month, window),
            target: row.swarm_kernel_count,
        })
        .collect())
}

/// Per-dimension standardisation for the count dimensions; the remaining
/// dimensions keep mean 0 and std 1 so they pass through unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: FeatureVector,
    pub std: FeatureVector,
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        }
    }

    /// Population statistics over every input step of every training sample.
    pub fn fit(samples: &[SequenceSample]) -> Result<Self> {
        let n: usize = samples.iter().map(|s| s.inputs.len()).sum();
        if n == 0 {
            return Err(Error::Data(
                "cannot fit normaliser on an empty training set".into(),
            ));
        }
        let mut stats = NormStats::identity();
        for d in 0..CONTINUOUS_DIMS {
            let values = || {
                samples
                    .iter()
                    .flat_map(|s| s.inputs.iter().map(move |v| v[d]))
            };
            let mean = values().sum::<f64>() / n as f64;
            let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            stats.mean[d] = mean;
            stats.std[d] = var.sqrt().max(STD_FLOOR);
        }
        Ok(stats)
    }

    pub fn apply_vector(&self, v: &mut FeatureVector) {
        for ((x, m), s) in v.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }

    pub fn apply(&self, sample: &SequenceSample) -> SequenceSample {
        let mut out = sample.clone();
        out.inputs.iter_mut().for_each(|v| self.apply_vector(v));
        out
    }

    pub fn apply_all(&self, samples: &[SequenceSample]) -> Vec<SequenceSample> {
        samples.iter().map(|s| self.apply(s)).collect()
    }
}

/// Seeded permutation of `0..n` cut into consecutive batches; the last batch
/// may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

pub fn batches(
    samples: &[SequenceSample],
    batch_size: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Vec<&SequenceSample>>> {
    Ok(batch_indices(samples.len(), batch_size, seed)?
        .into_iter()
        .map(move |b| b.into_iter().map(|i| &samples[i]).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetStats {
    pub samples: usize,
    pub positive: usize,
    /// Mean and population variance of the targets that are at least 1.
    pub positive_mean: f64,
    pub positive_variance: f64,
}

pub fn target_stats(samples: &[SequenceSample]) -> TargetStats {
    let pos: Vec<f64> = samples
        .iter()
        .filter(|s| s.target >= 1)
        .map(|s| s.target as f64)
        .collect();
    let (mean, var) = if pos.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = pos.iter().sum::<f64>() / pos.len() as f64;
        (
            mean,
            pos.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pos.len() as f64,
        )
    };
    TargetStats {
        samples: samples.len(),
        positive: pos.len(),
        positive_mean: mean,
        positive_variance: var,
    }
}

/// Sequence samples tagged with the feature schema they were built under.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub schema_version: u32,
    pub window: usize,
    pub samples: Vec<SequenceSample>,
}

impl SampleSet {
    pub fn new(window: usize, samples: Vec<SequenceSample>) -> Self {
        SampleSet {
            schema_version: FEATURE_SCHEMA_VERSION,
            window,
            samples,
        }
    }
}

pub const SEQUENCE_MAGIC: &[u8; 8] = b"LCSTSEQS";
pub const SEQUENCE_VERSION: u32 = 1;

/// Binary cache layout, all little-endian:
///
/// ```text
/// magic "LCSTSEQS" | version u32 | schema u32 | window u32 | dim u32 | count u64
/// per sample: cell_x u32 | cell_y u32 | target_month u32 | target u32 | window*dim f64
/// ```
pub fn write_sequences<W: Write>(set: &SampleSet, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(28 + set.samples.len() * (16 + set.window * FEATURE_DIM * 8));
    buf.extend_from_slice(SEQUENCE_MAGIC);
    for v in [
        SEQUENCE_VERSION,
        set.schema_version,
        set.window as u32,
        FEATURE_DIM as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(set.samples.len() as u64).to_le_bytes());
    for s in &set.samples {
        if s.inputs.len() != set.window {
            return Err(Error::Shape(format!(
                "sample at {} has {} steps, set window is {}",
                s.cell,
                s.inputs.len(),
                set.window
            )));
        }
        for v in [s.cell.x as u32, s.cell.y as u32, s.target_month.0, s.target] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for step in &s.inputs {
            for v in step {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub(crate) struct ByteCursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub what: &'static str,
}

impl<'a> ByteCursor<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        ByteCursor {
            bytes,
            pos: 0,
            what,
        }
    }

    pub fn require(&self, total: usize) -> Result<()> {
        if self.bytes.len() < total {
            return Err(Error::Truncated {
                what: self.what,
                expected: total,
                actual: self.bytes.len(),
            });
        }
        Ok(())
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.require(self.pos + n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_sequences<R: Read>(mut input: R) -> Result<SampleSet> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = ByteCursor::new(&bytes, "sequence cache");
    if cur.take(8)? != SEQUENCE_MAGIC {
        return Err(Error::Data("sequence cache has bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != SEQUENCE_VERSION {
        return Err(Error::Data(format!(
            "unsupported sequence cache version {version}"
        )));
    }
    let schema_version = cur.u32()?;
    let window = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    if dim != FEATURE_DIM {
        return Err(Error::Shape(format!(
            "sequence cache feature dim {dim}, expected {FEATURE_DIM}"
        )));
    }
    let count = cur.u64()? as usize;
    let per_sample = 16 + window * dim * 8;
    cur.require(cur.pos + count.saturating_mul(per_sample))?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let x = cur.u32()? as usize;
        let y = cur.u32()? as usize;
        let target_month = MonthIndex(cur.u32()?);
        let target = cur.u32()?;
        let mut inputs = Vec::with_capacity(window);
        for _ in 0..window {
            let mut v = [0.0; FEATURE_DIM];
            for slot in v.iter_mut() {
                *slot = cur.f64()?;
            }
            inputs.push(v);
        }
        samples.push(SequenceSample {
            cell: CellIndex::new(x, y),
            target_month,
            inputs,
            target,
        });
    }
    Ok(SampleSet {
        schema_version,
        window,
        samples,
    })
}
