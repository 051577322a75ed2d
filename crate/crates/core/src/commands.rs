//! The pipeline stages behind the `locustcast` subcommands. Each stage reads
//! and writes the files named in [`ToolkitConfig`].

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::config::ToolkitConfig;
use crate::dataset::{
    build_sequences, split_by_date, target_stats, NormStats, SampleSet, SequenceSample, SplitKind,
    SplitTables, TargetStats,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, forecast_month, EvalReport};
use crate::grid::{month_index, CellIndex, MonthIndex};
use crate::ingest::{
    aggregate_monthly, parse_records, partition_in_grid, read_table, write_table, CellMonthFeatures,
};
use crate::lstm::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::optim::{train, TrainHistory};
use crate::report::{triptych, RasterFormat};
use crate::synth::{self, SynthScenario};

/// Entry counts published for the full export, per split: (total, with swarms).
pub const REFERENCE_COUNTS: [(SplitKind, usize, usize); 3] = [
    (SplitKind::Train, 24092, 3410),
    (SplitKind::Validation, 1830, 67),
    (SplitKind::Test, 3574, 927),
];

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    create_parent(path)?;
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open {what} {}: {e}", path.display())))
}

/// Parses `yyyy-mm`.
pub fn parse_month(raw: &str) -> Result<MonthIndex> {
    let (y, m) = raw
        .trim()
        .split_once('-')
        .ok_or_else(|| Error::Config(format!("month {raw:?} is not yyyy-mm")))?;
    let year: i32 = y
        .parse()
        .map_err(|_| Error::Config(format!("bad year in {raw:?}")))?;
    let month: u32 = m
        .parse()
        .map_err(|_| Error::Config(format!("bad month in {raw:?}")))?;
    month_index(year, month)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitCounts {
    pub entries: usize,
    pub with_swarms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub files: usize,
    pub records: usize,
    pub diagnostics: usize,
    pub rows: usize,
    pub splits: [SplitCounts; 3],
    pub dropped: usize,
    pub positive_mean: f64,
    pub positive_variance: f64,
}

impl IngestSummary {
    pub fn split(&self, kind: SplitKind) -> SplitCounts {
        self.splits[kind as usize]
    }
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} file(s), {} records, {} diagnostics, {} cell-month entries",
            self.files, self.records, self.diagnostics, self.rows
        )?;
        writeln!(
            f,
            "{:<11} {:>9} {:>13} {:>15} {:>19}",
            "split", "entries", "swarms > 0", "ref. entries", "ref. swarms > 0"
        )?;
        for (kind, ref_total, ref_pos) in REFERENCE_COUNTS {
            let c = self.split(kind);
            writeln!(
                f,
                "{:<11} {:>9} {:>13} {:>15} {:>19}",
                kind.label(),
                c.entries,
                c.with_swarms,
                ref_total,
                ref_pos
            )?;
        }
        writeln!(f, "outside all splits: {}", self.dropped)?;
        write!(
            f,
            "entries with swarms: mean {:.2}, variance {:.2} (reference 8.52 / 547.16)",
            self.positive_mean, self.positive_variance
        )
    }
}

pub fn summarize_splits(tables: &SplitTables) -> [SplitCounts; 3] {
    SplitKind::ALL.map(|k| {
        let rows = tables.get(k);
        SplitCounts {
            entries: rows.len(),
            with_swarms: rows.iter().filter(|r| r.swarm_kernel_count > 0).count(),
        }
    })
}

/// Parses every input export, grids and aggregates the records, and writes
/// the table and the diagnostics log.
pub fn cmd_ingest(inputs: &[PathBuf], cfg: &ToolkitConfig) -> Result<IngestSummary> {
    if inputs.is_empty() {
        return Err(Error::Config("no input files given".into()));
    }
    let spec = cfg.grid_spec()?;
    let mapping = cfg.column_mapping();
    let synonyms = cfg.synonyms();
    let parsed = inputs
        .par_iter()
        .map(|p| {
            let (recs, diags) = parse_records(open(p, "input")?, &mapping, &synonyms)?;
            Ok((p, recs, diags))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut log = create(&cfg.diagnostics_path)?;
    let mut n_diag = 0;
    for (path, recs, diags) in parsed {
        let (kept, outside) = partition_in_grid(recs, &spec);
        for d in diags.iter().chain(&outside) {
            writeln!(log, "{}: {d}", path.display())?;
        }
        n_diag += diags.len() + outside.len();
        records.extend(kept);
    }
    log.flush()?;
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no usable observation records ({n_diag} diagnostics, see {})",
            cfg.diagnostics_path.display()
        )));
    }

    let rows = aggregate_monthly(&records, &spec, cfg.kernel_size)?;
    let mut out = create(&cfg.table_path)?;
    write_table(&rows, &mut out)?;
    out.flush()?;

    let tables = split_by_date(&rows, &cfg.split_spec()?)?;
    let train_targets: Vec<SequenceSample> = tables
        .train
        .iter()
        .map(|r| SequenceSample {
            cell: r.cell,
            target_month: r.month,
            inputs: Vec::new(),
            target: r.swarm_kernel_count,
        })
        .collect();
    let st = target_stats(&train_targets);
    let summary = IngestSummary {
        files: inputs.len(),
        records: records.len(),
        diagnostics: n_diag,
        rows: rows.len(),
        splits: summarize_splits(&tables),
        dropped: tables.dropped,
        positive_mean: st.positive_mean,
        positive_variance: st.positive_variance,
    };
    info!("wrote {} rows to {}", rows.len(), cfg.table_path.display());
    Ok(summary)
}

pub fn load_table(cfg: &ToolkitConfig) -> Result<Vec<CellMonthFeatures>> {
    let rows = read_table(open(&cfg.table_path, "table")?)?;
    let spec = cfg.grid_spec()?;
    if let Some(r) = rows.iter().find(|r| !spec.contains(r.cell)) {
        return Err(Error::Data(format!(
            "table cell {} lies outside the configured {}x{} grid",
            r.cell, spec.n_x, spec.n_y
        )));
    }
    Ok(rows)
}

/// Sequence samples for one split. Inputs may reach back into earlier splits.
pub fn split_samples(
    rows: &[CellMonthFeatures],
    tables: &SplitTables,
    kind: SplitKind,
    window: usize,
) -> Result<Vec<SequenceSample>> {
    build_sequences(tables.get(kind), rows, window)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    pub train_stats: TargetStats,
    pub n_train: usize,
    pub n_val: usize,
}

/// Trains on the table's training split, selecting by validation loss, and
/// writes the checkpoint and the history CSV.
pub fn cmd_train(cfg: &ToolkitConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let rows = load_table(cfg)?;
    let tables = split_by_date(&rows, &cfg.split_spec()?)?;
    let raw_train = split_samples(&rows, &tables, SplitKind::Train, cfg.window)?;
    let raw_val = split_samples(&rows, &tables, SplitKind::Validation, cfg.window)?;
    if raw_train.is_empty() {
        return Err(Error::Data("training split has no entries".into()));
    }
    let norm = NormStats::fit(&raw_train)?;
    let train_set = norm.apply_all(&raw_train);
    let val_set = norm.apply_all(&raw_val);
    info!(
        "training on {} samples, validating on {}",
        train_set.len(),
        val_set.len()
    );

    let (params, history) = train(
        &train_set,
        &val_set,
        cfg.model_config(),
        &cfg.train_config()?,
        &cfg.adam_hyper(),
    )?;
    let checkpoint = Checkpoint::new(params, norm);

    let mut ck = create(&cfg.checkpoint_path)?;
    ck.write_all(&save_checkpoint(&checkpoint)?)?;
    ck.flush()?;
    let mut hist = create(&cfg.history_path)?;
    history.write_csv(&mut hist)?;
    hist.flush()?;

    Ok(TrainOutcome {
        checkpoint,
        history,
        train_stats: target_stats(&raw_train),
        n_train: raw_train.len(),
        n_val: raw_val.len(),
    })
}

pub fn load_model(cfg: &ToolkitConfig) -> Result<Checkpoint> {
    let bytes = fs::read(&cfg.checkpoint_path).map_err(|e| {
        Error::Data(format!(
            "cannot read checkpoint {}: {e}",
            cfg.checkpoint_path.display()
        ))
    })?;
    load_checkpoint(&bytes)
}

/// Scores the checkpoint on the test split and writes `evaluation.txt` and
/// `evaluation.kv` into the report directory.
pub fn cmd_evaluate(cfg: &ToolkitConfig) -> Result<EvalReport> {
    let ckpt = load_model(cfg)?;
    let rows = load_table(cfg)?;
    let tables = split_by_date(&rows, &cfg.split_spec()?)?;
    let test = SampleSet::new(
        cfg.window,
        split_samples(&rows, &tables, SplitKind::Test, cfg.window)?,
    );
    let report = evaluate(&ckpt, &test, cfg.threshold)?;
    fs::create_dir_all(&cfg.report_dir)?;
    fs::write(cfg.report_dir.join("evaluation.txt"), report.to_text())?;
    fs::write(cfg.report_dir.join("evaluation.kv"), report.to_key_values())?;
    Ok(report)
}

/// Forecasts every cell with recent history for `month` and writes
/// `cell_x,cell_y,month_index,predicted_count` rows to `out`.
pub fn cmd_predict(
    cfg: &ToolkitConfig,
    month: MonthIndex,
    out: &Path,
) -> Result<Vec<(CellIndex, f64)>> {
    let ckpt = load_model(cfg)?;
    let rows = load_table(cfg)?;
    let preds = forecast_month(&ckpt, &rows, month, cfg.window)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["cell_x", "cell_y", "month_index", "predicted_count"])?;
    for (cell, v) in &preds {
        w.write_record([
            cell.x.to_string(),
            cell.y.to_string(),
            month.0.to_string(),
            v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(preds)
}

/// Writes the previous-month / truth / prediction rasters for `month` into
/// the report directory.
pub fn cmd_heatmap(
    cfg: &ToolkitConfig,
    month: MonthIndex,
    format: RasterFormat,
) -> Result<Vec<PathBuf>> {
    let ckpt = load_model(cfg)?;
    let rows = load_table(cfg)?;
    let t = triptych(month, &rows, &ckpt, &cfg.grid_spec()?, cfg.window)?;
    t.write_files(&cfg.report_dir, "heatmap", format)
}

/// Generates a synthetic export. Returns the number of records written.
pub fn cmd_synth(scenario: &SynthScenario, seed: u64, out: &Path) -> Result<usize> {
    let records = synth::generate(scenario, seed)?;
    let mut w = create(out)?;
    synth::write_csv(&records, &mut w)?;
    w.flush()?;
    Ok(records.len())
}

/// A configuration matching a synthetic scenario's grid, with the final 24
/// months held out for testing.
pub fn synthetic_config(scenario: &SynthScenario, base: &ToolkitConfig) -> Result<ToolkitConfig> {
    let mut cfg = base.clone();
    cfg.set_grid_spec(&scenario.grid);
    cfg.set_split_spec(&scenario.holdout_splits()?);
    cfg.validate()?;
    Ok(cfg)
}

/// Outcome of [`synthetic_end_to_end`].
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub config: ToolkitConfig,
    pub ingest: IngestSummary,
    pub train: TrainOutcome,
    pub report: EvalReport,
    /// Chebyshev distance between forecast and truth argmax, per test month.
    pub argmax_distances: Vec<(MonthIndex, usize)>,
}

impl SyntheticRun {
    pub fn argmax_hit_rate(&self, max_distance: usize) -> f64 {
        if self.argmax_distances.is_empty() {
            return 0.0;
        }
        let hits = self
            .argmax_distances
            .iter()
            .filter(|(_, d)| *d <= max_distance)
            .count();
        hits as f64 / self.argmax_distances.len() as f64
    }
}

/// Generates a scenario into `dir` and runs ingest, train and evaluate on it,
/// then compares forecast and truth hot spots for every test month.
pub fn synthetic_end_to_end(
    scenario: &SynthScenario,
    seed: u64,
    base: &ToolkitConfig,
    dir: &Path,
) -> Result<SyntheticRun> {
    let mut cfg = synthetic_config(scenario, &base.clone().with_output_dir(dir))?;
    cfg.seed = seed;
    let raw = dir.join("synthetic.csv");
    cmd_synth(scenario, seed, &raw)?;
    let ingest = cmd_ingest(&[raw], &cfg)?;
    let train = cmd_train(&cfg)?;
    let report = cmd_evaluate(&cfg)?;

    let rows = load_table(&cfg)?;
    let spec = cfg.grid_spec()?;
    let test = cfg.split_spec()?.test;
    let (first, last) = test.months()?;
    let mut argmax_distances = Vec::new();
    for m in first.0..=last.0 {
        let t = triptych(MonthIndex(m), &rows, &train.checkpoint, &spec, cfg.window)?;
        argmax_distances.push((t.month, t.pred.argmax().chebyshev(&t.truth.argmax())));
    }
    Ok(SyntheticRun {
        config: cfg,
        ingest,
        train,
        report,
        argmax_distances,
    })
}
