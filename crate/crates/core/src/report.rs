//! Heatmap rasters: previous-month observation, ground truth and prediction.
//!
//! Rasters are stored row-major by `y`, but every on-disk format writes the
//! northernmost row (`y = height - 1`) first so images read as maps.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{forecast_month, DensityBin};
use crate::grid::{CellIndex, GridSpec, MonthIndex};
use crate::ingest::CellMonthFeatures;
use crate::lstm::Checkpoint;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn for_grid(spec: &GridSpec) -> Self {
        Raster::zeros(spec.n_x, spec.n_y)
    }

    pub fn get(&self, cell: CellIndex) -> f64 {
        self.values[cell.y * self.width + cell.x]
    }

    pub fn set(&mut self, cell: CellIndex, v: f64) {
        self.values[cell.y * self.width + cell.x] = v;
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// First cell (in `y`, then `x` order) holding the maximum value.
    pub fn argmax(&self) -> CellIndex {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        CellIndex::new(best % self.width, best / self.width)
    }

    fn rows_north_first(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.width).rev()
    }
}

/// Ground-truth kernel swarm counts for `month`; cells without a row are 0.
pub fn raster_for_month(
    rows: &[CellMonthFeatures],
    month: MonthIndex,
    spec: &GridSpec,
) -> Result<Raster> {
    let lo = rows.iter().map(|r| r.month).min();
    let hi = rows.iter().map(|r| r.month).max();
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= month && month <= hi => {}
        _ => {
            return Err(Error::Data(format!(
                "month {month} is outside the table's range {}",
                match (lo, hi) {
                    (Some(lo), Some(hi)) => format!("{lo}..{hi}"),
                    _ => "(empty table)".into(),
                }
            )))
        }
    }
    let mut r = Raster::for_grid(spec);
    for row in rows.iter().filter(|r| r.month == month) {
        if !spec.contains(row.cell) {
            return Err(Error::Data(format!(
                "cell {} lies outside the grid",
                row.cell
            )));
        }
        r.set(row.cell, row.swarm_kernel_count as f64);
    }
    Ok(r)
}

/// Predicted counts on the grid, negatives rendered as 0.
pub fn raster_from_predictions(preds: &[(CellIndex, f64)], spec: &GridSpec) -> Result<Raster> {
    let mut r = Raster::for_grid(spec);
    for &(cell, v) in preds {
        if !spec.contains(cell) {
            return Err(Error::Data(format!("cell {cell} lies outside the grid")));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("prediction at {cell}")));
        }
        r.set(cell, v.max(0.0));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    CsvGrid,
    Pgm,
    PpmDensity,
}

impl RasterFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RasterFormat::CsvGrid => "csv",
            RasterFormat::Pgm => "pgm",
            RasterFormat::PpmDensity => "ppm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "csv-grid" | "csv" => Ok(RasterFormat::CsvGrid),
            "pgm" => Ok(RasterFormat::Pgm),
            "ppm-density" | "ppm" => Ok(RasterFormat::PpmDensity),
            other => Err(Error::Config(format!(
                "unknown raster format {other:?} (expected csv-grid, pgm or ppm-density)"
            ))),
        }
    }
}

pub const COLOR_NONE: [u8; 3] = [0, 0, 0];
pub const COLOR_LOW: [u8; 3] = [128, 0, 128];
pub const COLOR_MEDIUM: [u8; 3] = [255, 0, 0];
pub const COLOR_HIGH: [u8; 3] = [255, 255, 0];

/// Density colour of a cell value, binned after rounding to the nearest count.
pub fn density_color(value: f64) -> [u8; 3] {
    let count = value.max(0.0).round() as u64;
    match DensityBin::of(count) {
        None => COLOR_NONE,
        Some(DensityBin::Low) => COLOR_LOW,
        Some(DensityBin::Medium) => COLOR_MEDIUM,
        Some(DensityBin::High) => COLOR_HIGH,
    }
}

pub fn write_raster(raster: &Raster, format: RasterFormat) -> Vec<u8> {
    match format {
        RasterFormat::CsvGrid => {
            let mut s = String::new();
            for row in raster.rows_north_first() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
            s.into_bytes()
        }
        RasterFormat::Pgm => {
            let mut out = format!("P5\n{} {}\n255\n", raster.width, raster.height).into_bytes();
            let max = raster.max();
            for row in raster.rows_north_first() {
                out.extend(row.iter().map(|&v| {
                    if max > 0.0 {
                        (v.max(0.0) / max * 255.0).floor().min(255.0) as u8
                    } else {
                        0
                    }
                }));
            }
            out
        }
        RasterFormat::PpmDensity => {
            let mut out = format!("P6\n{} {}\n255\n", raster.width, raster.height).into_bytes();
            for row in raster.rows_north_first() {
                for &v in row {
                    out.extend_from_slice(&density_color(v));
                }
            }
            out
        }
    }
}

pub fn parse_csv_grid(bytes: &[u8]) -> Result<Raster> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Data(format!("csv grid is not UTF-8: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Data(format!("csv grid line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    let height = rows.len();
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Data("csv grid rows have unequal lengths".into()));
    }
    let values = rows.into_iter().rev().flatten().collect();
    Ok(Raster {
        width,
        height,
        values,
    })
}

/// The three rasters compared for one forecast month.
#[derive(Debug, Clone, PartialEq)]
pub struct Triptych {
    pub month: MonthIndex,
    pub prev: Raster,
    pub truth: Raster,
    pub pred: Raster,
}

pub fn triptych(
    month: MonthIndex,
    rows: &[CellMonthFeatures],
    ckpt: &Checkpoint,
    spec: &GridSpec,
    window: usize,
) -> Result<Triptych> {
    let prev_month = month
        .checked_sub(1)
        .ok_or_else(|| Error::Data("a triptych needs a previous month".into()))?;
    let preds = forecast_month(ckpt, rows, month, window)?;
    Ok(Triptych {
        month,
        prev: raster_for_month(rows, prev_month, spec)?,
        truth: raster_for_month(rows, month, spec)?,
        pred: raster_from_predictions(&preds, spec)?,
    })
}

impl Triptych {
    /// Writes `<stem>_<yyyymm>_{prev,truth,pred}.<ext>` into `dir`.
    pub fn write_files(
        &self,
        dir: &Path,
        stem: &str,
        format: RasterFormat,
    ) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(3);
        for (suffix, raster) in [
            ("prev", &self.prev),
            ("truth", &self.truth),
            ("pred", &self.pred),
        ] {
            let path = dir.join(format!(
                "{stem}_{}_{suffix}.{}",
                self.month.yyyymm(),
                format.extension()
            ));
            fs::write(&path, write_raster(raster, format))?;
            paths.push(path);
        }
        Ok(paths)
    }
}
