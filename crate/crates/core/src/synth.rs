//! Synthetic observation exports: a drifting 2-D Gaussian swarm-intensity
//! blob with seasonal modulation, plus sparse background survey records.
//!
//! Output uses the default export column names, so it runs through the same
//! ingestion path as real data.

use std::f64::consts::PI;
use std::io::Write;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::dataset::{DateRange, SplitSpec};
use crate::error::{Error, Result};
use crate::grid::{GeoBounds, GridSpec};
use crate::ingest::{ColumnMapping, LocustCategory, SoilMoisture, Vegetation};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub grid: GridSpec,
    pub start_year: i32,
    pub start_month: u32,
    pub months: u32,
    /// Blob centre at month 0, in cell units.
    pub origin: (f64, f64),
    /// Drift in cells per month; `x` positive is eastward. The blob wraps
    /// around the east-west edge.
    pub velocity: (f64, f64),
    /// North-south meander amplitude in cells (period 24 months).
    pub meander: f64,
    /// Gaussian radius in cells.
    pub sigma: f64,
    /// Expected swarm reports per month at the blob centre.
    pub peak: f64,
    /// Relative seasonal swing of the intensity, in [0, 1].
    pub seasonal_amplitude: f64,
    /// Probability that a cell-month carries one non-swarm survey record.
    pub survey_prob: f64,
    /// Expected adult reports per swarm report near the blob.
    pub adult_ratio: f64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        SynthScenario {
            grid: GridSpec {
                bounds: GeoBounds {
                    lon_min: 30.0,
                    lon_max: 60.0,
                    lat_min: 10.0,
                    lat_max: 40.0,
                },
                n_x: 30,
                n_y: 30,
            },
            start_year: 2011,
            start_month: 1,
            months: 120,
            origin: (3.0, 15.0),
            velocity: (1.0, 0.0),
            meander: 4.0,
            sigma: 1.6,
            peak: 2.0,
            seasonal_amplitude: 0.4,
            survey_prob: 0.3,
            adult_ratio: 0.3,
        }
    }
}

impl SynthScenario {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let bad = |m: &str| Err(Error::Config(format!("synthetic scenario: {m}")));
        if self.months == 0 {
            return bad("months must be positive");
        }
        if !(1..=12).contains(&self.start_month) {
            return bad("start month must be 1..=12");
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 || self.peak.is_nan() || self.peak < 0.0 {
            return bad("sigma must be positive and peak non-negative");
        }
        if !(0.0..=1.0).contains(&self.survey_prob)
            || !(0.0..=1.0).contains(&self.seasonal_amplitude)
        {
            return bad("survey probability and seasonal amplitude must lie in [0, 1]");
        }
        if self.adult_ratio.is_nan() || self.adult_ratio < 0.0 {
            return bad("adult ratio must be non-negative");
        }
        Ok(())
    }

    /// (year, month) of the `t`-th generated month.
    pub fn calendar(&self, t: u32) -> (i32, u32) {
        let m0 = self.start_month - 1 + t;
        (self.start_year + (m0 / 12) as i32, m0 % 12 + 1)
    }

    /// Blob centre at month `t`, in cell units.
    pub fn center(&self, t: u32) -> (f64, f64) {
        let n_x = self.grid.n_x as f64;
        let x = (self.origin.0 + self.velocity.0 * t as f64).rem_euclid(n_x);
        let y = self.origin.1
            + self.velocity.1 * t as f64
            + self.meander * (2.0 * PI * t as f64 / 24.0).sin();
        (x, y.clamp(0.0, self.grid.n_y as f64 - 1.0))
    }

    /// Expected swarm reports for cell (x, y) at month `t`.
    pub fn intensity(&self, x: usize, y: usize, t: u32) -> f64 {
        let (cx, cy) = self.center(t);
        let n_x = self.grid.n_x as f64;
        let dx = (x as f64 + 0.5 - cx).rem_euclid(n_x);
        let dx = dx.min(n_x - dx);
        let dy = y as f64 + 0.5 - cy;
        let (_, month) = self.calendar(t);
        let season = 1.0 + self.seasonal_amplitude * (2.0 * PI * (month - 1) as f64 / 12.0).sin();
        self.peak * season * (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Splits with the final 24 months held out for testing and the 12
    /// before them for validation. Needs at least 37 months.
    pub fn holdout_splits(&self) -> Result<SplitSpec> {
        if self.months < 37 {
            return Err(Error::Config(
                "hold-out splits need at least 37 months".into(),
            ));
        }
        let first = |t: u32| {
            let (y, m) = self.calendar(t);
            NaiveDate::from_ymd_opt(y, m, 1).expect("valid month start")
        };
        let last = |t: u32| first(t + 1).pred_opt().expect("date after epoch");
        let n = self.months;
        Ok(SplitSpec {
            train: DateRange::new(first(0), last(n - 37)),
            validation: DateRange::new(first(n - 36), last(n - 25)),
            test: DateRange::new(first(n - 24), last(n - 1)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub lon: f64,
    pub lat: f64,
    pub date: NaiveDate,
    pub category: LocustCategory,
    pub vegetation: Vegetation,
    pub soil_moisture: SoilMoisture,
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

fn ecology(rng: &mut ChaCha8Rng, wetness: f64) -> (Vegetation, SoilMoisture) {
    let veg = if rng.random::<f64>() < 0.15 {
        Vegetation::Unknown
    } else if rng.random::<f64>() < wetness {
        if rng.random::<bool>() {
            Vegetation::Green
        } else {
            Vegetation::Greening
        }
    } else {
        Vegetation::Dry
    };
    let soil = if rng.random::<f64>() < 0.15 {
        SoilMoisture::Unknown
    } else if rng.random::<f64>() < wetness {
        SoilMoisture::Wet
    } else {
        SoilMoisture::Dry
    };
    (veg, soil)
}

pub fn generate(scenario: &SynthScenario, seed: u64) -> Result<Vec<SynthRecord>> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &scenario.grid;
    let b = g.bounds;
    let dx = (b.lon_max - b.lon_min) / g.n_x as f64;
    let dy = (b.lat_max - b.lat_min) / g.n_y as f64;
    let mut out = Vec::new();
    for t in 0..scenario.months {
        let (year, month) = scenario.calendar(t);
        for y in 0..g.n_y {
            for x in 0..g.n_x {
                let lambda = scenario.intensity(x, y, t);
                let wetness = 0.2 + 0.7 * (lambda / scenario.peak.max(1e-12)).min(1.0);
                let mut emit = |rng: &mut ChaCha8Rng, category: LocustCategory| {
                    let (vegetation, soil_moisture) = ecology(rng, wetness);
                    let day = rng.random_range(1..=28);
                    out.push(SynthRecord {
                        lon: b.lon_min + (x as f64 + rng.random::<f64>()) * dx,
                        lat: b.lat_min + (y as f64 + rng.random::<f64>()) * dy,
                        date: NaiveDate::from_ymd_opt(year, month, day).expect("valid day"),
                        category,
                        vegetation,
                        soil_moisture,
                    });
                };
                for _ in 0..poisson(&mut rng, lambda) {
                    emit(&mut rng, LocustCategory::Swarm);
                }
                for _ in 0..poisson(&mut rng, lambda * scenario.adult_ratio) {
                    emit(&mut rng, LocustCategory::Adult);
                }
                if rng.random::<f64>() < scenario.survey_prob {
                    let cat = [
                        LocustCategory::Hopper,
                        LocustCategory::Band,
                        LocustCategory::Adult,
                    ][rng.random_range(0..3)];
                    emit(&mut rng, cat);
                }
            }
        }
    }
    Ok(out)
}

/// Writes records as an export CSV under the default column names.
pub fn write_csv<W: Write>(records: &[SynthRecord], out: W) -> Result<()> {
    let cols = ColumnMapping::default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        &cols.lon,
        &cols.lat,
        &cols.date,
        &cols.category,
        &cols.vegetation,
        &cols.soil_moisture,
    ])?;
    for r in records {
        let cat = match r.category {
            LocustCategory::Hopper => "Hopper",
            LocustCategory::Band => "Band",
            LocustCategory::Adult => "Adult",
            LocustCategory::Swarm => "Swarm",
        };
        w.write_record([
            format!("{:.5}", r.lon),
            format!("{:.5}", r.lat),
            r.date.format("%Y-%m-%d").to_string(),
            cat.to_string(),
            r.vegetation.label().to_string(),
            r.soil_moisture.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
