//! Toolkit configuration: one flat key-value TOML file with a default for
//! every key.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{DateRange, SplitSpec, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_THRESHOLD;
use crate::grid::{check_kernel, GeoBounds, GridSpec};
use crate::ingest::{CategorySynonyms, ColumnMapping, FEATURE_DIM};
use crate::lstm::ModelConfig;
use crate::optim::{AdamHyper, SelectionMetric, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub kernel_size: usize,
    pub window: usize,

    pub train_start: String,
    pub train_end: String,
    pub val_start: String,
    pub val_end: String,
    pub test_start: String,
    pub test_end: String,

    pub hidden_dim: usize,
    pub follow_paper_hidden_update: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// `validation-mse` or `final-epoch`.
    pub selection: String,
    pub threshold: f64,

    pub col_lon: String,
    pub col_lat: String,
    pub col_date: String,
    pub col_category: String,
    pub col_vegetation: String,
    pub col_soil_moisture: String,
    pub synonyms_hopper: Vec<String>,
    pub synonyms_band: Vec<String>,
    pub synonyms_adult: Vec<String>,
    pub synonyms_swarm: Vec<String>,

    pub table_path: PathBuf,
    pub diagnostics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub history_path: PathBuf,
    pub report_dir: PathBuf,
}

fn date_string(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        let split = SplitSpec::default();
        let model = ModelConfig::default();
        let hyper = AdamHyper::default();
        let train = TrainConfig::default();
        let cols = ColumnMapping::default();
        let syn = CategorySynonyms::default();
        ToolkitConfig {
            lon_min: grid.bounds.lon_min,
            lon_max: grid.bounds.lon_max,
            lat_min: grid.bounds.lat_min,
            lat_max: grid.bounds.lat_max,
            n_x: grid.n_x,
            n_y: grid.n_y,
            kernel_size: 3,
            window: DEFAULT_WINDOW,
            train_start: date_string(split.train.start),
            train_end: date_string(split.train.end),
            val_start: date_string(split.validation.start),
            val_end: date_string(split.validation.end),
            test_start: date_string(split.test.start),
            test_end: date_string(split.test.end),
            hidden_dim: model.hidden_dim,
            follow_paper_hidden_update: model.follow_paper_hidden_update,
            learning_rate: hyper.learning_rate,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            epsilon: hyper.epsilon,
            clip_norm: hyper.clip_norm.unwrap_or(0.0),
            epochs: train.epochs,
            batch_size: train.batch_size,
            seed: train.seed,
            selection: "validation-mse".into(),
            threshold: DEFAULT_THRESHOLD,
            col_lon: cols.lon,
            col_lat: cols.lat,
            col_date: cols.date,
            col_category: cols.category,
            col_vegetation: cols.vegetation,
            col_soil_moisture: cols.soil_moisture,
            synonyms_hopper: syn.hopper,
            synonyms_band: syn.band,
            synonyms_adult: syn.adult,
            synonyms_swarm: syn.swarm,
            table_path: "out/table.csv".into(),
            diagnostics_path: "out/diagnostics.log".into(),
            checkpoint_path: "out/model.ckpt".into(),
            history_path: "out/history.csv".into(),
            report_dir: "out/report".into(),
        }
    }
}

fn parse_config_date(key: &str, raw: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("{key} = {raw:?} is not a yyyy-mm-dd date: {e}")))
}

impl ToolkitConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ToolkitConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        check_kernel(self.kernel_size)?;
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        self.split_spec()?.validate()?;
        self.model_config().validate()?;
        self.adam_hyper().validate()?;
        self.train_config()?.validate()?;
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if self.clip_norm < 0.0 {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(
            GeoBounds::new(self.lon_min, self.lon_max, self.lat_min, self.lat_max)?,
            self.n_x,
            self.n_y,
        )
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let r = |a: (&str, &str), b: (&str, &str)| -> Result<DateRange> {
            Ok(DateRange::new(
                parse_config_date(a.0, a.1)?,
                parse_config_date(b.0, b.1)?,
            ))
        };
        Ok(SplitSpec {
            train: r(
                ("train_start", &self.train_start),
                ("train_end", &self.train_end),
            )?,
            validation: r(("val_start", &self.val_start), ("val_end", &self.val_end))?,
            test: r(
                ("test_start", &self.test_start),
                ("test_end", &self.test_end),
            )?,
        })
    }

    pub fn set_split_spec(&mut self, split: &SplitSpec) {
        self.train_start = date_string(split.train.start);
        self.train_end = date_string(split.train.end);
        self.val_start = date_string(split.validation.start);
        self.val_end = date_string(split.validation.end);
        self.test_start = date_string(split.test.start);
        self.test_end = date_string(split.test.end);
    }

    pub fn set_grid_spec(&mut self, grid: &GridSpec) {
        self.lon_min = grid.bounds.lon_min;
        self.lon_max = grid.bounds.lon_max;
        self.lat_min = grid.bounds.lat_min;
        self.lat_max = grid.bounds.lat_max;
        self.n_x = grid.n_x;
        self.n_y = grid.n_y;
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: FEATURE_DIM,
            hidden_dim: self.hidden_dim,
            follow_paper_hidden_update: self.follow_paper_hidden_update,
        }
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let selection = match self.selection.as_str() {
            "validation-mse" => SelectionMetric::ValidationMse,
            "final-epoch" => SelectionMetric::FinalEpoch,
            other => {
                return Err(Error::Config(format!(
                    "selection = {other:?}; expected validation-mse or final-epoch"
                )))
            }
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            selection,
        })
    }

    pub fn column_mapping(&self) -> ColumnMapping {
        ColumnMapping {
            lon: self.col_lon.clone(),
            lat: self.col_lat.clone(),
            date: self.col_date.clone(),
            category: self.col_category.clone(),
            vegetation: self.col_vegetation.clone(),
            soil_moisture: self.col_soil_moisture.clone(),
        }
    }

    pub fn synonyms(&self) -> CategorySynonyms {
        CategorySynonyms {
            hopper: self.synonyms_hopper.clone(),
            band: self.synonyms_band.clone(),
            adult: self.synonyms_adult.clone(),
            swarm: self.synonyms_swarm.clone(),
        }
    }

    /// Points every output path into `dir`.
    pub fn with_output_dir(mut self, dir: &Path) -> Self {
        self.table_path = dir.join("table.csv");
        self.diagnostics_path = dir.join("diagnostics.log");
        self.checkpoint_path = dir.join("model.ckpt");
        self.history_path = dir.join("history.csv");
        self.report_dir = dir.join("report");
        self
    }
}
