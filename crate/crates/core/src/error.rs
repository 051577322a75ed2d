use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report. Variants group into the exit-code
/// families used by the command-line tool: configuration, data, numerical
/// divergence and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{axis} coordinate {value} is outside the grid bounds [{min}, {max}]")]
    OutOfBounds {
        axis: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("date {year}-{month:02} is before the January 1985 epoch")]
    BeforeEpoch { year: i32, month: u32 },

    #[error("invalid month {0}, expected 1..=12")]
    InvalidMonth(u32),

    #[error("kernel size must be an odd positive integer, got {0}")]
    InvalidKernel(usize),

    #[error("unrecognised locust category label {0:?}")]
    UnknownCategory(String),

    #[error("mapped column {0:?} not present in CSV header")]
    MissingColumn(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error(
        "feature schema mismatch: checkpoint has version {checkpoint}, samples have {samples}"
    )]
    SchemaMismatch { checkpoint: u32, samples: u32 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for this error: 2 configuration, 3 data,
    /// 4 numerical divergence, 1 I/O and anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidKernel(_)
            | Error::MissingColumn(_)
            | Error::SchemaMismatch { .. } => 2,
            Error::OutOfBounds { .. }
            | Error::BeforeEpoch { .. }
            | Error::InvalidMonth(_)
            | Error::UnknownCategory(_)
            | Error::Data(_)
            | Error::Shape(_)
            | Error::Checkpoint(_)
            | Error::Truncated { .. }
            | Error::Csv(_) => 3,
            Error::NonFinite(_) | Error::Divergence { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}
