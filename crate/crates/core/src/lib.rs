//! One-month-ahead forecasting of per-cell desert-locust swarm counts.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`grid`]: coordinates and dates onto the (cell, month) lattice
//! - [`ingest`]: observation CSV parsing and per-cell-month feature aggregation
//! - [`dataset`]: date splits, 12-month input windows, normalisation, batching
//! - [`lstm`]: the recurrent model, its gradients and checkpoint format
//! - [`optim`]: MSE loss, Adam and the training loop
//! - [`eval`]: binarised macro precision/recall and density-bin recall
//! - [`report`]: heatmap rasters
//!
//! [`commands`] wires the stages to files, [`synth`] generates test exports.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod ingest;
pub mod lstm;
pub mod optim;
pub mod report;
pub mod synth;

pub use config::ToolkitConfig;
pub use error::{Error, Result};
