//! File formats, command line and plots around `sipcore`.
//!
//! * [`dataset`]: `sipds-v1` channel datasets,
//! * [`checkpoint`]: `sipckpt-v1` trained links,
//! * [`config`]: flat `key = value` run configuration,
//! * [`tables`]: metrics and sweep CSV tables,
//! * [`plots`]: SVG figures,
//! * [`commands`]: what the `siplab` binary runs.

pub mod archive;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod npy;
pub mod plots;
pub mod tables;

pub use error::{LabError, Result};
