//! # bovigeom
//!
//! File formats, configuration, parallel execution and the `bovigeom`
//! command line around [`bovigeom_core`].
//!
//! - [`io`]: depth CSV, PGM height maps, PLY clouds, keypoint JSON, feature
//!   and prediction tables, manifests, model JSON
//! - [`config`]: the TOML pipeline configuration
//! - [`dataset`]: per-image loading and feature extraction
//! - [`synth`]: synthetic datasets on disk
//! - [`exec`]: the rayon executor
//! - [`cli`]: subcommands and the exit-code contract

#![forbid(unsafe_code)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod io;
pub mod logging;
pub mod stats;
pub mod synth;

pub use bovigeom_core as core;
pub use error::{Error, Result};
pub use exec::Parallel;

/// Crate version and configuration schema version.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");
