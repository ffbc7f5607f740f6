//! Configuration loading and end-to-end runs.

mod config;
mod run;

pub use config::{apply_style_overrides, load_config, parse_config, AppConfig, CliOverrides, SegmenterConfig};
pub use run::{
    report_path_for, run_batch, run_stylize, write_json, BatchFailure, BatchReport, Engine, RunManifest, RunReport,
};
