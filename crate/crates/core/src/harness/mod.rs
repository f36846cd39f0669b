//! Experiment harness: configuration, seeded sweeps, code-quality
//! measurements and CSV output.

pub mod config;
pub mod measure;
pub mod output;
pub mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, ProblemKind, SchemeSpec};
pub use measure::{measure_code_quality, CodeQuality, MeasureConfig};
pub use output::{emit_csv, CSV_HEADER};
pub use sweep::{run_sweep, CellResult, SweepResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Run(#[from] crate::optimizer::RunError),
    #[error(transparent)]
    Code(#[from] crate::code::CodeError),
    #[error("{0}")]
    Measure(String),
}
