//! Scenario orchestration: configuration, the coupled plant/estimator
//! simulation, CSV and SVG output, and the built-in comparison scenarios.

pub mod config;
pub mod csv;
pub mod run;
pub mod scenarios;
pub mod svg;
pub mod system;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{EstimatorKind, ScenarioConfig};
pub use csv::{diagnose_trace, emit_csv, parse_csv, CsvTable, DiagnoseOptions};
pub use run::{run_scenario, RecordTable, RunArtifacts, RunMetadata};
pub use scenarios::{figure1_scenario, figure2_scenario, Fig1Output, Fig2Output, GAMMA_SWEEP};
pub use svg::{emit_svg, render_svg, Figure, LineStyle, Panel, Series};
pub use system::CoupledSystem;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("integration failed: {0}")]
    Integration(#[from] crate::ode::OdeError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Csv { path: PathBuf, line: usize, message: String },
    #[error("diagnostics failed: {0}")]
    Diagnostics(#[from] crate::diagnostics::DiagnosticsError),
    #[error("nothing to plot: {0}")]
    EmptySeries(String),
}

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// 2 for configuration problems, 3 for integration failures, 4 for
    /// I/O and input-file problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Integration(_) => 3,
            Self::Io { .. } | Self::Csv { .. } | Self::Diagnostics(_) | Self::EmptySeries(_) => 4,
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}
