//! Experiment harness: configuration, single runs, ħ sweeps, bound validation and SVG plots.

pub mod config;
pub mod plot;
pub mod run;
pub mod sweep;
pub mod validate;

use thiserror::Error;

/// Version string echoed into every output directory.
pub const VERSION: &str = concat!("bdglab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] bdglab_core::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("report error: {0}")]
    Report(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Writes `config.json` (the resolved config) and `VERSION` into `dir`.
pub fn echo_config<T: serde::Serialize>(dir: &std::path::Path, cfg: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(cfg).map_err(|e| HarnessError::Report(e.to_string()))?;
    std::fs::write(dir.join("config.json"), text + "\n")?;
    std::fs::write(dir.join("VERSION"), format!("{VERSION}\n"))?;
    Ok(())
}
