//! CLI verb implementations.

pub mod batch;
pub mod data;
pub mod export;
pub mod train;

use crate::config::ExperimentConfig;
use crate::prepared::CliResult;
use std::path::{Path, PathBuf};

pub fn prepared_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("prepared")
}

pub fn train_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("train")
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}
