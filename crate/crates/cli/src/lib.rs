//! Orchestration for the `kminer` binary: configuration, datasets,
//! checkpoints, reports and the subcommands themselves.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

use std::path::{Path, PathBuf};

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{Error, Result};
pub use report::EvalReport;

/// Config file first, then explicit flags on top.
pub fn resolve_config(
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    dataset: Option<PathBuf>,
) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.trainer.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    if let Some(d) = dataset {
        cfg.dataset = Some(d);
    }
    Ok(cfg)
}
