use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Outcome of one independent sub-experiment.
#[derive(Clone, Debug, Serialize)]
pub struct SubResult {
    pub name: String,
    pub passed: bool,
    pub summary: serde_json::Value,
    pub error: Option<String>,
}

impl SubResult {
    pub fn ok(name: impl Into<String>, passed: bool, summary: serde_json::Value) -> Self {
        Self { name: name.into(), passed, summary, error: None }
    }

    pub fn failed(name: impl Into<String>, err: &anyhow::Error) -> Self {
        Self { name: name.into(), passed: false, summary: serde_json::Value::Null, error: Some(format!("{err:#}")) }
    }
}

/// Creates `<root>/<subcommand>-<hash>`, refusing to reuse it unless forced.
pub fn prepare_dir(cfg: &ExperimentConfig, subcommand: &str, force: bool) -> Result<PathBuf> {
    let dir = cfg.output_root().join(format!("{subcommand}-{}", cfg.hash(subcommand)));
    if dir.exists() {
        if !force {
            bail!("{} already exists; rerun with --force to overwrite", dir.display());
        }
        fs::remove_dir_all(&dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn write_manifest(dir: &Path, cfg: &ExperimentConfig, subcommand: &str, results: &[SubResult]) -> Result<()> {
    let manifest = serde_json::json!({
        "subcommand": subcommand,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(subcommand),
        "config": cfg,
        "results": results,
        "failed": results.iter().filter(|r| !r.passed).count(),
    });
    write_json(&dir.join("manifest.json"), &manifest)
}
