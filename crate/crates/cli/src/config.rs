use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Only the output directory may come from the environment.
pub const OUT_ENV: &str = "SPHERE_NLS_OUT";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub params: Params,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub alpha: f64,
    /// Dyadic truncation degrees.
    pub n: Vec<usize>,
    pub t: f64,
    pub dt: f64,
    pub master_seed: u64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// `nls` or `resonant`, used by `simulate`.
    #[serde(default = "default_system")]
    pub system: String,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub q: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub b: f64,
    pub delta: f64,
    /// Sobolev index of the `converge` and `ensemble` tables.
    pub s: f64,
    /// Node spacing of the time-Fourier windows.
    pub spacing: f64,
    pub sn_norms: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self { q: 8.0, gamma: 0.9, gamma1: 0.92, b: 0.55, delta: 0.01, s: 0.4, spacing: 1e-3, sn_norms: false }
    }
}

fn default_ensemble() -> usize {
    200
}

fn one() -> f64 {
    1.0
}

fn default_system() -> String {
    "nls".into()
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        // toml reports the line, column and offending key
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if let Some(n) = e.n.iter().find(|n| !n.is_power_of_two()) {
            bail!("experiment.n: {n} is not dyadic");
        }
        if !(e.t >= 0.0 && e.dt > 0.0) {
            bail!("experiment.t / experiment.dt: need t ≥ 0 and dt > 0");
        }
        let steps = (e.t / e.dt).round();
        if (steps * e.dt - e.t).abs() > 1e-9 * e.t.max(e.dt) {
            bail!("experiment.dt: {} does not divide t = {}", e.dt, e.t);
        }
        if !(e.alpha > 0.0) {
            bail!("experiment.alpha: must be positive");
        }
        if e.system != "nls" && e.system != "resonant" {
            bail!("experiment.system: expected \"nls\" or \"resonant\", got {:?}", e.system);
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// salted with the subcommand.
    pub fn hash(&self, subcommand: &str) -> String {
        let canonical = serde_json::to_string(&(subcommand, self)).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_root(&self) -> PathBuf {
        std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| self.experiment.output_dir.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[experiment]
name = "t"
alpha = 1.5
n = [4, 8]
t = 0.05
dt = 1e-3
master_seed = 1
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.experiment.ensemble, 200);
        assert_eq!(c.params.q, 8.0);
    }

    #[test]
    fn errors_name_the_field() {
        let err = format!("{:#}", ExperimentConfig::parse(&BASE.replace("n = [4, 8]", "n = [4, 6]")).unwrap_err());
        assert!(err.contains("experiment.n"), "{err}");
        let err = format!("{:#}", ExperimentConfig::parse(&format!("{BASE}bogus = 1")).unwrap_err());
        assert!(err.contains("bogus") && err.contains("line"), "{err}");
        assert!(ExperimentConfig::parse(&BASE.replace("1e-3", "0.03")).is_err());
    }

    #[test]
    fn hash_depends_on_content_and_subcommand() {
        let a = ExperimentConfig::parse(BASE).unwrap();
        let b = ExperimentConfig::parse(&BASE.replace("master_seed = 1", "master_seed = 2")).unwrap();
        assert_eq!(a.hash("simulate"), a.clone().hash("simulate"));
        assert_ne!(a.hash("simulate"), b.hash("simulate"));
        assert_ne!(a.hash("simulate"), a.hash("converge"));
    }
}
