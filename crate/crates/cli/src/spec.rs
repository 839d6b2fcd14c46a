//! Experiment specification files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use enrich_core::{QualityConstants, RunParams, ShaperConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Shaper config file, relative to the spec file.
    pub config: PathBuf,
    /// First run seed; run `k` of a batch uses `seed + k`.
    pub seed: u64,
    #[serde(default)]
    pub quality: QualityConstants,
    #[serde(default)]
    pub run: RunParams,
    pub eval: EvalSettings,
    /// Output directory, relative to the spec file.
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default = "default_testset_size")]
    pub testset_size: usize,
    pub testset_seed: u64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Runs per approach.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Random combinations per size when not enumerated exhaustively.
    #[serde(default = "default_combo_samples")]
    pub combo_samples: usize,
    pub combo_seed: u64,
}

fn default_testset_size() -> usize {
    200
}

fn default_epsilons() -> Vec<f64> {
    vec![0.05, 0.25, 0.30, 0.35, 0.40]
}

fn default_runs() -> usize {
    15
}

fn default_combo_samples() -> usize {
    20
}

/// A parsed spec with its config loaded and paths resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub config: ShaperConfig,
    pub out: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path, config_override: Option<&Path>, out_override: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
        let mut spec: ExperimentSpec =
            serde_json::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let config_path = match config_override {
            Some(p) => p.to_path_buf(),
            None => base.join(&spec.config),
        };
        let config = load_config(&config_path)?;
        spec.quality
            .validate()
            .with_context(|| format!("quality constants in {}", path.display()))?;
        spec.run.seed = spec.seed;
        spec.run
            .validate(&config)
            .with_context(|| format!("run parameters in {}", path.display()))?;
        let out = match out_override {
            Some(p) => p.to_path_buf(),
            None => base.join(&spec.out),
        };
        spec.eval.validate()?;
        Ok(Experiment { spec, config, out })
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        check_epsilons(&self.epsilons)?;
        if self.runs == 0 {
            return Err(UsageError::new("eval.runs must be at least 1").into());
        }
        if self.testset_size == 0 {
            return Err(UsageError::new("eval.testset_size must be at least 1").into());
        }
        if self.combo_samples == 0 {
            return Err(UsageError::new("eval.combo_samples must be at least 1").into());
        }
        Ok(())
    }
}

pub fn check_epsilons(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(UsageError::new("epsilon list is empty").into());
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(UsageError::new(format!("epsilon {e} outside (0, 1)")).into());
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ShaperConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    ShaperConfig::from_json(&text).with_context(|| format!("loading config {}", path.display()))
}
