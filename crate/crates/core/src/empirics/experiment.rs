//! Config-driven sweeps with a manifest that is enough to regenerate the CSV.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::registry::{AlgorithmKind, GridPoint, Overrides, ProblemSpec};
use super::sweep::{run_seeds, sweep_point, RunSeeds, SweepResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmKind,
    pub problem: ProblemSpec,
    pub grid: Vec<GridPoint>,
    pub trials: usize,
    /// Required: there is no default or clock-based seed.
    pub seed: u64,
    /// CSV path; the manifest goes next to it.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub overrides: Overrides,
}

impl ExperimentConfig {
    /// Parses and validates. Parse errors carry serde's line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Everything that can be checked without running: names resolve, the
    /// grid is nonempty, and the algorithm applies at every grid point.
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("grid must contain at least one point".into()));
        }
        if self.trials < 2 {
            return Err(Error::InvalidArgument(format!("trials must be at least 2, got {}", self.trials)));
        }
        for (i, &point) in self.grid.iter().enumerate() {
            let dist = self.problem.build(point.d)?;
            self.algorithm
                .validate(&dist, point, &self.overrides)
                .map_err(|e| Error::InvalidArgument(format!("grid[{i}]: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<RunSeeds>,
    /// True when a run failed and the CSV holds only the completed grid points.
    pub partial: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results: Vec<SweepResult>,
    pub manifest: Manifest,
}

/// Runs the grid in order, stopping at the first failing grid point.
pub fn execute(config: &ExperimentConfig) -> ExperimentOutcome {
    let mut results = Vec::with_capacity(config.grid.len());
    let mut error = None;
    for (i, &point) in config.grid.iter().enumerate() {
        match sweep_point(
            &config.problem,
            config.algorithm,
            &config.overrides,
            point,
            i,
            config.trials,
            config.seed,
        ) {
            Ok(r) => results.push(r),
            Err(e) => {
                error = Some(format!("grid[{i}]: {e}"));
                break;
            }
        }
    }
    let seeds = (0..config.grid.len())
        .flat_map(|i| (0..config.trials).map(move |t| (i, t)))
        .map(|(i, t)| run_seeds(config.seed, i, t))
        .collect();
    let manifest = Manifest {
        config_sha256: config.digest(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds,
        partial: error.is_some(),
        error,
    };
    ExperimentOutcome { results, manifest }
}
