//! Experiment configuration: one strict JSON document. Unknown keys are
//! errors, and the whole document is echoed verbatim into the output
//! metadata together with its hash and the resolved seed list.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use zo_core::{BatchSchedule, ProblemSpec, SolverConfig};

fn default_lambda() -> f64 {
    0.5
}

fn default_batch_cap() -> usize {
    zo_core::solver::DEFAULT_BATCH_CAP
}

/// Solver parameters as configured; the per-replication seed is injected at
/// run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub smoothing_radius: f64,
    #[serde(default)]
    pub step_size: Option<f64>,
    pub horizon: usize,
    #[serde(default = "default_lambda")]
    pub output_window: f64,
    pub schedule: BatchSchedule,
    #[serde(default = "default_batch_cap")]
    pub batch_cap: usize,
    #[serde(default)]
    pub store_all_iterates: bool,
}

impl SolverSection {
    pub fn to_solver_config(
        &self,
        seed: u64,
        residual_samples: usize,
        horizon_override: Option<usize>,
    ) -> SolverConfig {
        SolverConfig {
            smoothing_radius: self.smoothing_radius,
            step_size: self.step_size,
            horizon: horizon_override.unwrap_or(self.horizon),
            output_window: self.output_window,
            schedule: self.schedule,
            batch_cap: self.batch_cap,
            store_all_iterates: self.store_all_iterates,
            residual_samples,
            seed,
        }
    }
}

fn default_residual_samples() -> usize {
    100_000
}

fn default_checkpoint_ratio() -> f64 {
    1.5
}

fn default_value_samples() -> usize {
    256
}

/// Measurement settings. Measurement draws come from the reserved
/// evaluation stream and are never charged to the optimization budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// Two-point samples per residual measurement (ignored when the problem
    /// declares an analytic smoothed gradient).
    #[serde(default = "default_residual_samples")]
    pub residual_samples: usize,
    /// Geometric spacing of checkpoint iterations.
    #[serde(default = "default_checkpoint_ratio")]
    pub checkpoint_ratio: f64,
    /// Evaluations per objective-value estimate on black-box problems.
    #[serde(default = "default_value_samples")]
    pub value_samples: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            residual_samples: default_residual_samples(),
            checkpoint_ratio: default_checkpoint_ratio(),
            value_samples: default_value_samples(),
        }
    }
}

fn default_resamples() -> usize {
    1000
}

/// Post-run analyses to perform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Fit a log-log slope of mean squared residual against the horizon.
    #[serde(default)]
    pub rate_fit: bool,
    /// Horizon grid for the rate fit; the solver horizon is used when absent.
    #[serde(default)]
    pub horizons: Option<Vec<usize>>,
    /// Check that the tail running-max of checkpoint residuals halves.
    #[serde(default)]
    pub as_tail: bool,
    /// Residual-norm targets for first-hit complexity accounting.
    #[serde(default)]
    pub epsilon_targets: Option<Vec<f64>>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            rate_fit: false,
            horizons: None,
            as_tail: false,
            epsilon_targets: None,
            bootstrap_resamples: default_resamples(),
        }
    }
}

/// Where a replication starts. The point is projected onto the feasible set
/// before the first iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPoint {
    #[default]
    Origin,
    Constant {
        value: f64,
    },
    Vector {
        values: Vec<f64>,
    },
}

impl InitialPoint {
    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        Ok(match self {
            InitialPoint::Origin => vec![0.0; dim],
            InitialPoint::Constant { value } => vec![*value; dim],
            InitialPoint::Vector { values } => {
                if values.len() != dim {
                    bail!(
                        "initial point has {} coordinates, problem dimension is {dim}",
                        values.len()
                    );
                }
                values.clone()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverSection,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Explicit per-replication seeds; derived from `base_seed` when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    pub output_dir: String,
    #[serde(default)]
    pub initial_point: InitialPoint,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).context("parsing experiment config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.replications {
                bail!(
                    "seed list has {} entries for {} replications",
                    seeds.len(),
                    self.replications
                );
            }
        }
        let ratio = self.evaluation.checkpoint_ratio;
        if ratio.is_nan() || ratio <= 1.0 {
            bail!("checkpoint_ratio must exceed 1");
        }
        if self.evaluation.residual_samples == 0 || self.evaluation.value_samples == 0 {
            bail!("evaluation sample counts must be at least 1");
        }
        if let Some(horizons) = &self.analysis.horizons {
            if horizons.is_empty() || horizons.contains(&0) {
                bail!("analysis.horizons must be nonempty positive integers");
            }
        }
        if let Some(targets) = &self.analysis.epsilon_targets {
            if targets.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
                bail!("epsilon targets must be positive");
            }
        }
        Ok(())
    }

    /// The per-replication seeds, explicit or derived from the base seed.
    pub fn replication_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(seeds) => seeds.clone(),
            None => (0..self.replications)
                .map(|r| self.base_seed.wrapping_add(r as u64))
                .collect(),
        }
    }

    /// FNV-1a hash of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canonical.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"name": "abs1d"},
        "solver": {
            "smoothing_radius": 0.1,
            "horizon": 10,
            "schedule": {"mode": "rate", "a": 0.0}
        },
        "replications": 1,
        "output_dir": "out"
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(config.evaluation.checkpoint_ratio, 1.5);
        assert_eq!(config.evaluation.residual_samples, 100_000);
        assert_eq!(config.solver.output_window, 0.5);
        assert_eq!(config.replication_seeds(), vec![0]);
        assert_eq!(config.initial_point, InitialPoint::Origin);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let top = MINIMAL.replace("\"output_dir\": \"out\"", "\"output_dir\": \"out\", \"oops\": 1");
        assert!(ExperimentConfig::from_json(&top).is_err());
        let nested = MINIMAL.replace("\"horizon\": 10,", "\"horizon\": 10, \"oops\": 1,");
        assert!(ExperimentConfig::from_json(&nested).is_err());
    }

    #[test]
    fn seed_list_must_match_replications() {
        let with_seeds = MINIMAL.replace(
            "\"replications\": 1",
            "\"replications\": 2, \"seeds\": [1, 2, 3]",
        );
        assert!(ExperimentConfig::from_json(&with_seeds).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let b = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_json(&MINIMAL.replace("0.1", "0.2")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
