//! The randomized-block zeroth-order solver.
//!
//! Each iteration draws one block uniformly, forms a mini-batch of
//! block-restricted two-point gradient samples at smoothing radius `eta`,
//! and takes a projected step of size `gamma` on that block alone. The
//! returned point is the iterate at an index drawn uniformly from the output
//! window `{ceil(lambda*K), ..., K}`.
//!
//! Batch draws are counter-addressed by `(iteration, sample)`, so any
//! iteration's samples can be re-derived afterwards for diagnostics: the
//! compact-update identity, the error decomposition, and the per-iteration
//! descent inequality all reuse the exact draws of the run they probe.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BlockStructure, FeasibleSet, GeometryError};
use crate::oracle::{
    batch_sample_pair, minibatch_block_gradient, smoothed_gradient_reference, zo_gradient_sample,
    GradientEstimate, OracleConstants, OracleError, StochasticOracle,
};
use crate::residual::{projection_residual, ResidualError, ResidualReport};
use crate::sampling::{
    output_window_start, sample_block, sample_output_index, RngStreams, SamplingError,
};
use crate::util::{norm2, TreeAccumulator};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("smoothing radius {eta} outside (0, {limit}]")]
    SmoothingRadius { eta: f64, limit: f64 },
    #[error("step size {gamma} outside (0, {bound}) = (0, b*eta/(n*L0))")]
    StepSize { gamma: f64, bound: f64 },
    #[error("output window fraction {lambda} outside (0, 1)")]
    OutputWindow { lambda: f64 },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("batch cap must be at least 1")]
    ZeroBatchCap,
    #[error("schedule parameter out of range: {0}")]
    Schedule(String),
    #[error("residual sample count must be at least 1")]
    ZeroResidualSamples,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize, partial: Box<PartialTrace> },
    #[error("observer failed: {0}")]
    Observer(#[from] std::io::Error),
    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),
}

/// Per-iteration batch size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchSchedule {
    /// `N_k = ceil(1 + (k+1) / eta^a)`: linear growth, the rate regime.
    Rate { a: f64 },
    /// `N_k = ceil((k+1)^(1+delta))`: superlinear growth, the
    /// almost-sure-convergence regime.
    AlmostSure { delta: f64 },
}

impl BatchSchedule {
    /// Batch size at iteration `k`, with the cap flag.
    pub fn batch_size(&self, k: usize, eta: f64, cap: usize) -> (usize, bool) {
        let raw = match self {
            BatchSchedule::Rate { a } => (1.0 + (k as f64 + 1.0) / eta.powf(*a)).ceil(),
            BatchSchedule::AlmostSure { delta } => (k as f64 + 1.0).powf(1.0 + delta).ceil(),
        };
        if raw > cap as f64 {
            (cap.max(1), true)
        } else {
            ((raw as usize).max(1), false)
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match self {
            BatchSchedule::Rate { a } if !(a.is_finite() && *a >= 0.0) => {
                Err(ConfigError::Schedule(format!("rate exponent a = {a} must be >= 0")))
            }
            BatchSchedule::AlmostSure { delta } if !(delta.is_finite() && *delta > 0.0) => {
                Err(ConfigError::Schedule(format!("delta = {delta} must be > 0")))
            }
            _ => Ok(()),
        }
    }
}

pub const DEFAULT_BATCH_CAP: usize = 1_000_000;

fn default_batch_cap() -> usize {
    DEFAULT_BATCH_CAP
}

fn default_residual_samples() -> usize {
    crate::oracle::DEFAULT_REFERENCE_SAMPLES
}

/// Algorithm parameters for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Smoothing radius `eta`, in `(0, eta0]`.
    pub smoothing_radius: f64,
    /// Step size `gamma`; `None` selects `b*eta / (2*n*L0)`.
    #[serde(default)]
    pub step_size: Option<f64>,
    /// Iteration count `K`.
    pub horizon: usize,
    /// Output-window fraction `lambda` in `(0, 1)`.
    pub output_window: f64,
    pub schedule: BatchSchedule,
    /// Hard ceiling on any batch size; engaging it is recorded as a warning.
    #[serde(default = "default_batch_cap")]
    pub batch_cap: usize,
    /// Keep every iterate rather than only the output window.
    #[serde(default)]
    pub store_all_iterates: bool,
    /// Two-point samples for the final residual measurement when the oracle
    /// has no analytic smoothed gradient.
    #[serde(default = "default_residual_samples")]
    pub residual_samples: usize,
    /// Master seed for all randomness of the run.
    #[serde(default)]
    pub seed: u64,
}

impl SolverConfig {
    /// Upper bound `b*eta/(n*L0)` required of the step size.
    pub fn step_size_bound(&self, dim: usize, blocks: usize, lipschitz: f64) -> f64 {
        blocks as f64 * self.smoothing_radius / (dim as f64 * lipschitz)
    }

    /// The configured or default step size.
    pub fn resolved_step_size(&self, dim: usize, blocks: usize, lipschitz: f64) -> f64 {
        self.step_size
            .unwrap_or_else(|| 0.5 * self.step_size_bound(dim, blocks, lipschitz))
    }

    pub fn validate(
        &self,
        dim: usize,
        blocks: usize,
        constants: &OracleConstants,
    ) -> Result<(), ConfigError> {
        let eta = self.smoothing_radius;
        if !(eta.is_finite() && eta > 0.0 && eta <= constants.smoothing_limit) {
            return Err(ConfigError::SmoothingRadius {
                eta,
                limit: constants.smoothing_limit,
            });
        }
        if !(self.output_window.is_finite()
            && self.output_window > 0.0
            && self.output_window < 1.0)
        {
            return Err(ConfigError::OutputWindow { lambda: self.output_window });
        }
        if self.horizon == 0 {
            return Err(ConfigError::ZeroHorizon);
        }
        if self.batch_cap == 0 {
            return Err(ConfigError::ZeroBatchCap);
        }
        if self.residual_samples == 0 {
            return Err(ConfigError::ZeroResidualSamples);
        }
        self.schedule.validate()?;
        let bound = self.step_size_bound(dim, blocks, constants.lipschitz);
        let gamma = self.resolved_step_size(dim, blocks, constants.lipschitz);
        if !(gamma.is_finite() && gamma > 0.0 && gamma < bound) {
            return Err(ConfigError::StepSize { gamma, bound });
        }
        Ok(())
    }
}

/// What happened at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub block: usize,
    pub batch_size: usize,
    /// Running total of oracle evaluations, `2 * sum N_t` so far.
    pub cumulative_evaluations: u64,
}

/// Observer view of a completed iteration.
pub struct StepEvent<'a> {
    pub record: IterationRecord,
    pub previous: &'a [f64],
    pub current: &'a [f64],
    /// Mini-batch mean gradient on the selected block.
    pub block_gradient: &'a [f64],
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct Trace {
    pub seed: u64,
    pub step_size: f64,
    pub smoothing_radius: f64,
    pub records: Vec<IterationRecord>,
    /// First iterate index retained in `iterates`.
    pub stored_from: usize,
    /// Iterates `x_k` for `k = stored_from ..= horizon`.
    pub iterates: Vec<Vec<f64>>,
    /// The returned index `R` in the output window.
    pub output_index: usize,
    pub output_point: Vec<f64>,
    pub residual: ResidualReport,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn iterate(&self, k: usize) -> Option<&[f64]> {
        k.checked_sub(self.stored_from)
            .and_then(|i| self.iterates.get(i))
            .map(Vec::as_slice)
    }

    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn total_evaluations(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_evaluations)
    }
}

/// Trace prefix preserved when a run aborts.
#[derive(Debug, Clone)]
pub struct PartialTrace {
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub stored_from: usize,
    pub iterates: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// One projected block step.
pub struct StepOutcome {
    pub block: usize,
    pub batch_size: usize,
    pub capped: bool,
    pub next: Vec<f64>,
    pub block_gradient: GradientEstimate,
}

/// Draws the block, evaluates the mini-batch block gradient, and applies the
/// projected update to the selected block only.
#[allow(clippy::too_many_arguments)]
pub fn step(
    oracle: &dyn StochasticOracle,
    set: &FeasibleSet,
    x: &[f64],
    k: usize,
    eta: f64,
    gamma: f64,
    schedule: BatchSchedule,
    batch_cap: usize,
    streams: &mut RngStreams,
) -> Result<StepOutcome, SolverError> {
    let structure = set.structure();
    let block = sample_block(streams.block(), structure.block_count())?;
    let (batch_size, capped) = schedule.batch_size(k, eta, batch_cap);
    let block_gradient =
        minibatch_block_gradient(oracle, structure, x, eta, block, batch_size, streams, k)?;
    let mut next = x.to_vec();
    let range = structure.range(block);
    for (xi, gi) in next[range.clone()].iter_mut().zip(&block_gradient.values) {
        *xi -= gamma * gi;
    }
    set.project_block_in_place(block, &mut next[range]);
    Ok(StepOutcome { block, batch_size, capped, next, block_gradient })
}

/// Runs the full loop. Deterministic given `config.seed`.
pub fn run(
    config: &SolverConfig,
    oracle: &dyn StochasticOracle,
    set: &FeasibleSet,
    x0: &[f64],
) -> Result<Trace, SolverError> {
    run_with_observer(config, oracle, set, x0, &mut |_| Ok(()))
}

/// As [`run`], invoking the observer after every completed iteration.
pub fn run_with_observer(
    config: &SolverConfig,
    oracle: &dyn StochasticOracle,
    set: &FeasibleSet,
    x0: &[f64],
    observer: &mut dyn FnMut(&StepEvent<'_>) -> std::io::Result<()>,
) -> Result<Trace, SolverError> {
    let structure = set.structure();
    let n = structure.dim();
    let b = structure.block_count();
    let constants = oracle.constants();
    config.validate(n, b, &constants)?;
    let eta = config.smoothing_radius;
    let gamma = config.resolved_step_size(n, b, constants.lipschitz);

    let mut streams = RngStreams::new(config.seed);
    let output_index = sample_output_index(streams.output(), config.horizon, config.output_window)?;
    let stored_from =
        if config.store_all_iterates { 0 } else { output_window_start(config.horizon, config.output_window) };

    let mut x = x0.to_vec();
    structure.check_dim(&x)?;
    set.project_in_place(&mut x)?;

    let mut iterates = Vec::new();
    if stored_from == 0 {
        iterates.push(x.clone());
    }
    let mut records = Vec::with_capacity(config.horizon);
    let mut warnings = Vec::new();
    let mut cumulative: u64 = 0;
    let mut cap_warned = false;

    for k in 0..config.horizon {
        let outcome =
            step(oracle, set, &x, k, eta, gamma, config.schedule, config.batch_cap, &mut streams)?;
        if outcome.capped && !cap_warned {
            warnings.push(format!(
                "batch size capped at {} from iteration {k}; schedule no longer grows",
                config.batch_cap
            ));
            cap_warned = true;
        }
        cumulative += 2 * outcome.batch_size as u64;
        let previous = x;
        x = outcome.next;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite {
                iteration: k,
                partial: Box::new(PartialTrace {
                    seed: config.seed,
                    records,
                    stored_from,
                    iterates,
                    warnings,
                }),
            });
        }
        let record = IterationRecord {
            iteration: k,
            block: outcome.block,
            batch_size: outcome.batch_size,
            cumulative_evaluations: cumulative,
        };
        observer(&StepEvent {
            record,
            previous: &previous,
            current: &x,
            block_gradient: &outcome.block_gradient.values,
        })?;
        records.push(record);
        if k + 1 >= stored_from {
            iterates.push(x.clone());
        }
    }

    let output_point = iterates[output_index - stored_from].clone();
    let beta = b as f64 / gamma;
    let mut eval_rng = streams.evaluation_rng_at(output_index);
    let reference = smoothed_gradient_reference(
        oracle,
        &output_point,
        eta,
        config.residual_samples,
        &mut eval_rng,
    )?;
    let residual = ResidualReport::compute(set, &output_point, eta, beta, &reference)?;

    Ok(Trace {
        seed: config.seed,
        step_size: gamma,
        smoothing_radius: eta,
        records,
        stored_from,
        iterates,
        output_index,
        output_point,
        residual,
        warnings,
    })
}

/// The re-derived raw samples of one recorded iteration.
pub struct IterationProbe {
    pub iteration: usize,
    pub block: usize,
    pub directions: Vec<Vec<f64>>,
    pub noise_seeds: Vec<u64>,
    /// Batch mean over the block, identical to what the run used.
    pub block_estimate: GradientEstimate,
}

/// Re-derives the `(direction, noise-seed)` pairs and the batch mean of a
/// recorded iteration from the master seed alone.
pub fn iteration_probe(
    oracle: &dyn StochasticOracle,
    structure: &BlockStructure,
    x: &[f64],
    eta: f64,
    record: &IterationRecord,
    streams: &RngStreams,
) -> Result<IterationProbe, SolverError> {
    let n = structure.dim();
    let block = record.block;
    let mut directions = Vec::with_capacity(record.batch_size);
    let mut noise_seeds = Vec::with_capacity(record.batch_size);
    let mut acc = TreeAccumulator::new(structure.block_dim(block));
    for j in 0..record.batch_size {
        let (v, omega) = batch_sample_pair(streams, record.iteration, j, n, eta)?;
        let full = zo_gradient_sample(oracle, x, &v, eta, omega)?;
        acc.push(structure.block_slice(block, &full.values));
        directions.push(v);
        noise_seeds.push(omega);
    }
    Ok(IterationProbe {
        iteration: record.iteration,
        block,
        directions,
        noise_seeds,
        block_estimate: GradientEstimate {
            values: acc.mean(),
            block: Some(block),
            eta,
            samples: record.batch_size,
        },
    })
}

/// Batch-mean error split of one iteration: noise error (sampled minus mean
/// smoothed gradient), direction error (two-point sample minus per-seed
/// smoothed gradient), and block error (scaled embedded block piece minus
/// the full sample). The three sum to
/// `b * embed(block, batch mean) - smoothed_gradient` by construction.
#[derive(Debug, Clone)]
pub struct ErrorDecomposition {
    pub noise_error: Vec<f64>,
    pub direction_error: Vec<f64>,
    pub block_error: Vec<f64>,
    pub batch_size: usize,
}

impl ErrorDecomposition {
    pub fn total(&self) -> Vec<f64> {
        self.noise_error
            .iter()
            .zip(&self.direction_error)
            .zip(&self.block_error)
            .map(|((e, t), d)| e + t + d)
            .collect()
    }
}

/// Computes the error split from a probe. `smoothed_gradient` is the
/// evaluation-grade gradient of the smoothed objective at `x`; the per-seed
/// smoothed gradient comes from the oracle's closed form when declared,
/// otherwise from a Monte Carlo fallback using the supplied generator.
pub fn decompose_errors(
    oracle: &dyn StochasticOracle,
    structure: &BlockStructure,
    x: &[f64],
    eta: f64,
    probe: &IterationProbe,
    smoothed_gradient: &[f64],
    fallback: Option<(usize, &mut ChaCha12Rng)>,
) -> Result<ErrorDecomposition, SolverError> {
    let n = structure.dim();
    let b = structure.block_count() as f64;
    let mut noise_acc = TreeAccumulator::new(n);
    let mut direction_acc = TreeAccumulator::new(n);
    let mut block_acc = TreeAccumulator::new(n);
    let mut fallback = fallback;
    for (v, &omega) in probe.directions.iter().zip(&probe.noise_seeds) {
        let full = zo_gradient_sample(oracle, x, v, eta, omega)?;
        let per_seed = match oracle.noisy_smoothed_gradient(x, eta, omega) {
            Some(g) => g,
            None => match fallback.as_mut() {
                Some((samples, rng)) => crate::oracle::noisy_smoothed_gradient_estimate(
                    oracle, x, eta, omega, *samples, rng,
                )?,
                None => {
                    return Err(SolverError::DiagnosticUnavailable(
                        "oracle declares no per-seed smoothed gradient and no Monte Carlo \
                         fallback was provided"
                            .into(),
                    ))
                }
            },
        };
        let noise: Vec<f64> =
            per_seed.iter().zip(smoothed_gradient).map(|(p, s)| p - s).collect();
        let direction: Vec<f64> =
            full.values.iter().zip(&per_seed).map(|(f, p)| f - p).collect();
        let mut block = structure.embed(probe.block, structure.block_slice(probe.block, &full.values));
        for (bi, fi) in block.iter_mut().zip(&full.values) {
            *bi = b * *bi - fi;
        }
        noise_acc.push(&noise);
        direction_acc.push(&direction);
        block_acc.push(&block);
    }
    Ok(ErrorDecomposition {
        noise_error: noise_acc.mean(),
        direction_error: direction_acc.mean(),
        block_error: block_acc.mean(),
        batch_size: probe.directions.len(),
    })
}

/// Theoretical bounds on the batch-mean second moments of the three error
/// components at batch size `N`.
#[derive(Debug, Clone, Copy)]
pub struct ErrorMomentBounds {
    /// `n^2 nu^2 / (eta^2 N)`
    pub noise: f64,
    /// `L0^2 n^2 / N`
    pub direction: f64,
    /// `3 n^2 (b-1) (nu^2/eta^2 + L0^2 + (sup/eta)^2) / N`; `None` when the
    /// value bound is undeclared and more than one block exists.
    pub block: Option<f64>,
}

pub fn error_moment_bounds(
    constants: &OracleConstants,
    dim: usize,
    blocks: usize,
    eta: f64,
    batch: usize,
) -> ErrorMomentBounds {
    let n2 = (dim * dim) as f64;
    let nk = batch as f64;
    let nu2 = constants.noise_bound * constants.noise_bound;
    let l2 = constants.lipschitz * constants.lipschitz;
    let noise = n2 * nu2 / (eta * eta * nk);
    let direction = l2 * n2 / nk;
    let block = if blocks == 1 {
        Some(0.0)
    } else {
        constants.value_sup.map(|sup| {
            3.0 * n2 * (blocks as f64 - 1.0) / nk
                * (nu2 / (eta * eta) + l2 + (sup / eta) * (sup / eta))
        })
    };
    ErrorMomentBounds { noise, direction, block }
}

/// One per-iteration check of the compact-update identity: the blockwise
/// projected step equals the full projected step
/// `P[x - (gamma/b) * (smoothed_gradient + total_error)]` rebuilt from the
/// same samples.
#[derive(Debug, Clone, Copy)]
pub struct CompactUpdateCheck {
    pub iteration: usize,
    /// Euclidean distance between the two updates.
    pub deviation: f64,
}

/// Verifies the compact-update identity over every stored consecutive
/// iterate pair of a trace. Requires an analytic smoothed gradient.
pub fn compact_update_checks(
    oracle: &dyn StochasticOracle,
    set: &FeasibleSet,
    trace: &Trace,
) -> Result<Vec<CompactUpdateCheck>, SolverError> {
    let structure = set.structure();
    let b = structure.block_count() as f64;
    let gamma = trace.step_size;
    let eta = trace.smoothing_radius;
    let streams = RngStreams::new(trace.seed);
    let mut checks = Vec::new();
    for record in &trace.records {
        let k = record.iteration;
        let (Some(x_k), Some(x_next)) = (trace.iterate(k), trace.iterate(k + 1)) else {
            continue;
        };
        let grad = oracle.analytic_smoothed_gradient(x_k, eta).ok_or_else(|| {
            SolverError::DiagnosticUnavailable(
                "compact-update check needs an analytic smoothed gradient".into(),
            )
        })?;
        let probe = iteration_probe(oracle, structure, x_k, eta, record, &streams)?;
        // total error = b * embed(block mean) - grad; rebuilt the same way
        // the error decomposition defines it.
        let embedded = probe.block_estimate.embedded(structure);
        let total: Vec<f64> =
            embedded.iter().zip(&grad).map(|(e, g)| b * e - g).collect();
        let compact_arg: Vec<f64> = x_k
            .iter()
            .zip(&grad)
            .zip(&total)
            .map(|((xi, gi), ti)| xi - gamma / b * (gi + ti))
            .collect();
        let compact = set.project(&compact_arg)?;
        let deviation = compact
            .iter()
            .zip(x_next)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        checks.push(CompactUpdateCheck { iteration: k, deviation });
    }
    Ok(checks)
}

/// One evaluation of the monitored per-iteration descent inequality
/// `(1 - n L0 g/(b eta)) * g/(4b) * |G(x_k)|^2
///  <= f_eta(x_k) - f_eta(x_{k+1})
///     + (1 - n L0 g/(2 b eta)) * (g/b) * |total error|^2`.
#[derive(Debug, Clone, Copy)]
pub struct DescentCheck {
    pub iteration: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Monitors the descent inequality over every stored consecutive iterate
/// pair. Requires analytic smoothed values and gradients.
pub fn descent_inequality_checks(
    oracle: &dyn StochasticOracle,
    set: &FeasibleSet,
    trace: &Trace,
) -> Result<Vec<DescentCheck>, SolverError> {
    let structure = set.structure();
    let n = structure.dim() as f64;
    let b = structure.block_count() as f64;
    let gamma = trace.step_size;
    let eta = trace.smoothing_radius;
    let l0 = oracle.constants().lipschitz;
    let ratio = n * l0 * gamma / (b * eta);
    let streams = RngStreams::new(trace.seed);
    let mut checks = Vec::new();
    for record in &trace.records {
        let k = record.iteration;
        let (Some(x_k), Some(x_next)) = (trace.iterate(k), trace.iterate(k + 1)) else {
            continue;
        };
        let unavailable = || {
            SolverError::DiagnosticUnavailable(
                "descent monitor needs analytic smoothed values and gradients".into(),
            )
        };
        let grad = oracle.analytic_smoothed_gradient(x_k, eta).ok_or_else(unavailable)?;
        let f_k = oracle.analytic_smoothed_value(x_k, eta).ok_or_else(unavailable)?;
        let f_next = oracle.analytic_smoothed_value(x_next, eta).ok_or_else(unavailable)?;
        let residual = projection_residual(set, x_k, &grad, b / gamma)?;
        let probe = iteration_probe(oracle, structure, x_k, eta, record, &streams)?;
        let embedded = probe.block_estimate.embedded(structure);
        let total: Vec<f64> =
            embedded.iter().zip(&grad).map(|(e, g)| b * e - g).collect();
        let lhs = (1.0 - ratio) * gamma / (4.0 * b) * norm2(&residual).powi(2);
        let rhs = f_k - f_next + (1.0 - 0.5 * ratio) * gamma / b * norm2(&total).powi(2);
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        checks.push(DescentCheck { iteration: k, lhs, rhs, holds: rhs - lhs >= -1e-10 * scale });
    }
    Ok(checks)
}
