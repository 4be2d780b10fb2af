//! Error diagnostics behind the `decompose` subcommand: re-derives the
//! sampled batches of a seeded run at probe iterations and splits the
//! gradient deviation into its noise, direction, and block components.

use anyhow::{Context, Result};
use zo_core::{
    decompose_errors, error_moment_bounds, iteration_probe, make_problem,
    smoothed_gradient_reference, RngStreams, StochasticOracle,
};

use crate::config::ExperimentConfig;
use crate::experiment::checkpoint_iterations;

#[derive(Debug, Clone)]
pub struct DecomposeRow {
    pub iteration: usize,
    pub block: usize,
    pub batch_size: usize,
    pub noise_sq: f64,
    pub direction_sq: f64,
    pub block_sq: f64,
    /// Bounds on the expected squared norms at this batch size.
    pub noise_bound: f64,
    pub direction_bound: f64,
    pub block_bound: Option<f64>,
    /// Deviation of noise + direction + block from the scaled batch
    /// deviation it must reconstruct.
    pub sum_deviation: f64,
}

#[derive(Debug)]
pub struct DecomposeReport {
    pub rows: Vec<DecomposeRow>,
    pub max_sum_deviation: f64,
}

/// Runs one seeded replication and decomposes the gradient error at the
/// probe iterations (the checkpoint set by default).
pub fn run_decompose(
    config: &ExperimentConfig,
    iterations: Option<Vec<usize>>,
) -> Result<DecomposeReport> {
    let problem = make_problem(&config.problem)?;
    let structure = problem.feasible.structure();
    let mut solver_config = config.solver.to_solver_config(
        config.base_seed,
        config.evaluation.residual_samples,
        None,
    );
    solver_config.store_all_iterates = true;
    let x0 = config.initial_point.resolve(problem.dim())?;
    let trace = zo_core::run(&solver_config, &problem.oracle, &problem.feasible, &x0)
        .context("running the probe replication")?;

    let probes: Vec<usize> = iterations.unwrap_or_else(|| {
        checkpoint_iterations(solver_config.horizon, config.evaluation.checkpoint_ratio)
    });
    let streams = RngStreams::new(trace.seed);
    let eta = trace.smoothing_radius;
    let constants = problem.oracle.constants();
    let n = structure.dim();
    let b = structure.block_count();

    let mut rows = Vec::new();
    let mut max_sum_deviation: f64 = 0.0;
    for &k in &probes {
        let Some(record) = trace.records.get(k) else { continue };
        let Some(x_k) = trace.iterate(k) else { continue };
        let probe = iteration_probe(&problem.oracle, structure, x_k, eta, record, &streams)?;
        let mut grad_rng = streams.evaluation_rng_at(k);
        let reference = smoothed_gradient_reference(
            &problem.oracle,
            x_k,
            eta,
            config.evaluation.residual_samples,
            &mut grad_rng,
        )?;
        let mut fallback_rng = streams.evaluation_rng_at(k + solver_config.horizon + 7);
        let decomposition = decompose_errors(
            &problem.oracle,
            structure,
            x_k,
            eta,
            &probe,
            &reference.gradient,
            Some((2000, &mut fallback_rng)),
        )?;
        let bounds = error_moment_bounds(&constants, n, b, eta, record.batch_size);
        let normsq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let embedded = probe.block_estimate.embedded(structure);
        let total = decomposition.total();
        let sum_deviation = embedded
            .iter()
            .zip(&reference.gradient)
            .zip(&total)
            .map(|((e, g), t)| {
                let expect = b as f64 * e - g;
                (t - expect) * (t - expect)
            })
            .sum::<f64>()
            .sqrt();
        max_sum_deviation = max_sum_deviation.max(sum_deviation);
        rows.push(DecomposeRow {
            iteration: k,
            block: record.block,
            batch_size: record.batch_size,
            noise_sq: normsq(&decomposition.noise_error),
            direction_sq: normsq(&decomposition.direction_error),
            block_sq: normsq(&decomposition.block_error),
            noise_bound: bounds.noise,
            direction_bound: bounds.direction,
            block_bound: bounds.block,
            sum_deviation,
        });
    }
    Ok(DecomposeReport { rows, max_sum_deviation })
}
