//! Seeded multi-replication experiment runner with incremental CSV traces.
//!
//! Layout of an output directory:
//! - `metadata.json`: version, config hash, resolved seeds, config echo.
//! - `repNNN_trace.csv` per replication (in `KNNNNNN/` subdirectories when a
//!   horizon grid is configured), one row per iteration with residual
//!   columns populated at geometrically spaced checkpoint iterations.
//! - `summary.csv` per horizon: one row per replication plus a tree-reduced
//!   mean row.
//! - `ratefit.json`, `complexity.json`, `tail.json` when the corresponding
//!   analyses are enabled.
//!
//! Measurement draws (residuals, value estimates) come from the reserved
//! evaluation stream and are excluded from the evaluation counts.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use zo_core::util::pairwise_mean;
use zo_core::{
    make_problem, smoothed_gradient_reference, RngStreams, StochasticOracle, TestProblem,
};

use crate::analysis::{
    check_as_tail, check_sample_complexity, fit_rate, AggregatedCheckpoint, ComplexityTable,
    HorizonSamples, RateFit, TailReport,
};
use crate::config::ExperimentConfig;

/// Geometrically spaced checkpoint iterations: `0, 1, 2, ...` growing by
/// `ratio`, always including the final iteration `horizon - 1`.
pub fn checkpoint_iterations(horizon: usize, ratio: f64) -> Vec<usize> {
    let mut ks = vec![0];
    let mut k = 1usize;
    while k < horizon {
        ks.push(k);
        k = ((k as f64 * ratio).floor() as usize).max(k + 1);
    }
    if horizon > 1 && *ks.last().unwrap() != horizon - 1 {
        ks.push(horizon - 1);
    }
    ks
}

/// Residual and value measured at one checkpoint.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckpointRow {
    pub iteration: usize,
    pub cumulative_evaluations: u64,
    pub value: f64,
    pub residual_norm: f64,
    pub residual_se: f64,
}

/// Result of one replication.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub replication: usize,
    pub seed: u64,
    pub output_index: usize,
    /// The returned iterate `x_R`.
    pub output_point: Vec<f64>,
    /// The post-loop iterate `x_K`.
    pub last_iterate: Vec<f64>,
    pub total_evaluations: u64,
    pub final_value: f64,
    pub residual_norm: f64,
    pub residual_se: f64,
    pub checkpoints: Vec<CheckpointRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct HorizonOutcome {
    pub horizon: usize,
    pub dir: PathBuf,
    pub reps: Vec<RepOutcome>,
    pub mean_squared_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailSummary {
    pub per_replication: Vec<TailEntry>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailEntry {
    pub replication: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub report: TailReport,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub horizons: Vec<HorizonOutcome>,
    pub rate_fit: Option<RateFit>,
    pub complexity: Option<ComplexityTable>,
    pub tail: Option<TailSummary>,
    pub failures: Vec<(usize, u64, String)>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Estimates `f` at a point: the declared mean when known, otherwise a
/// Monte Carlo average of sampled evaluations.
fn estimate_value(
    oracle: &dyn StochasticOracle,
    x: &[f64],
    samples: usize,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> f64 {
    if let Some(v) = oracle.true_value(x) {
        return v;
    }
    use rand::RngCore;
    let values: Vec<f64> = (0..samples.max(1)).map(|_| oracle.evaluate(x, rng.next_u64())).collect();
    pairwise_mean(&values)
}

fn run_replication(
    config: &ExperimentConfig,
    problem: &TestProblem,
    horizon: usize,
    replication: usize,
    seed: u64,
    trace_path: &Path,
) -> Result<RepOutcome> {
    let solver_config = config.solver.to_solver_config(
        seed,
        config.evaluation.residual_samples,
        Some(horizon),
    );
    let structure = problem.feasible.structure();
    let constants = problem.oracle.constants();
    let gamma = solver_config.resolved_step_size(
        structure.dim(),
        structure.block_count(),
        constants.lipschitz,
    );
    let beta = structure.block_count() as f64 / gamma;
    let eta = solver_config.smoothing_radius;
    let x0 = config.initial_point.resolve(problem.dim())?;

    let checkpoint_set: HashSet<usize> =
        checkpoint_iterations(horizon, config.evaluation.checkpoint_ratio)
            .into_iter()
            .collect();
    let measure_streams = RngStreams::new(seed);

    let file = File::create(trace_path)
        .with_context(|| format!("creating trace {}", trace_path.display()))?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "k,i_k,N_k,cum_evals,f_val_estimate,residual_norm,residual_se")?;

    let mut checkpoints: Vec<CheckpointRow> = Vec::new();
    let mut observer = |event: &zo_core::StepEvent<'_>| -> std::io::Result<()> {
        let k = event.record.iteration;
        let (value_s, norm_s, se_s) = if checkpoint_set.contains(&k) {
            let mut rng = measure_streams.evaluation_rng_at(k);
            let reference = smoothed_gradient_reference(
                &problem.oracle,
                event.previous,
                eta,
                config.evaluation.residual_samples,
                &mut rng,
            )
            .map_err(std::io::Error::other)?;
            let report = zo_core::ResidualReport::compute(
                &problem.feasible,
                event.previous,
                eta,
                beta,
                &reference,
            )
            .map_err(std::io::Error::other)?;
            let value = estimate_value(
                &problem.oracle,
                event.previous,
                config.evaluation.value_samples,
                &mut rng,
            );
            checkpoints.push(CheckpointRow {
                iteration: k,
                cumulative_evaluations: event.record.cumulative_evaluations,
                value,
                residual_norm: report.norm,
                residual_se: report.gradient_std_error,
            });
            (fmt_f64(value), fmt_f64(report.norm), fmt_f64(report.gradient_std_error))
        } else {
            (String::new(), String::new(), String::new())
        };
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            k,
            event.record.block,
            event.record.batch_size,
            event.record.cumulative_evaluations,
            value_s,
            norm_s,
            se_s
        )
    };

    let trace = zo_core::run_with_observer(
        &solver_config,
        &problem.oracle,
        &problem.feasible,
        &x0,
        &mut observer,
    )
    .with_context(|| format!("replication {replication} (seed {seed})"))?;
    writer.flush()?;

    let mut final_rng = measure_streams.evaluation_rng_at(horizon + 1);
    let final_value = estimate_value(
        &problem.oracle,
        &trace.output_point,
        config.evaluation.value_samples,
        &mut final_rng,
    );

    let last_iterate = trace.iterate(horizon).map(<[f64]>::to_vec).unwrap_or_default();
    Ok(RepOutcome {
        replication,
        seed,
        output_index: trace.output_index,
        output_point: trace.output_point.clone(),
        last_iterate,
        total_evaluations: trace.total_evaluations(),
        final_value,
        residual_norm: trace.residual.norm,
        residual_se: trace.residual.gradient_std_error,
        checkpoints,
        warnings: trace.warnings.clone(),
    })
}

fn write_summary(path: &Path, horizon: usize, reps: &[RepOutcome]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "horizon,rep,seed,R,cum_evals,f_val,residual_norm,residual_sq,residual_se")?;
    for r in reps {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            horizon,
            r.replication,
            r.seed,
            r.output_index,
            r.total_evaluations,
            fmt_f64(r.final_value),
            fmt_f64(r.residual_norm),
            fmt_f64(r.residual_norm * r.residual_norm),
            fmt_f64(r.residual_se)
        )?;
    }
    let col = |f: &dyn Fn(&RepOutcome) -> f64| -> f64 {
        pairwise_mean(&reps.iter().map(f).collect::<Vec<_>>())
    };
    writeln!(
        w,
        "{},mean,,{},{},{},{},{},{}",
        horizon,
        fmt_f64(col(&|r| r.output_index as f64)),
        fmt_f64(col(&|r| r.total_evaluations as f64)),
        fmt_f64(col(&|r| r.final_value)),
        fmt_f64(col(&|r| r.residual_norm)),
        fmt_f64(col(&|r| r.residual_norm * r.residual_norm)),
        fmt_f64(col(&|r| r.residual_se))
    )?;
    w.flush()?;
    Ok(())
}

/// Runs every replication over the configured horizon grid and performs the
/// enabled analyses. Replication failures are recorded without aborting the
/// remaining replications.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let seeds = config.replication_seeds();
    let metadata = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": config.hash(),
        "seeds": seeds,
        "config": config,
    });
    fs::write(out_dir.join("metadata.json"), serde_json::to_string_pretty(&metadata)?)?;

    let horizons: Vec<usize> = config
        .analysis
        .horizons
        .clone()
        .unwrap_or_else(|| vec![config.solver.horizon]);
    let grid = horizons.len() > 1;

    let mut horizon_outcomes = Vec::with_capacity(horizons.len());
    let mut failures: Vec<(usize, u64, String)> = Vec::new();

    for &horizon in &horizons {
        let dir = if grid { out_dir.join(format!("K{horizon:06}")) } else { out_dir.to_path_buf() };
        fs::create_dir_all(&dir)?;

        let results: Vec<Result<RepOutcome>> = std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .enumerate()
                .map(|(rep, &seed)| {
                    let dir = dir.clone();
                    scope.spawn(move || {
                        let problem = make_problem(&config.problem)
                            .map_err(|e| anyhow::anyhow!("building problem: {e}"))?;
                        let trace_path = dir.join(format!("rep{rep:03}_trace.csv"));
                        run_replication(config, &problem, horizon, rep, seed, &trace_path)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| bail!("replication thread panicked")))
                .collect()
        });

        let mut reps = Vec::new();
        for (rep, result) in results.into_iter().enumerate() {
            match result {
                Ok(outcome) => reps.push(outcome),
                Err(err) => failures.push((rep, seeds[rep], format!("{err:#}"))),
            }
        }
        if reps.is_empty() {
            bail!("every replication failed at horizon {horizon}: {failures:?}");
        }
        write_summary(&dir.join("summary.csv"), horizon, &reps)?;
        let mean_squared_residual =
            pairwise_mean(&reps.iter().map(|r| r.residual_norm * r.residual_norm).collect::<Vec<_>>());
        horizon_outcomes.push(HorizonOutcome { horizon, dir, reps, mean_squared_residual });
    }

    if !failures.is_empty() {
        let mut text = String::new();
        for (rep, seed, err) in &failures {
            text.push_str(&format!("rep {rep} seed {seed}: {err}\n"));
        }
        fs::write(out_dir.join("failures.txt"), text)?;
    }

    let rate_fit = if config.analysis.rate_fit {
        let data: Vec<HorizonSamples> = horizon_outcomes
            .iter()
            .map(|h| HorizonSamples {
                horizon: h.horizon,
                squared_residuals: h
                    .reps
                    .iter()
                    .map(|r| r.residual_norm * r.residual_norm)
                    .collect(),
            })
            .collect();
        let fit = fit_rate(&data, config.analysis.bootstrap_resamples, config.base_seed)?;
        fs::write(out_dir.join("ratefit.json"), serde_json::to_string_pretty(&fit)?)?;
        Some(fit)
    } else {
        None
    };

    // complexity and tail analyses read the largest horizon's checkpoints
    let last = horizon_outcomes
        .iter()
        .max_by_key(|h| h.horizon)
        .expect("at least one horizon");

    let complexity = if let Some(targets) = &config.analysis.epsilon_targets {
        let aggregated = aggregate_checkpoints(&last.reps);
        let table = check_sample_complexity(&aggregated, targets)?;
        fs::write(out_dir.join("complexity.json"), serde_json::to_string_pretty(&table)?)?;
        Some(table)
    } else {
        None
    };

    let tail = if config.analysis.as_tail {
        let mut entries = Vec::new();
        for rep in &last.reps {
            let series: Vec<(usize, f64)> =
                rep.checkpoints.iter().map(|c| (c.iteration, c.residual_norm)).collect();
            let report = check_as_tail(&series, last.horizon)?;
            entries.push(TailEntry { replication: rep.replication, seed: rep.seed, report });
        }
        let summary = TailSummary {
            all_pass: entries.iter().all(|e| e.report.pass),
            per_replication: entries,
        };
        fs::write(out_dir.join("tail.json"), serde_json::to_string_pretty(&summary)?)?;
        Some(summary)
    } else {
        None
    };

    Ok(ExperimentOutcome {
        dir: out_dir.to_path_buf(),
        horizons: horizon_outcomes,
        rate_fit,
        complexity,
        tail,
        failures,
    })
}

/// Replication-mean residual norms at the shared checkpoint iterations.
pub fn aggregate_checkpoints(reps: &[RepOutcome]) -> Vec<AggregatedCheckpoint> {
    if reps.is_empty() {
        return Vec::new();
    }
    let count = reps.iter().map(|r| r.checkpoints.len()).min().unwrap_or(0);
    (0..count)
        .map(|i| {
            let iteration = reps[0].checkpoints[i].iteration;
            let norms: Vec<f64> = reps.iter().map(|r| r.checkpoints[i].residual_norm).collect();
            AggregatedCheckpoint {
                iteration,
                cumulative_evaluations: reps[0].checkpoints[i].cumulative_evaluations,
                mean_residual_norm: pairwise_mean(&norms),
            }
        })
        .collect()
}

/// Reads the per-replication squared residuals back out of the summary
/// files under `dir` (top level and one subdirectory deep).
pub fn collect_horizon_samples(dir: &Path) -> Result<Vec<HorizonSamples>> {
    let mut summaries = Vec::new();
    let top = dir.join("summary.csv");
    if top.is_file() {
        summaries.push(top);
    }
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            let nested = path.join("summary.csv");
            if nested.is_file() {
                summaries.push(nested);
            }
        }
    }
    if summaries.is_empty() {
        bail!("no summary.csv found under {}", dir.display());
    }
    summaries.sort();

    let mut by_horizon: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for path in summaries {
        let text = fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .with_context(|| format!("{} is empty", path.display()))?
            .split(',')
            .collect();
        let idx = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| *h == name)
                .with_context(|| format!("{} lacks column {name}", path.display()))
        };
        let (h_idx, rep_idx, sq_idx) = (idx("horizon")?, idx("rep")?, idx("residual_sq")?);
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() <= sq_idx || fields[rep_idx] == "mean" {
                continue;
            }
            let horizon: usize = fields[h_idx].parse()?;
            let sq: f64 = fields[sq_idx].parse()?;
            by_horizon.entry(horizon).or_default().push(sq);
        }
    }
    Ok(by_horizon
        .into_iter()
        .map(|(horizon, squared_residuals)| HorizonSamples { horizon, squared_residuals })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_are_geometric_and_cover_the_ends() {
        let ks = checkpoint_iterations(2000, 1.5);
        assert_eq!(ks[0], 0);
        assert_eq!(*ks.last().unwrap(), 1999);
        assert!(ks.windows(2).all(|w| w[1] > w[0]));
        assert!(ks.len() < 40);
        assert_eq!(checkpoint_iterations(1, 1.5), vec![0]);
        assert_eq!(checkpoint_iterations(2, 1.5), vec![0, 1]);
    }
}
