use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use zo_harness::{
    collect_horizon_samples, fit_rate, run_decompose, run_experiment, run_verify,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "zo-harness",
    version,
    about = "Experiment runner for randomized-block zeroth-order optimization with spherical smoothing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's replication count (drops any seed list).
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Fit the residual decay rate over a directory of finished runs.
    Rate {
        #[arg(long)]
        dir: PathBuf,
        /// Bootstrap resample count.
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        /// Seed for the bootstrap.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the verification suites for the configured problem.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decompose the gradient error at probe iterations of a seeded run.
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated probe iterations (checkpoints by default).
        #[arg(long)]
        iterations: Option<String>,
    },
}

fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<&PathBuf>,
    replications: Option<usize>,
) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = seed {
        config.base_seed = seed;
        config.seeds = None;
    }
    if let Some(out) = out {
        config.output_dir = out.display().to_string();
    }
    if let Some(replications) = replications {
        config.replications = replications;
        config.seeds = None;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(
    config_path: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    replications: Option<usize>,
) -> Result<bool> {
    let config = load_config(&config_path, seed, out.as_ref(), replications)?;
    let out_dir = PathBuf::from(&config.output_dir);
    let outcome = run_experiment(&config, &out_dir)?;
    println!("experiment written to {}", outcome.dir.display());
    for horizon in &outcome.horizons {
        println!(
            "  K={:<7} replications={:<3} mean squared residual {:.6e}",
            horizon.horizon,
            horizon.reps.len(),
            horizon.mean_squared_residual
        );
        for rep in &horizon.reps {
            for warning in &rep.warnings {
                eprintln!("  warning (rep {}, seed {}): {warning}", rep.replication, rep.seed);
            }
        }
    }
    for (rep, seed, err) in &outcome.failures {
        eprintln!("  FAILED rep {rep} (seed {seed}): {err}");
    }
    if let Some(fit) = &outcome.rate_fit {
        println!(
            "rate fit: slope {:.4} (95% CI [{:.4}, {:.4}]){}",
            fit.slope,
            fit.slope_ci.0,
            fit.slope_ci.1,
            if fit.no_decay { " -- no decay" } else { "" }
        );
    }
    if let Some(table) = &outcome.complexity {
        for row in &table.rows {
            match (row.hit_iteration, row.hit_evaluations) {
                (Some(k), Some(evals)) => println!(
                    "complexity: target {:.4e} first hit at k={k} after {evals} evaluations",
                    row.target
                ),
                _ => println!("complexity: target {:.4e} censored (never reached)", row.target),
            }
        }
        if let Some(slope) = table.evaluations_vs_target_slope {
            println!("complexity: evaluations scale as target^{slope:.2}");
        }
    }
    if let Some(tail) = &outcome.tail {
        println!(
            "tail check: {} ({}/{} replications pass)",
            if tail.all_pass { "PASS" } else { "FAIL" },
            tail.per_replication.iter().filter(|e| e.report.pass).count(),
            tail.per_replication.len()
        );
    }
    Ok(outcome.failures.is_empty() && outcome.tail.as_ref().is_none_or(|t| t.all_pass))
}

fn cmd_rate(dir: PathBuf, resamples: usize, seed: u64) -> Result<bool> {
    let samples = collect_horizon_samples(&dir)?;
    let fit = fit_rate(&samples, resamples, seed)?;
    println!("horizons: {:?}", fit.horizons);
    println!("mean squared residuals: {:?}", fit.mean_squared_residual);
    println!(
        "slope {:.4} intercept {:.4} (95% CI [{:.4}, {:.4}], {} resamples)",
        fit.slope, fit.intercept, fit.slope_ci.0, fit.slope_ci.1, fit.resamples
    );
    if fit.no_decay {
        println!("no decay detected");
    }
    std::fs::write(dir.join("ratefit.json"), serde_json::to_string_pretty(&fit)?)
        .with_context(|| format!("writing {}", dir.join("ratefit.json").display()))?;
    Ok(!fit.no_decay)
}

fn cmd_verify(config_path: PathBuf, seed: Option<u64>) -> Result<bool> {
    let config = load_config(&config_path, seed, None, None)?;
    let report = run_verify(&config)?;
    for line in &report.lines {
        println!("{} {} -- {}", if line.pass { "PASS" } else { "FAIL" }, line.name, line.detail);
    }
    Ok(report.all_pass())
}

fn cmd_decompose(
    config_path: PathBuf,
    seed: Option<u64>,
    iterations: Option<String>,
) -> Result<bool> {
    let config = load_config(&config_path, seed, None, None)?;
    let probes = match iterations {
        Some(text) => Some(
            text.split(',')
                .map(|s| s.trim().parse::<usize>().context("parsing --iterations"))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let report = run_decompose(&config, probes)?;
    println!(
        "{:>6} {:>5} {:>8} {:>12} {:>12} {:>12} {:>12}",
        "k", "block", "batch", "|noise|^2", "|direction|^2", "|block|^2", "sum_dev"
    );
    for row in &report.rows {
        println!(
            "{:>6} {:>5} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            row.iteration,
            row.block,
            row.batch_size,
            row.noise_sq,
            row.direction_sq,
            row.block_sq,
            row.sum_deviation
        );
    }
    println!("bounds are on expected squared norms; single probes may exceed them");
    println!("max reconstruction deviation {:.3e}", report.max_sum_deviation);
    Ok(report.max_sum_deviation <= 1e-9)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out, replications } => cmd_run(config, seed, out, replications),
        Command::Rate { dir, resamples, seed } => cmd_rate(dir, resamples, seed),
        Command::Verify { config, seed } => cmd_verify(config, seed),
        Command::Decompose { config, seed, iterations } => cmd_decompose(config, seed, iterations),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
