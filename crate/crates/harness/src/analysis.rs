//! Post-run analyses: log-log rate fitting with a bootstrap confidence
//! interval, first-hit sample-complexity accounting, and the decaying-tail
//! check for the superlinear-batch mode.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use zo_core::util::pairwise_mean;

/// Squared residual norms of all replications at one horizon.
#[derive(Debug, Clone)]
pub struct HorizonSamples {
    pub horizon: usize,
    pub squared_residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub horizons: Vec<usize>,
    pub mean_squared_residual: Vec<f64>,
    /// Least-squares slope of `ln(mean)` against `ln(horizon)`.
    pub slope: f64,
    pub intercept: f64,
    /// Bootstrap 95% interval on the slope.
    pub slope_ci: (f64, f64),
    pub resamples: usize,
    /// Set when the fitted slope shows no decay.
    pub no_decay: bool,
}

fn least_squares_loglog(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits the decay rate of the mean squared residual over a horizon grid.
/// Needs at least 4 distinct horizons and 10 replications each.
pub fn fit_rate(data: &[HorizonSamples], resamples: usize, seed: u64) -> Result<RateFit> {
    let mut sorted: Vec<&HorizonSamples> = data.iter().collect();
    sorted.sort_by_key(|h| h.horizon);
    if sorted.len() < 4 {
        bail!("rate fit needs at least 4 horizons, got {}", sorted.len());
    }
    if sorted.windows(2).any(|w| w[0].horizon == w[1].horizon) {
        bail!("rate fit needs distinct horizons");
    }
    for h in &sorted {
        if h.squared_residuals.len() < 10 {
            bail!(
                "rate fit needs at least 10 replications per horizon, horizon {} has {}",
                h.horizon,
                h.squared_residuals.len()
            );
        }
    }
    let horizons: Vec<usize> = sorted.iter().map(|h| h.horizon).collect();
    let means: Vec<f64> =
        sorted.iter().map(|h| pairwise_mean(&h.squared_residuals)).collect();
    if means.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
        bail!("rate fit needs positive mean squared residuals, got {means:?}");
    }
    let points: Vec<(f64, f64)> = horizons
        .iter()
        .zip(&means)
        .map(|(&k, &m)| ((k as f64).ln(), m.ln()))
        .collect();
    let (slope, intercept) = least_squares_loglog(&points);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut resampled = Vec::with_capacity(sorted.len());
        let mut degenerate = false;
        for h in &sorted {
            let m = h.squared_residuals.len();
            let sum: f64 =
                (0..m).map(|_| h.squared_residuals[rng.random_range(0..m)]).sum();
            let mean = sum / m as f64;
            if !(mean.is_finite() && mean > 0.0) {
                degenerate = true;
                break;
            }
            resampled.push(((h.horizon as f64).ln(), mean.ln()));
        }
        if !degenerate {
            slopes.push(least_squares_loglog(&resampled).0);
        }
    }
    let slope_ci = if slopes.len() >= 40 {
        slopes.sort_by(f64::total_cmp);
        let lo = slopes[(slopes.len() as f64 * 0.025) as usize];
        let hi = slopes[((slopes.len() as f64 * 0.975) as usize).min(slopes.len() - 1)];
        (lo, hi)
    } else {
        (slope, slope)
    };

    Ok(RateFit {
        horizons,
        mean_squared_residual: means,
        slope,
        intercept,
        slope_ci,
        resamples: slopes.len(),
        no_decay: slope > -0.1,
    })
}

/// Replication-mean residual at one checkpoint iteration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AggregatedCheckpoint {
    pub iteration: usize,
    pub cumulative_evaluations: u64,
    pub mean_residual_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityRow {
    pub target: f64,
    pub hit_iteration: Option<usize>,
    pub hit_evaluations: Option<u64>,
    pub censored: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityTable {
    pub rows: Vec<ComplexityRow>,
    /// Log-log slope of first-hit evaluations against the target, over the
    /// uncensored rows (needs at least two).
    pub evaluations_vs_target_slope: Option<f64>,
}

/// First iteration and cumulative evaluation count at which the
/// replication-mean residual reaches each target. Unreached targets are
/// reported censored, not failed.
pub fn check_sample_complexity(
    checkpoints: &[AggregatedCheckpoint],
    targets: &[f64],
) -> Result<ComplexityTable> {
    if checkpoints.is_empty() {
        bail!("sample-complexity accounting needs checkpointed residuals");
    }
    let mut rows = Vec::with_capacity(targets.len());
    for &target in targets {
        let hit = checkpoints.iter().find(|c| c.mean_residual_norm <= target);
        rows.push(ComplexityRow {
            target,
            hit_iteration: hit.map(|c| c.iteration),
            hit_evaluations: hit.map(|c| c.cumulative_evaluations),
            censored: hit.is_none(),
        });
    }
    let fit_points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.hit_evaluations.map(|e| (r.target.ln(), (e.max(1) as f64).ln())))
        .collect();
    let distinct_targets = {
        let mut t: Vec<f64> = fit_points.iter().map(|(x, _)| *x).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t.len()
    };
    let slope = if distinct_targets >= 2 {
        Some(least_squares_loglog(&fit_points).0)
    } else {
        None
    };
    Ok(ComplexityTable { rows, evaluations_vs_target_slope: slope })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub pass: bool,
    /// First checkpoint at or past a third of the horizon.
    pub onethird_iteration: usize,
    /// Running max of residuals from that checkpoint to the end.
    pub reference: f64,
    /// Running max at the final checkpoint (the final residual itself).
    pub final_value: f64,
    pub checkpoints: usize,
}

/// Passes when the suffix running-max of checkpoint residual norms at the
/// final checkpoint is at most half its value at the first checkpoint past
/// a third of the horizon.
pub fn check_as_tail(series: &[(usize, f64)], horizon: usize) -> Result<TailReport> {
    if series.len() < 6 {
        bail!("tail check needs at least 6 checkpoints, got {}", series.len());
    }
    let onethird = series
        .iter()
        .position(|(k, _)| k * 3 >= horizon)
        .unwrap_or(series.len() - 1);
    // suffix running max
    let mut suffix = vec![0.0; series.len()];
    let mut running = f64::NEG_INFINITY;
    for (i, (_, v)) in series.iter().enumerate().rev() {
        running = running.max(*v);
        suffix[i] = running;
    }
    let reference = suffix[onethird];
    let final_value = suffix[series.len() - 1];
    Ok(TailReport {
        pass: final_value <= 0.5 * reference,
        onethird_iteration: series[onethird].0,
        reference,
        final_value,
        checkpoints: series.len(),
    })
}
