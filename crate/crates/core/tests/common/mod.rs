//! Shared helpers for the integration suites: independent numerical oracles
//! and an analytics-hiding oracle wrapper.
#![allow(dead_code)] // each test binary uses a different subset

use zo_core::{OracleConstants, StochasticOracle};

/// Composite Simpson quadrature on a smooth integrand.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) & !1; // even
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Ball average of `|x + t|` in one dimension, by exact piecewise
/// integration (Simpson is exact on each linear piece).
pub fn abs1d_smoothed_by_quadrature(x: f64, eta: f64) -> f64 {
    let f = |t: f64| (x + t).abs();
    let kink = -x;
    let integral = if kink > -eta && kink < eta {
        simpson(f, -eta, kink, 64) + simpson(f, kink, eta, 64)
    } else {
        simpson(f, -eta, eta, 64)
    };
    integral / (2.0 * eta)
}

/// Central finite difference of the quadrature smoothed value.
pub fn abs1d_smoothed_gradient_by_quadrature(x: f64, eta: f64) -> f64 {
    let h = 1e-6;
    (abs1d_smoothed_by_quadrature(x + h, eta) - abs1d_smoothed_by_quadrature(x - h, eta))
        / (2.0 * h)
}

/// `E |u|^2` for `u` uniform in the unit ball of dimension `n`, by radial
/// quadrature of the density `n r^(n-1)`.
pub fn ball_second_moment_by_quadrature(n: usize) -> f64 {
    simpson(|r| n as f64 * r.powi(n as i32 + 1), 0.0, 1.0, 4096)
}

/// Second moment of one coordinate of the uniform sphere in dimension 3, by
/// quadrature of the polar representation.
pub fn sphere3_coordinate_second_moment_by_quadrature() -> f64 {
    0.5 * simpson(|theta| theta.cos().powi(2) * theta.sin(), 0.0, std::f64::consts::PI, 4096)
}

/// Wrapper that hides all closed forms, forcing the Monte Carlo paths.
pub struct HideAnalytics<'a>(pub &'a dyn StochasticOracle);

impl StochasticOracle for HideAnalytics<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn evaluate(&self, x: &[f64], omega: u64) -> f64 {
        self.0.evaluate(x, omega)
    }
    fn constants(&self) -> OracleConstants {
        self.0.constants()
    }
    fn true_value(&self, x: &[f64]) -> Option<f64> {
        self.0.true_value(x)
    }
}
