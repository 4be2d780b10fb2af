//! Laws of the spherical smoothing: closed forms against quadrature oracles,
//! Monte Carlo estimates against both, and the Lipschitz-type bounds of the
//! smoothed objective and its gradient.

mod common;

use common::*;
use rand::Rng;
use zo_core::{
    make_problem, sample_sphere, smoothed_gradient_reference, smoothed_value_estimate,
    zo_gradient_sample, NoiseSpec, ProblemSpec, RngStreams, StochasticOracle,
};

fn abs1d() -> zo_core::TestProblem {
    make_problem(&ProblemSpec::Abs1d { eta0: 0.5, noise: NoiseSpec::None }).unwrap()
}

fn quad(dim: usize, eta0: f64) -> zo_core::TestProblem {
    make_problem(&ProblemSpec::Quad {
        dim,
        blocks: None,
        box_radius: 1.0,
        eta0,
        noise: NoiseSpec::None,
        sets: None,
    })
    .unwrap()
}

#[test]
fn abs1d_closed_form_matches_quadrature_everywhere() {
    for &eta in &[0.05, 0.2, 0.5] {
        let p = abs1d();
        for i in 0..200 {
            let x = -1.2 + i as f64 * 0.012;
            let analytic = p.oracle.analytic_smoothed_value(&[x], eta).unwrap();
            let quadrature = abs1d_smoothed_by_quadrature(x, eta);
            assert!(
                (analytic - quadrature).abs() < 1e-10,
                "x={x} eta={eta}: {analytic} vs {quadrature}"
            );
        }
    }
}

#[test]
fn ball_second_moment_quadrature_confirms_closed_form() {
    for n in 1..=8 {
        let expect = n as f64 / (n as f64 + 2.0);
        assert!((ball_second_moment_by_quadrature(n) - expect).abs() < 1e-10);
    }
    assert!((sphere3_coordinate_second_moment_by_quadrature() - 1.0 / 3.0).abs() < 1e-10);
}

#[test]
fn monte_carlo_smoothed_value_abs1d_at_kink() {
    // E |eta * u| = eta / 2 for u uniform on [-1, 1]: 0.1 at eta = 0.2.
    let p = abs1d();
    let hidden = HideAnalytics(&p.oracle);
    let mut streams = RngStreams::new(31);
    let est = smoothed_value_estimate(&hidden, &[0.0], 0.2, 40_000, streams.evaluation()).unwrap();
    let expect = abs1d_smoothed_by_quadrature(0.0, 0.2);
    assert!((expect - 0.1).abs() < 1e-12);
    assert!((est.mean - expect).abs() <= 3.0 * est.std_error.max(1e-6));
}

#[test]
fn monte_carlo_smoothed_value_quad_ball_moment() {
    // 0.5 * eta^2 * E |u|^2 = n / (2 (n + 2)) = 0.3 at n = 3, eta = 1.
    let p = quad(3, 1.0);
    let hidden = HideAnalytics(&p.oracle);
    let mut streams = RngStreams::new(32);
    let est =
        smoothed_value_estimate(&hidden, &[0.0, 0.0, 0.0], 1.0, 60_000, streams.evaluation())
            .unwrap();
    let expect = 0.5 * ball_second_moment_by_quadrature(3);
    assert!((expect - 0.3).abs() < 1e-10);
    assert!((est.mean - expect).abs() <= 3.0 * est.std_error);
}

#[test]
#[allow(clippy::needless_range_loop)]
fn monte_carlo_agrees_with_analytic_at_100_points() {
    // Value and gradient agreement within 4 standard errors at 100 random
    // feasible points, on both problems with closed forms.
    let problems = [(abs1d(), 0.2), (quad(3, 0.5), 0.25)];
    let mut streams = RngStreams::new(33);
    for (p, eta) in &problems {
        let n = p.dim();
        let hidden = HideAnalytics(&p.oracle);
        for _ in 0..100 {
            let raw: Vec<f64> =
                (0..n).map(|_| streams.evaluation().random_range(-1.5..1.5)).collect();
            let x = p.feasible.project(&raw).unwrap();
            let analytic_v = p.oracle.analytic_smoothed_value(&x, *eta).unwrap();
            let est =
                smoothed_value_estimate(&hidden, &x, *eta, 4000, streams.evaluation()).unwrap();
            assert!(
                (est.mean - analytic_v).abs() <= 4.0 * est.std_error + 1e-9,
                "value mismatch at {x:?}: {} vs {analytic_v} (se {})",
                est.mean,
                est.std_error
            );

            let analytic_g = p.oracle.analytic_smoothed_gradient(&x, *eta).unwrap();
            let reference =
                smoothed_gradient_reference(&hidden, &x, *eta, 4000, streams.evaluation())
                    .unwrap();
            for i in 0..n {
                assert!(
                    (reference.gradient[i] - analytic_g[i]).abs()
                        <= 4.0 * reference.std_error[i] + 1e-9,
                    "gradient coord {i} at {x:?}: {} vs {}",
                    reference.gradient[i],
                    analytic_g[i]
                );
            }
        }
    }
}

#[test]
fn reference_gradient_uses_analytic_form_exactly() {
    let p = quad(2, 0.5);
    let mut streams = RngStreams::new(34);
    let x = [0.7, -0.3];
    let reference =
        smoothed_gradient_reference(&p.oracle, &x, 0.2, 10, streams.evaluation()).unwrap();
    assert!(reference.analytic);
    assert_eq!(reference.gradient, vec![0.7, -0.3]);
    assert_eq!(reference.std_error_norm(), 0.0);
}

#[test]
fn reference_gradient_monte_carlo_matches_quadrature_derivative() {
    let p = abs1d();
    let hidden = HideAnalytics(&p.oracle);
    let mut streams = RngStreams::new(35);
    for &(x, expect_near) in &[(0.05, 0.25), (1.0, 1.0)] {
        let eta = 0.2;
        let quadrature = abs1d_smoothed_gradient_by_quadrature(x, eta);
        assert!((quadrature - expect_near).abs() < 1e-4);
        let reference =
            smoothed_gradient_reference(&hidden, &[x], eta, 60_000, streams.evaluation())
                .unwrap();
        // absolute floor covers the finite-difference oracle's own error
        assert!(
            (reference.gradient[0] - quadrature).abs() <= 3.0 * reference.std_error[0] + 1e-8,
            "x={x}: {} vs {quadrature} (se {})",
            reference.gradient[0],
            reference.std_error[0]
        );
    }
}

#[test]
fn smoothed_value_gap_bound_holds_at_100_points() {
    // |f_eta - f| <= L0 * eta, analytically for the closed forms and with
    // Monte Carlo slack for a problem without one.
    let mut streams = RngStreams::new(36);
    for (p, eta) in [(abs1d(), 0.3), (quad(4, 0.5), 0.25)] {
        let l0 = p.oracle.constants().lipschitz;
        for _ in 0..100 {
            let raw: Vec<f64> =
                (0..p.dim()).map(|_| streams.evaluation().random_range(-1.0..1.0)).collect();
            let x = p.feasible.project(&raw).unwrap();
            let gap = (p.oracle.analytic_smoothed_value(&x, eta).unwrap()
                - p.oracle.true_value(&x).unwrap())
            .abs();
            assert!(gap <= l0 * eta + 1e-12);
        }
    }

    let maxlin = make_problem(&ProblemSpec::Maxlin {
        dim: 3,
        blocks: None,
        box_radius: 1.0,
        pieces: 4,
        mix: 0.5,
        gen_seed: 7,
        eta0: 0.5,
        noise: NoiseSpec::None,
    })
    .unwrap();
    let eta = 0.3;
    let l0 = maxlin.oracle.constants().lipschitz;
    for _ in 0..100 {
        let raw: Vec<f64> =
            (0..3).map(|_| streams.evaluation().random_range(-1.0..1.0)).collect();
        let x = maxlin.feasible.project(&raw).unwrap();
        let est =
            smoothed_value_estimate(&maxlin.oracle, &x, eta, 2000, streams.evaluation()).unwrap();
        let gap = (est.mean - maxlin.oracle.true_value(&x).unwrap()).abs();
        assert!(gap <= l0 * eta + 4.0 * est.std_error, "gap {gap} vs bound {}", l0 * eta);
    }
}

#[test]
fn smoothed_value_is_lipschitz_on_sampled_pairs() {
    // |f_eta(x) - f_eta(y)| <= L0 |x - y|, exact via closed forms.
    let mut streams = RngStreams::new(37);
    for (p, eta) in [(abs1d(), 0.2), (quad(3, 0.5), 0.3)] {
        let l0 = p.oracle.constants().lipschitz;
        for _ in 0..500 {
            let draw = |s: &mut RngStreams| -> Vec<f64> {
                let raw: Vec<f64> =
                    (0..p.dim()).map(|_| s.evaluation().random_range(-1.0..1.0)).collect();
                p.feasible.project(&raw).unwrap()
            };
            let x = draw(&mut streams);
            let y = draw(&mut streams);
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let gap = (p.oracle.analytic_smoothed_value(&x, eta).unwrap()
                - p.oracle.analytic_smoothed_value(&y, eta).unwrap())
            .abs();
            assert!(gap <= l0 * dist + 1e-12);
        }
    }
}

#[test]
fn smoothed_gradient_is_lipschitz_with_declared_modulus() {
    // |grad f_eta(x) - grad f_eta(y)| <= (n L0 / eta) |x - y|, exact via
    // closed forms on both analytic problems.
    let mut streams = RngStreams::new(38);
    for (p, eta) in [(abs1d(), 0.2), (quad(3, 0.5), 0.3)] {
        let n = p.dim() as f64;
        let modulus = n * p.oracle.constants().lipschitz / eta;
        for _ in 0..500 {
            let draw = |s: &mut RngStreams| -> Vec<f64> {
                let raw: Vec<f64> =
                    (0..p.dim()).map(|_| s.evaluation().random_range(-1.0..1.0)).collect();
                p.feasible.project(&raw).unwrap()
            };
            let x = draw(&mut streams);
            let y = draw(&mut streams);
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let gx = p.oracle.analytic_smoothed_gradient(&x, eta).unwrap();
            let gy = p.oracle.analytic_smoothed_gradient(&y, eta).unwrap();
            let gap = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(gap <= modulus * dist + 1e-12);
        }
    }
}

#[test]
fn two_point_sample_mean_recovers_smoothed_gradient() {
    // Quadratic in n = 2 at x = (1, 0): the smoothed gradient is x itself;
    // the empirical mean of 1e5 two-point samples lands within 3 SE.
    let p = quad(2, 0.5);
    let mut streams = RngStreams::new(39);
    let x = [1.0, 0.0];
    let eta = 0.1;
    let draws = 100_000;
    let mut sum = [0.0f64; 2];
    let mut sumsq = [0.0f64; 2];
    for _ in 0..draws {
        let v = sample_sphere(streams.direction(), 2, eta).unwrap();
        let g = zo_gradient_sample(&p.oracle, &x, &v, eta, 0).unwrap();
        for i in 0..2 {
            sum[i] += g.values[i];
            sumsq[i] += g.values[i] * g.values[i];
        }
    }
    for i in 0..2 {
        let mean = sum[i] / draws as f64;
        let var = (sumsq[i] / draws as f64 - mean * mean).max(0.0);
        let se = (var / draws as f64).sqrt();
        assert!((mean - x[i]).abs() <= 3.0 * se, "coord {i}: {mean} vs {} (se {se})", x[i]);
    }
}

#[test]
fn noiseless_samples_respect_the_surely_bound() {
    // |g|^2 <= L0^2 n^2 holds per sample for a noiseless Lipschitz oracle.
    let p = quad(4, 0.5);
    let l0 = p.oracle.constants().lipschitz;
    let n = 4.0f64;
    let bound = l0 * l0 * n * n;
    let mut streams = RngStreams::new(40);
    let x = [0.3, -0.2, 0.5, 0.1];
    let eta = 0.1;
    let mut max_sq = 0.0f64;
    for _ in 0..100_000 {
        let v = sample_sphere(streams.direction(), 4, eta).unwrap();
        let g = zo_gradient_sample(&p.oracle, &x, &v, eta, 0).unwrap();
        max_sq = max_sq.max(g.values.iter().map(|v| v * v).sum());
    }
    assert!(max_sq <= bound * (1.0 + 1e-12), "max |g|^2 = {max_sq} vs bound {bound}");
}
