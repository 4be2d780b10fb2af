//! Stationarity measurement for the smoothed constrained problem.
//!
//! The residual map at a point `x` with gradient `g` and scale `beta > 0` is
//! `beta * (x - P[x - g / beta])` where `P` projects onto the feasible
//! product set. It vanishes exactly at stationary points of the smoothed
//! problem; a small residual of the `eta`-smoothed problem certifies an
//! approximate Clarke-stationary point of the original problem at radius
//! `2 * eta`.

use thiserror::Error;

use crate::geometry::{FeasibleSet, GeometryError};
use crate::oracle::ReferenceGradient;
use crate::util::norm2;

#[derive(Debug, Error)]
pub enum ResidualError {
    #[error("residual scale beta must be positive, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `beta * (x - P[x - gradient / beta])`.
pub fn projection_residual(
    set: &FeasibleSet,
    x: &[f64],
    gradient: &[f64],
    beta: f64,
) -> Result<Vec<f64>, ResidualError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(ResidualError::BadScale(beta));
    }
    set.structure().check_dim(x)?;
    set.structure().check_dim(gradient)?;
    let mut stepped: Vec<f64> =
        x.iter().zip(gradient).map(|(xi, gi)| xi - gi / beta).collect();
    set.project_in_place(&mut stepped)?;
    Ok(x.iter().zip(&stepped).map(|(xi, pi)| beta * (xi - pi)).collect())
}

/// The same map with a perturbed gradient `gradient + error`.
pub fn perturbed_residual(
    set: &FeasibleSet,
    x: &[f64],
    gradient: &[f64],
    error: &[f64],
    beta: f64,
) -> Result<Vec<f64>, ResidualError> {
    set.structure().check_dim(error)?;
    let perturbed: Vec<f64> = gradient.iter().zip(error).map(|(g, e)| g + e).collect();
    projection_residual(set, x, &perturbed, beta)
}

/// Both sides of the perturbation bound
/// `|G|^2 <= 2 |G~|^2 + 2 |error|^2`, with the verdict at a small absolute
/// tolerance for floating error. Holds for every valid input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBound {
    pub exact_sq: f64,
    pub perturbed_sq: f64,
    pub error_sq: f64,
    pub holds: bool,
}

pub fn check_perturbation_bound(
    set: &FeasibleSet,
    x: &[f64],
    gradient: &[f64],
    error: &[f64],
    beta: f64,
) -> Result<PerturbationBound, ResidualError> {
    let exact = projection_residual(set, x, gradient, beta)?;
    let perturbed = perturbed_residual(set, x, gradient, error, beta)?;
    let exact_sq = exact.iter().map(|v| v * v).sum::<f64>();
    let perturbed_sq = perturbed.iter().map(|v| v * v).sum::<f64>();
    let error_sq = error.iter().map(|v| v * v).sum::<f64>();
    Ok(PerturbationBound {
        exact_sq,
        perturbed_sq,
        error_sq,
        holds: exact_sq <= 2.0 * perturbed_sq + 2.0 * error_sq + 1e-9,
    })
}

/// A measured residual with the provenance of its gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub residual: Vec<f64>,
    pub norm: f64,
    pub smoothing_radius: f64,
    pub beta: f64,
    /// Norm of the per-coordinate standard errors of the gradient estimate;
    /// zero when the gradient was analytic.
    pub gradient_std_error: f64,
    /// Two-point samples spent on the gradient estimate (0 when analytic).
    pub gradient_samples: usize,
    pub analytic_gradient: bool,
}

impl ResidualReport {
    /// Builds a report from an evaluation-grade gradient estimate.
    pub fn compute(
        set: &FeasibleSet,
        x: &[f64],
        eta: f64,
        beta: f64,
        reference: &ReferenceGradient,
    ) -> Result<Self, ResidualError> {
        let residual = projection_residual(set, x, &reference.gradient, beta)?;
        let norm = norm2(&residual);
        Ok(Self {
            residual,
            norm,
            smoothing_radius: eta,
            beta,
            gradient_std_error: reference.std_error_norm(),
            gradient_samples: reference.samples,
            analytic_gradient: reference.analytic,
        })
    }

    /// Whether the measured norm certifies the target.
    pub fn certifies(&self, epsilon: f64) -> bool {
        self.norm <= epsilon
    }

    /// Human-readable certificate. Stated for the smoothed problem; the
    /// original-problem claim is deliberately approximate.
    pub fn certificate(&self, epsilon: f64) -> String {
        if self.certifies(epsilon) {
            format!(
                "residual norm {:.6e} <= {:.6e}: {:.0e}-stationary for the {}-smoothed problem, \
                 hence approximate {}-Clarke stationary",
                self.norm,
                epsilon,
                epsilon,
                self.smoothing_radius,
                2.0 * self.smoothing_radius
            )
        } else {
            format!(
                "residual norm {:.6e} > {:.6e}: not certified at this target",
                self.norm, epsilon
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BlockSet, FeasibleSet};
    use rand::{Rng, SeedableRng};

    fn free(dims: &[usize]) -> FeasibleSet {
        FeasibleSet::all_free(dims).unwrap()
    }

    #[test]
    fn free_set_residual_equals_gradient() {
        let set = free(&[2, 1]);
        let x = [0.3, -0.8, 2.0];
        let g = [1.0, -2.0, 0.5];
        let r = projection_residual(&set, &x, &g, 4.0).unwrap();
        for (ri, gi) in r.iter().zip(&g) {
            assert!((ri - gi).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_has_zero_residual() {
        // Box corner with an outward-pointing gradient is a fixed point of
        // the projected step.
        let set = FeasibleSet::new(vec![BlockSet::Box {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        }])
        .unwrap();
        let x = [0.0, 0.0];
        let g = [3.0, 5.0];
        let r = projection_residual(&set, &x, &g, 2.0).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn nonzero_residual_detects_non_stationarity() {
        let set = FeasibleSet::new(vec![BlockSet::Box {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
        }])
        .unwrap();
        let x = [0.5, 0.0];
        let g = [0.5, 0.0];
        let r = projection_residual(&set, &x, &g, 2.0).unwrap();
        // interior point: residual equals the gradient
        assert!((r[0] - 0.5).abs() < 1e-12 && r[1].abs() < 1e-12);
    }

    #[test]
    fn perturbed_residual_with_zero_error_matches() {
        let set = FeasibleSet::new(vec![BlockSet::Ball { center: vec![0.0, 0.0], radius: 1.0 }])
            .unwrap();
        let x = [0.5, 0.5];
        let g = [1.0, -1.0];
        let a = projection_residual(&set, &x, &g, 3.0).unwrap();
        let b = perturbed_residual(&set, &x, &g, &[0.0, 0.0], 3.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturbation_bound_holds_adversarially() {
        // error = -gradient makes the perturbed residual vanish on free
        // sets; the error term must carry the bound.
        let set = free(&[2]);
        let x = [0.2, -0.4];
        let g = [1.5, 2.5];
        let e = [-1.5, -2.5];
        let check = check_perturbation_bound(&set, &x, &g, &e, 1.0).unwrap();
        assert!(check.holds);
        assert!(check.perturbed_sq.abs() < 1e-20);
    }

    #[test]
    fn perturbation_bound_randomized_sweep() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for trial in 0..10_000 {
            let set = match trial % 4 {
                0 => free(&[3]),
                1 => FeasibleSet::new(vec![BlockSet::Box {
                    lower: vec![-1.0, -0.5, 0.0],
                    upper: vec![1.0, 0.5, 2.0],
                }])
                .unwrap(),
                2 => FeasibleSet::new(vec![
                    BlockSet::Ball { center: vec![0.0, 0.0], radius: 1.0 },
                    BlockSet::Simplex { dim: 1, radius: 1.0 },
                ])
                .unwrap(),
                _ => FeasibleSet::new(vec![
                    BlockSet::Halfspace { normal: vec![1.0, 2.0], offset: 0.5 },
                    BlockSet::Free { dim: 1 },
                ])
                .unwrap(),
            };
            let n = set.structure().dim();
            let draw = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
            };
            let x = set.project(&draw(&mut rng)).unwrap();
            let g = draw(&mut rng);
            let e = draw(&mut rng);
            let beta = rng.random_range(0.05..20.0);
            let check = check_perturbation_bound(&set, &x, &g, &e, beta).unwrap();
            assert!(
                check.holds,
                "bound violated: trial={trial} lhs={} rhs={}",
                check.exact_sq,
                2.0 * check.perturbed_sq + 2.0 * check.error_sq
            );
        }
    }

    #[test]
    fn scale_must_be_positive() {
        let set = free(&[1]);
        assert!(matches!(
            projection_residual(&set, &[0.0], &[1.0], 0.0),
            Err(ResidualError::BadScale(_))
        ));
        assert!(matches!(
            projection_residual(&set, &[0.0], &[1.0], -2.0),
            Err(ResidualError::BadScale(_))
        ));
    }

    #[test]
    fn report_certificate_text() {
        let set = free(&[2]);
        let reference = ReferenceGradient {
            gradient: vec![3e-4, 4e-4],
            std_error: vec![0.0, 0.0],
            samples: 0,
            analytic: true,
        };
        let report = ResidualReport::compute(&set, &[0.0, 0.0], 0.1, 10.0, &reference).unwrap();
        assert!((report.norm - 5e-4).abs() < 1e-12);
        assert!(report.certifies(1e-3));
        assert!(report.certificate(1e-3).contains("0.2-Clarke"));
        assert!(!report.certifies(1e-4));
        assert!(report.certificate(1e-4).contains("not certified"));
    }
}
