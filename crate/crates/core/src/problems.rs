//! Stochastic test problems with declared constants and, where derivable,
//! closed-form smoothed values and gradients.
//!
//! Every corpus member declares a Lipschitz modulus, a noise second-moment
//! bound, a smoothing-radius limit, and an upper bound on `sup |f|`, all
//! taken over the feasible set inflated by the smoothing limit, so the
//! declared constants remain honest everywhere an estimator may evaluate.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BlockSet, FeasibleSet, GeometryError};
use crate::oracle::{OracleConstants, StochasticOracle};
use crate::util::{dot, norm2};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("block sizes {blocks:?} do not sum to dimension {dim}")]
    BlockMismatch { blocks: Vec<usize>, dim: usize },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The deterministic part of a test objective.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseFunction {
    /// `|x|` in one dimension.
    Abs1d,
    /// `0.5 * |x|^2`.
    Quad { dim: usize },
    /// `|x|_1 - alpha * |x|^2 + shift`: nonsmooth and nonconvex.
    L1RegNc { dim: usize, alpha: f64, shift: f64 },
    /// `max_j (a_j . x + b_j) - mix * max_j (c_j . x + d_j)`:
    /// piecewise-linear nonconvex.
    MaxLin {
        positive: Vec<(Vec<f64>, f64)>,
        negative: Vec<(Vec<f64>, f64)>,
        mix: f64,
    },
}

impl BaseFunction {
    pub fn dim(&self) -> usize {
        match self {
            BaseFunction::Abs1d => 1,
            BaseFunction::Quad { dim } | BaseFunction::L1RegNc { dim, .. } => *dim,
            BaseFunction::MaxLin { positive, .. } => positive[0].0.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            BaseFunction::Abs1d => x[0].abs(),
            BaseFunction::Quad { .. } => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            BaseFunction::L1RegNc { alpha, shift, .. } => {
                let l1: f64 = x.iter().map(|v| v.abs()).sum();
                let sq: f64 = x.iter().map(|v| v * v).sum();
                l1 - alpha * sq + shift
            }
            BaseFunction::MaxLin { positive, negative, mix } => {
                let max_of = |pieces: &[(Vec<f64>, f64)]| {
                    pieces
                        .iter()
                        .map(|(a, b)| dot(a, x) + b)
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                max_of(positive) - mix * max_of(negative)
            }
        }
    }

    /// Closed-form smoothed value, where derivable.
    ///
    /// For `|x|` in 1-d the ball average is `x^2/(2 eta) + eta/2` inside the
    /// kink region and `|x|` outside; for the quadratic it is the value plus
    /// `eta^2 * n / (2 (n + 2))`.
    pub fn smoothed_value(&self, x: &[f64], eta: f64) -> Option<f64> {
        match self {
            BaseFunction::Abs1d => {
                let t = x[0];
                Some(if t.abs() >= eta { t.abs() } else { t * t / (2.0 * eta) + eta / 2.0 })
            }
            BaseFunction::Quad { dim } => {
                let n = *dim as f64;
                Some(self.value(x) + eta * eta * n / (2.0 * (n + 2.0)))
            }
            _ => None,
        }
    }

    pub fn smoothed_gradient(&self, x: &[f64], eta: f64) -> Option<Vec<f64>> {
        match self {
            BaseFunction::Abs1d => {
                let t = x[0];
                Some(vec![if t.abs() >= eta { t.signum() } else { t / eta }])
            }
            BaseFunction::Quad { .. } => Some(x.to_vec()),
            _ => None,
        }
    }
}

/// Zero-mean noise models. The draw is a pure function of `(x, omega)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    None,
    /// `z` uniform on `[-half_width, half_width]`, independent of `x`.
    AdditiveUniform { half_width: f64 },
    /// `z` Gaussian with the given standard deviation, independent of `x`.
    AdditiveGaussian { std_dev: f64 },
    /// `z * (direction . x + offset)` with bounded uniform `z`: the noise
    /// magnitude depends on the point, so it does not cancel between the two
    /// evaluations of a common-random-number pair.
    Affine { direction: Vec<f64>, offset: f64, half_width: f64 },
}

impl NoiseModel {
    fn draw_z(omega: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(omega)
    }

    pub fn sample(&self, x: &[f64], omega: u64) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::AdditiveUniform { half_width } => {
                let u: f64 = Self::draw_z(omega).random();
                (2.0 * u - 1.0) * half_width
            }
            NoiseModel::AdditiveGaussian { std_dev } => {
                let g: f64 = Self::draw_z(omega).sample(StandardNormal);
                g * std_dev
            }
            NoiseModel::Affine { direction, offset, half_width } => {
                let u: f64 = Self::draw_z(omega).random();
                (2.0 * u - 1.0) * half_width * (dot(direction, x) + offset)
            }
        }
    }

    /// Gradient (in `x`) of the smoothed noise at fixed `omega`, when it has
    /// a closed form. Additive noise is constant in `x`; the affine model
    /// smooths to itself.
    fn smoothed_gradient_shift(&self, omega: u64, dim: usize) -> Option<Vec<f64>> {
        match self {
            NoiseModel::None
            | NoiseModel::AdditiveUniform { .. }
            | NoiseModel::AdditiveGaussian { .. } => Some(vec![0.0; dim]),
            NoiseModel::Affine { direction, half_width, .. } => {
                let u: f64 = Self::draw_z(omega).random();
                let z = (2.0 * u - 1.0) * half_width;
                Some(direction.iter().map(|a| a * z).collect())
            }
        }
    }

    /// Worst-case Lipschitz modulus the noise adds to a single realization.
    fn lipschitz_bump(&self) -> f64 {
        match self {
            NoiseModel::Affine { direction, half_width, .. } => half_width * norm2(direction),
            _ => 0.0,
        }
    }
}

/// An oracle assembled from a base function and a noise model.
#[derive(Debug, Clone)]
pub struct ProblemOracle {
    base: BaseFunction,
    noise: NoiseModel,
    constants: OracleConstants,
}

impl ProblemOracle {
    pub fn base(&self) -> &BaseFunction {
        &self.base
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
}

impl StochasticOracle for ProblemOracle {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn evaluate(&self, x: &[f64], omega: u64) -> f64 {
        self.base.value(x) + self.noise.sample(x, omega)
    }

    fn constants(&self) -> OracleConstants {
        self.constants
    }

    fn true_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.base.value(x))
    }

    fn analytic_smoothed_value(&self, x: &[f64], eta: f64) -> Option<f64> {
        self.base.smoothed_value(x, eta)
    }

    fn analytic_smoothed_gradient(&self, x: &[f64], eta: f64) -> Option<Vec<f64>> {
        self.base.smoothed_gradient(x, eta)
    }

    fn noisy_smoothed_gradient(&self, x: &[f64], eta: f64, omega: u64) -> Option<Vec<f64>> {
        let mut g = self.base.smoothed_gradient(x, eta)?;
        let shift = self.noise.smoothed_gradient_shift(omega, self.dim())?;
        for (gi, si) in g.iter_mut().zip(&shift) {
            *gi += si;
        }
        Some(g)
    }
}

/// A named problem: feasible set, oracle, and any known stationary points.
#[derive(Debug, Clone)]
pub struct TestProblem {
    pub name: String,
    pub feasible: FeasibleSet,
    pub oracle: ProblemOracle,
    /// Analytically known stationary points, when the set is fully known.
    pub stationary_points: Vec<Vec<f64>>,
}

impl TestProblem {
    pub fn dim(&self) -> usize {
        self.feasible.structure().dim()
    }

    pub fn block_count(&self) -> usize {
        self.feasible.structure().block_count()
    }
}

/// Config-facing noise selection, parameterized by the declared bound `nu`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    /// Additive, uniform on `[-nu*sqrt(3), nu*sqrt(3)]`.
    Uniform { nu: f64 },
    /// Additive, Gaussian with standard deviation `nu`.
    Gaussian { nu: f64 },
    /// Point-dependent: bounded uniform times an affine field, calibrated so
    /// the second moment meets `nu^2` at its worst feasible point.
    Affine { nu: f64 },
}

impl NoiseSpec {
    pub fn declared_bound(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { nu } | NoiseSpec::Gaussian { nu } | NoiseSpec::Affine { nu } => {
                *nu
            }
        }
    }
}

fn default_eta0() -> f64 {
    0.5
}

fn default_box_radius() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.1
}

fn default_pieces() -> usize {
    4
}

fn default_mix() -> f64 {
    0.5
}

fn default_gen_seed() -> u64 {
    2024
}

/// Config-facing description of a corpus member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `|x|` on `[-1, 1]`, one block.
    Abs1d {
        #[serde(default = "default_eta0")]
        eta0: f64,
        #[serde(default)]
        noise: NoiseSpec,
    },
    /// `0.5 |x|^2` on a box, arbitrary block split.
    Quad {
        dim: usize,
        #[serde(default)]
        blocks: Option<Vec<usize>>,
        #[serde(default = "default_box_radius")]
        box_radius: f64,
        #[serde(default = "default_eta0")]
        eta0: f64,
        #[serde(default)]
        noise: NoiseSpec,
        /// Optional explicit per-block set descriptors overriding the box.
        #[serde(default)]
        sets: Option<Vec<BlockSet>>,
    },
    /// `|x|_1 - alpha |x|^2 + shift` on a box.
    L1reg {
        dim: usize,
        #[serde(default)]
        blocks: Option<Vec<usize>>,
        #[serde(default = "default_box_radius")]
        box_radius: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_eta0")]
        eta0: f64,
        #[serde(default)]
        noise: NoiseSpec,
    },
    /// Difference of two random piecewise-linear maxima on a box.
    Maxlin {
        dim: usize,
        #[serde(default)]
        blocks: Option<Vec<usize>>,
        #[serde(default = "default_box_radius")]
        box_radius: f64,
        #[serde(default = "default_pieces")]
        pieces: usize,
        #[serde(default = "default_mix")]
        mix: f64,
        #[serde(default = "default_gen_seed")]
        gen_seed: u64,
        #[serde(default = "default_eta0")]
        eta0: f64,
        #[serde(default)]
        noise: NoiseSpec,
    },
}

fn resolve_blocks(blocks: &Option<Vec<usize>>, dim: usize) -> Result<Vec<usize>, ProblemError> {
    let blocks = blocks.clone().unwrap_or_else(|| vec![dim]);
    if blocks.iter().sum::<usize>() != dim || blocks.contains(&0) {
        return Err(ProblemError::BlockMismatch { blocks, dim });
    }
    Ok(blocks)
}

fn box_set(blocks: &[usize], radius: f64) -> Result<FeasibleSet, ProblemError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(ProblemError::NonPositive { name: "box_radius", value: radius });
    }
    Ok(FeasibleSet::new(
        blocks
            .iter()
            .map(|&d| BlockSet::Box { lower: vec![-radius; d], upper: vec![radius; d] })
            .collect(),
    )?)
}

/// Largest value of `|direction . x + offset|` over the feasible set
/// inflated by `eta0`.
fn affine_sup(set: &FeasibleSet, direction: &[f64], offset: f64, eta0: f64) -> f64 {
    let (lower, upper) = set.bounding_box();
    let mut hi = offset;
    let mut lo = offset;
    for ((&a, &l), &u) in direction.iter().zip(&lower).zip(&upper) {
        hi += if a >= 0.0 { a * u } else { a * l };
        lo += if a >= 0.0 { a * l } else { a * u };
    }
    let pad = eta0 * norm2(direction);
    (hi + pad).abs().max((lo - pad).abs())
}

fn build_noise(
    spec: &NoiseSpec,
    set: &FeasibleSet,
    eta0: f64,
) -> Result<NoiseModel, ProblemError> {
    let nu = spec.declared_bound();
    if !matches!(spec, NoiseSpec::None) && !(nu.is_finite() && nu > 0.0) {
        return Err(ProblemError::NonPositive { name: "nu", value: nu });
    }
    Ok(match spec {
        NoiseSpec::None => NoiseModel::None,
        // E z^2 = half_width^2 / 3 for the uniform law.
        NoiseSpec::Uniform { nu } => NoiseModel::AdditiveUniform { half_width: nu * 3f64.sqrt() },
        NoiseSpec::Gaussian { nu } => NoiseModel::AdditiveGaussian { std_dev: *nu },
        NoiseSpec::Affine { nu } => {
            let n = set.structure().dim();
            let direction: Vec<f64> = vec![1.0 / (n as f64).sqrt(); n];
            let sup = affine_sup(set, &direction, 0.0, eta0);
            if !sup.is_finite() || sup <= 0.0 {
                return Err(ProblemError::Invalid(
                    "affine noise needs a bounded feasible set".into(),
                ));
            }
            NoiseModel::Affine {
                half_width: nu * 3f64.sqrt() / sup,
                direction,
                offset: 0.0,
            }
        }
    })
}

/// Builds a fully wired corpus member from its config description.
pub fn make_problem(spec: &ProblemSpec) -> Result<TestProblem, ProblemError> {
    match spec {
        ProblemSpec::Abs1d { eta0, noise } => {
            let feasible = box_set(&[1], 1.0)?;
            let noise_model = build_noise(noise, &feasible, *eta0)?;
            let lipschitz = 1.0 + noise_model.lipschitz_bump();
            let constants = OracleConstants {
                lipschitz,
                noise_bound: noise.declared_bound(),
                smoothing_limit: *eta0,
                value_sup: Some(1.0 + eta0),
            };
            Ok(TestProblem {
                name: "abs1d".into(),
                feasible,
                oracle: ProblemOracle { base: BaseFunction::Abs1d, noise: noise_model, constants },
                stationary_points: vec![vec![0.0]],
            })
        }
        ProblemSpec::Quad { dim, blocks, box_radius, eta0, noise, sets } => {
            if *dim == 0 {
                return Err(ProblemError::NonPositive { name: "dim", value: 0.0 });
            }
            let blocks = resolve_blocks(blocks, *dim)?;
            let feasible = match sets {
                Some(descriptors) => {
                    let set = FeasibleSet::new(descriptors.clone())?;
                    if set.structure().dim() != *dim {
                        return Err(ProblemError::BlockMismatch {
                            blocks: descriptors.iter().map(BlockSet::dim).collect(),
                            dim: *dim,
                        });
                    }
                    set
                }
                None => box_set(&blocks, *box_radius)?,
            };
            let noise_model = build_noise(noise, &feasible, *eta0)?;
            // sup |x| over the inflated region, from the bounding box.
            let (lower, upper) = feasible.bounding_box();
            let reach = lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                .sum::<f64>()
                .sqrt()
                + eta0;
            let lipschitz = reach + noise_model.lipschitz_bump();
            let constants = OracleConstants {
                lipschitz,
                noise_bound: noise.declared_bound(),
                smoothing_limit: *eta0,
                value_sup: Some(0.5 * reach * reach),
            };
            let stationary = if feasible.contains(&vec![0.0; *dim], 0.0) {
                vec![vec![0.0; *dim]]
            } else {
                Vec::new()
            };
            Ok(TestProblem {
                name: "quad".into(),
                feasible,
                oracle: ProblemOracle {
                    base: BaseFunction::Quad { dim: *dim },
                    noise: noise_model,
                    constants,
                },
                stationary_points: stationary,
            })
        }
        ProblemSpec::L1reg { dim, blocks, box_radius, alpha, eta0, noise } => {
            if *dim == 0 {
                return Err(ProblemError::NonPositive { name: "dim", value: 0.0 });
            }
            if !(alpha.is_finite() && *alpha > 0.0) {
                return Err(ProblemError::NonPositive { name: "alpha", value: *alpha });
            }
            let blocks = resolve_blocks(blocks, *dim)?;
            let feasible = box_set(&blocks, *box_radius)?;
            let noise_model = build_noise(noise, &feasible, *eta0)?;
            let n = *dim as f64;
            let corner = box_radius + eta0;
            // shift keeps f nonnegative on the inflated box
            let shift = alpha * n * corner * corner;
            let reach = n.sqrt() * box_radius + eta0;
            let lipschitz = n.sqrt() + 2.0 * alpha * reach + noise_model.lipschitz_bump();
            let constants = OracleConstants {
                lipschitz,
                noise_bound: noise.declared_bound(),
                smoothing_limit: *eta0,
                value_sup: Some(n * corner + shift),
            };
            Ok(TestProblem {
                name: "l1reg".into(),
                feasible,
                oracle: ProblemOracle {
                    base: BaseFunction::L1RegNc { dim: *dim, alpha: *alpha, shift },
                    noise: noise_model,
                    constants,
                },
                stationary_points: Vec::new(),
            })
        }
        ProblemSpec::Maxlin { dim, blocks, box_radius, pieces, mix, gen_seed, eta0, noise } => {
            if *dim == 0 {
                return Err(ProblemError::NonPositive { name: "dim", value: 0.0 });
            }
            if *pieces == 0 {
                return Err(ProblemError::NonPositive { name: "pieces", value: 0.0 });
            }
            if !(mix.is_finite() && *mix >= 0.0) {
                return Err(ProblemError::NonPositive { name: "mix", value: *mix });
            }
            let blocks = resolve_blocks(blocks, *dim)?;
            let feasible = box_set(&blocks, *box_radius)?;
            let noise_model = build_noise(noise, &feasible, *eta0)?;
            let mut rng = ChaCha12Rng::seed_from_u64(*gen_seed);
            let family = |rng: &mut ChaCha12Rng| -> Vec<(Vec<f64>, f64)> {
                (0..*pieces)
                    .map(|_| {
                        let a: Vec<f64> =
                            (0..*dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let b: f64 = rng.random_range(-0.5..0.5);
                        (a, b)
                    })
                    .collect()
            };
            let positive = family(&mut rng);
            let negative = family(&mut rng);
            let max_norm = |fam: &[(Vec<f64>, f64)]| {
                fam.iter().map(|(a, _)| norm2(a)).fold(0.0f64, f64::max)
            };
            let corner = box_radius + eta0;
            let sup_abs = |fam: &[(Vec<f64>, f64)]| {
                fam.iter()
                    .map(|(a, b)| a.iter().map(|c| c.abs()).sum::<f64>() * corner + b.abs())
                    .fold(0.0f64, f64::max)
            };
            let lipschitz =
                max_norm(&positive) + mix * max_norm(&negative) + noise_model.lipschitz_bump();
            let value_sup = sup_abs(&positive) + mix * sup_abs(&negative);
            let constants = OracleConstants {
                lipschitz,
                noise_bound: noise.declared_bound(),
                smoothing_limit: *eta0,
                value_sup: Some(value_sup),
            };
            Ok(TestProblem {
                name: "maxlin".into(),
                feasible,
                oracle: ProblemOracle {
                    base: BaseFunction::MaxLin { positive, negative, mix: *mix },
                    noise: noise_model,
                    constants,
                },
                stationary_points: Vec::new(),
            })
        }
    }
}

/// Empirical certificates for the declared constants.
#[derive(Debug, Clone)]
pub struct ConstantsReport {
    pub declared_lipschitz: f64,
    pub max_difference_quotient: f64,
    pub lipschitz_ok: bool,
    pub declared_noise_sq: f64,
    /// Largest per-point empirical second moment of the noise.
    pub max_noise_moment: f64,
    pub noise_moment_std_error: f64,
    pub noise_ok: bool,
    pub pairs: usize,
    pub noise_points: usize,
    pub noise_draws: usize,
}

impl std::fmt::Display for ConstantsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "lipschitz: max quotient {:.6} vs declared {:.6} over {} pairs -> {}",
            self.max_difference_quotient,
            self.declared_lipschitz,
            self.pairs,
            if self.lipschitz_ok { "ok" } else { "VIOLATED" }
        )?;
        write!(
            f,
            "noise: max second moment {:.6e} vs declared {:.6e} ({} points x {} draws) -> {}",
            self.max_noise_moment,
            self.declared_noise_sq,
            self.noise_points,
            self.noise_draws,
            if self.noise_ok { "ok" } else { "VIOLATED" }
        )
    }
}

/// Samples difference quotients and noise moments against the declared
/// constants. Failures are reported, not thrown.
pub fn verify_constants(
    problem: &TestProblem,
    pairs: usize,
    noise_points: usize,
    noise_draws: usize,
    rng: &mut ChaCha12Rng,
) -> ConstantsReport {
    let constants = problem.oracle.constants();
    let (lower, upper) = problem.feasible.bounding_box();
    let eta0 = constants.smoothing_limit;
    let n = problem.dim();
    // A point of the feasible set inflated by the eta0-ball: a projected box
    // draw plus a ball perturbation. The declared constants hold exactly
    // there, not on the (larger) coordinate-wise inflation.
    let sample_inflated = |rng: &mut ChaCha12Rng| -> Vec<f64> {
        let raw: Vec<f64> = lower
            .iter()
            .zip(&upper)
            .map(|(&l, &u)| {
                let lo = if l.is_finite() { l } else { -10.0 };
                let hi = if u.is_finite() { u } else { 10.0 };
                rng.random_range(lo..hi)
            })
            .collect();
        let mut x = problem.feasible.project(&raw).unwrap();
        let shift = crate::sampling::sample_ball(rng, n, eta0).unwrap();
        for (xi, si) in x.iter_mut().zip(&shift) {
            *xi += si;
        }
        x
    };

    let mut max_quotient = 0.0f64;
    for _ in 0..pairs {
        let x = sample_inflated(rng);
        let y = if rng.random::<f64>() < 0.5 {
            sample_inflated(rng)
        } else {
            // near pair probing local steepness; shrinking toward the
            // feasible set keeps it inside the inflated region
            let center = problem.feasible.project(&x).unwrap();
            let shrink = rng.random_range(1e-6..1e-3);
            x.iter().zip(&center).map(|(v, c)| v + (c - v) * shrink).collect()
        };
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist < 1e-12 {
            continue;
        }
        let quotient =
            (problem.oracle.base.value(&x) - problem.oracle.base.value(&y)).abs() / dist;
        max_quotient = max_quotient.max(quotient);
    }
    let lipschitz_ok = max_quotient <= constants.lipschitz * (1.0 + 1e-6);

    let declared_noise_sq = constants.noise_bound * constants.noise_bound;
    let mut max_noise_moment = 0.0f64;
    let mut max_se = 0.0f64;
    for _ in 0..noise_points {
        let mut x = sample_inflated(rng);
        // noise bound is declared on the inflated region, so raw samples are fine;
        // project half the time to also cover feasible points
        if rng.random::<f64>() < 0.5 {
            x = problem.feasible.project(&x).unwrap();
        }
        let f = problem.oracle.base.value(&x);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..noise_draws {
            let d = problem.oracle.evaluate(&x, rng.next_u64()) - f;
            let d2 = d * d;
            sum += d2;
            sumsq += d2 * d2;
        }
        let m = sum / noise_draws as f64;
        let var = (sumsq / noise_draws as f64 - m * m).max(0.0);
        let se = (var / noise_draws as f64).sqrt();
        if m > max_noise_moment {
            max_noise_moment = m;
            max_se = se;
        }
    }
    let noise_ok = max_noise_moment <= declared_noise_sq + 4.0 * max_se + 1e-15;

    ConstantsReport {
        declared_lipschitz: constants.lipschitz,
        max_difference_quotient: max_quotient,
        lipschitz_ok,
        declared_noise_sq,
        max_noise_moment,
        noise_moment_std_error: max_se,
        noise_ok,
        pairs,
        noise_points,
        noise_draws,
    }
}
