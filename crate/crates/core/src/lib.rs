//! Randomized-block zeroth-order optimization with spherical smoothing.
//!
//! The crate targets nonsmooth, nonconvex stochastic objectives over
//! Cartesian products of closed convex sets, using only sampled function
//! values. Its pieces:
//!
//! - [`geometry`]: block partitions and exact Euclidean projections onto
//!   boxes, balls, simplices, halfspaces, and their products.
//! - [`sampling`]: seeded, stream-separated randomness with counter-derived
//!   per-sample states, so every draw is reproducible and re-derivable.
//! - [`oracle`]: the sampled-value interface plus two-point spherical
//!   gradient estimators, mini-batch block estimates, and evaluation-grade
//!   reference gradients.
//! - [`residual`]: projected-gradient stationarity residuals for the
//!   smoothed problem, with certificates and error-perturbation bounds.
//! - [`solver`]: the randomized block projected loop with batch schedules,
//!   trace capture, and sample-exact diagnostic probes.
//! - [`problems`]: a corpus of test problems with declared constants and
//!   closed-form smoothed values where derivable.

pub mod geometry;
pub mod oracle;
pub mod problems;
pub mod residual;
pub mod sampling;
pub mod solver;
pub mod util;

pub use geometry::{BlockSet, BlockStructure, FeasibleSet, GeometryError};
pub use oracle::{
    minibatch_block_gradient, smoothed_gradient_reference, smoothed_value_estimate,
    zo_gradient_block_sample, zo_gradient_sample, CountingOracle, GradientEstimate,
    OracleConstants, OracleError, ReferenceGradient, StochasticOracle, ValueEstimate,
};
pub use problems::{
    make_problem, verify_constants, BaseFunction, ConstantsReport, NoiseModel, NoiseSpec,
    ProblemError, ProblemOracle, ProblemSpec, TestProblem,
};
pub use residual::{
    check_perturbation_bound, perturbed_residual, projection_residual, PerturbationBound,
    ResidualError, ResidualReport,
};
pub use sampling::{
    output_window_start, sample_ball, sample_block, sample_output_index, sample_sphere,
    RngStreams, SamplingError,
};
pub use solver::{
    compact_update_checks, decompose_errors, descent_inequality_checks, error_moment_bounds,
    iteration_probe, run, run_with_observer, step, BatchSchedule, CompactUpdateCheck,
    ConfigError, DescentCheck, ErrorDecomposition, ErrorMomentBounds, IterationProbe,
    IterationRecord, PartialTrace, SolverConfig, SolverError, StepEvent, Trace,
};
