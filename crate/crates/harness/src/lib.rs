//! Experiment harness for the randomized-block zeroth-order solver:
//! strict JSON configuration, seeded multi-replication runs with streaming
//! CSV traces, rate and complexity analyses, and verification suites.

pub mod analysis;
pub mod config;
pub mod decompose;
pub mod experiment;
pub mod verify;

pub use analysis::{
    check_as_tail, check_sample_complexity, fit_rate, AggregatedCheckpoint, ComplexityTable,
    HorizonSamples, RateFit, TailReport,
};
pub use config::{
    AnalysisSection, EvaluationSection, ExperimentConfig, InitialPoint, SolverSection,
};
pub use decompose::{run_decompose, DecomposeReport, DecomposeRow};
pub use experiment::{
    aggregate_checkpoints, checkpoint_iterations, collect_horizon_samples, run_experiment,
    CheckpointRow, ExperimentOutcome, HorizonOutcome, RepOutcome, TailSummary,
};
pub use verify::{run_verify, VerifyReport};
