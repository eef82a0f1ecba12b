//! Metrics, synthetic crowds and the multi-run experiment harness.

pub mod experiment;
pub mod metrics;
pub mod simulate;

pub use experiment::{
    merge_overrides, run_experiment, run_experiment_on, run_once, ExperimentConfig, Method, RunOutcome, RunRecord,
    RunReport, Summary,
};
pub use metrics::{l0_error, l1_error};
pub use simulate::{simulate_crowd, SyntheticSpec, WorkerConfusion};
