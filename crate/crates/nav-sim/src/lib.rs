//! Closed-loop navigation simulator for step-to-step walking planners.
//!
//! The crate ties the planning stack together: it draws random obstacle
//! courses, runs a walker under mid-step replanning with either the
//! footstep planner or the differential-drive baseline, and aggregates
//! outcome statistics over seed batches. Everything is deterministic in
//! the seeds; two runs of the same episode are bitwise identical.

mod benchmark;
mod environment;
mod episode;
mod rng;

pub use benchmark::{
    benchmark_episode, run_benchmark, BenchmarkProtocol, BenchmarkTable, EpisodeRow,
    OutcomeCounts, PlannerReport,
};
pub use environment::{
    generate_environment, Bounds, Environment, CENTER_EDGE_INSET, CIRCLE_RADIUS_RANGE,
    ELLIPSE_AXIS_RANGE, PLACEMENT_ATTEMPTS, START_GOAL_CLEARANCE,
};
pub use episode::{
    classify, run_episode, BoundaryPrediction, DisturbanceSpec, EpisodeLog, EpisodeOptions,
    OutcomeFlags, PlannerKind, Sample, StepRecord, ARRIVAL_RADIUS, SLACK_VIOLATION_TOL,
};
pub use rng::SplitMix64;

use lip_core::LipError;
use lip_mpc::PlanError;
use safety_constraints::SafetyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Scenario inputs that no episode could run from.
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    /// Episode or benchmark settings outside their domain.
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Model(#[from] LipError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}
