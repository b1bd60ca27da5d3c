//! Receding-horizon footstep planning for the pendulum walker.
//!
//! The planner poses each replanning call as a small dense nonlinear
//! program over the next `N` footholds and turn commands, with obstacle
//! barrier decay and kinematic feasibility as inequality constraints. The
//! solver is a self-contained augmented Lagrangian method in [`solver`];
//! the problem structure lives in [`NlpProblem`], and the user-facing entry
//! points are [`plan`], [`assemble`], and [`solve`].

pub mod solver;

mod planner;
mod problem;

pub use planner::{
    assemble, heading_goal, plan, preprocess_state, solve, stage_cost, stage_cost_gradient,
    NlpSolution, NlpStatus, PlanError, PlannerConfig, SolverSettings, Weights,
};
pub use problem::NlpProblem;
