//! Safety and feasibility constraints for step-to-step walking.
//!
//! Everything here is expressed as *residuals*: scalar functions that are
//! nonnegative exactly when the corresponding requirement holds. Obstacle
//! avoidance uses quadratic barrier functions (positive outside, zero on the
//! boundary, negative inside) combined with a discrete-time decay condition
//! that lets a planner approach an obstacle but never jump inside. Kinematic
//! limits cover body-frame velocity bands, leg reach, per-step turning, and
//! a coupling between turn rate and forward speed.
//!
//! [`constraint_bundle`] stacks all residuals for a whole planning horizon
//! together with their Jacobian, laid out for dense NLP solvers.

mod bundle;
mod limits;
mod obstacle;
mod residuals;

pub use bundle::{constraint_bundle, constraint_bundle_with, BundleLayout, ConstraintBundle};
pub use limits::{CbfConfig, KinematicLimits};
pub use obstacle::{ellipse_coefficients, Ellipse, Obstacle};
pub use residuals::{
    dcbf_residual, maneuverability_jacobians, maneuverability_residuals, reachability_jacobians,
    reachability_residuals, turn_rate_jacobian, turn_rate_residuals, velocity_jacobian,
    velocity_residuals, REACH_MIN_SQ, TURN_SMOOTHING,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SafetyError {
    /// Obstacle shape parameters must describe a real, nondegenerate region.
    #[error("invalid obstacle geometry: {0}")]
    InvalidGeometry(String),
    /// Limit or barrier configuration is inconsistent.
    #[error("invalid constraint configuration: {0}")]
    InvalidConfig(String),
    /// Horizon inputs whose lengths disagree cannot be stacked.
    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),
}
