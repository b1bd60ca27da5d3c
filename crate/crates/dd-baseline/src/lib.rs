//! Differential-drive comparison pipeline.
//!
//! A planar unicycle stands in for the walker: a pose `(x, y, theta)`
//! driven by a longitudinal speed and a per-step heading increment. The
//! planner [`dd_plan`] runs the same receding-horizon formulation as the
//! footstep planner, with the same stage cost, the same obstacle barrier
//! decay rows, and the same speed and turn bounds, but none of the
//! step-level feasibility rows: the unicycle has no feet. A mid-level
//! tracker, [`deadbeat_foot_placement`], converts each commanded velocity
//! into the foothold that reaches it exactly one step later, which is how
//! the velocity commands are executed on the walking model. The gap between
//! the unicycle's predicted motion and the walker's realized motion is the
//! model mismatch this baseline exists to expose.

mod planner;

pub use planner::{dd_plan, DdNlp, DdSolution};

use lip_core::{wrap_angle, LipParams, LipState, StanceFoot, StepControl};
use nalgebra::Vector2;

/// Lateral distance between the deadbeat foothold and the commanded path,
/// alternating sides each step so the feet do not collide.
pub const DEFAULT_LATERAL_OFFSET: f64 = 0.1;

/// Planar unicycle pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdPose {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped to `(-pi, pi]`.
    pub theta: f64,
}

impl DdPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// One planned unicycle command: longitudinal speed over the step and the
/// heading increment applied across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdCommand {
    /// Longitudinal speed in m/s.
    pub v: f64,
    /// Heading increment in rad per step.
    pub omega: f64,
}

impl DdCommand {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Advances the unicycle by `dt` seconds under a constant command.
///
/// Translation integrates the start-of-interval heading (forward Euler);
/// the heading itself advances by the fraction of the step the interval
/// covers, so integrating a full step of duration `T` turns by exactly
/// `omega`. `dt` must be positive.
pub fn dd_dynamics(pose: &DdPose, cmd: &DdCommand, dt: f64, params: &LipParams) -> DdPose {
    debug_assert!(dt > 0.0, "dd_dynamics needs a positive interval, got {dt}");
    let (sin_h, cos_h) = pose.theta.sin_cos();
    DdPose::new(
        pose.x + cmd.v * cos_h * dt,
        pose.y + cmd.v * sin_h * dt,
        pose.theta + cmd.omega * dt / params.step_duration(),
    )
}

/// Foothold that brings the walker's end-of-step velocity to `v_des`.
///
/// Per axis, the step map gives `v' = beta*sinh(beta*T) * (p - f) +
/// cosh(beta*T) * v`; solving for `f` makes `v'` equal `v_des` exactly.
/// On top of that deadbeat point, the foothold is shifted sideways by
/// `lateral_offset` toward the side of `stance`, the foot that will land
/// there, so the two feet keep a lateral separation. The shift moves the
/// end-of-step velocity only along the body-lateral axis; its longitudinal
/// component still matches `v_des` exactly.
///
/// The division is safe for every constructible `params`: a positive step
/// duration (enforced at parameter construction) makes `sinh(beta*T)`
/// strictly positive.
pub fn deadbeat_foot_placement(
    x: &LipState,
    stance: StanceFoot,
    v_des: Vector2<f64>,
    params: &LipParams,
    lateral_offset: f64,
) -> StepControl {
    let mats = lip_core::step_matrices(params, params.step_duration());
    let ch = mats.per_axis[(0, 0)];
    let bsh = mats.per_axis[(1, 0)];

    let fx = x.pos_x - (v_des.x - ch * x.vel_x) / bsh;
    let fy = x.pos_y - (v_des.y - ch * x.vel_y) / bsh;

    // Body-left axis; the left foot lands on it, the right foot opposite.
    let (sin_h, cos_h) = x.heading.sin_cos();
    let side = match stance {
        StanceFoot::Left => 1.0,
        StanceFoot::Right => -1.0,
    };
    StepControl::new(
        fx + side * lateral_offset * -sin_h,
        fy + side * lateral_offset * cos_h,
        0.0,
    )
}
