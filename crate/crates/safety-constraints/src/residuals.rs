use crate::KinematicLimits;
use lip_core::{LipState, StanceFoot, StepControl};
use nalgebra::SMatrix;

/// Lower bound on the squared mass-to-foothold distance, m^2. Keeping the
/// foot strictly away from the ground projection of the mass avoids the
/// singular configuration where the pendulum has no lever arm.
pub const REACH_MIN_SQ: f64 = 1e-4;

/// Smoothing constant replacing `|omega|` with `sqrt(omega^2 + eps^2)` in
/// the turn-speed coupling, so the residual stays differentiable at zero.
pub const TURN_SMOOTHING: f64 = 1e-6;

/// Discrete-time barrier decay residual.
///
/// Nonnegative when the barrier value shrinks by at most the fraction
/// `gamma` over one step: `h_next >= (1 - gamma) h_current`. Since barrier
/// values are positive outside an obstacle, satisfying this at every step
/// keeps a trajectory that starts outside from ever crossing the boundary.
pub fn dcbf_residual(h_next: f64, h_current: f64, gamma: f64) -> f64 {
    h_next + (gamma - 1.0) * h_current
}

fn body_frame_velocity(x: &LipState) -> (f64, f64, f64, f64) {
    let (s, c) = x.heading.sin_cos();
    let long = c * x.vel_x + s * x.vel_y;
    let lat = -s * x.vel_x + c * x.vel_y;
    (long, lat, s, c)
}

/// Body-frame velocity band residuals at a step boundary, ordered
/// `[long lower, long upper, lat lower, lat upper]`.
///
/// The lateral band flips sign with stance: with the right foot down the
/// mass drifts to the left (positive lateral), and vice versa, so the band
/// `[min, max]` applies directly under `Right` stance and mirrored to
/// `[-max, -min]` under `Left`.
pub fn velocity_residuals(
    x: &LipState,
    stance: StanceFoot,
    limits: &KinematicLimits,
) -> [f64; 4] {
    let (long, lat, _, _) = body_frame_velocity(x);
    let (lat_lo, lat_hi) = match stance {
        StanceFoot::Right => (limits.vel_lat_min, limits.vel_lat_max),
        StanceFoot::Left => (-limits.vel_lat_max, -limits.vel_lat_min),
    };
    [
        long - limits.vel_long_min,
        limits.vel_long_max - long,
        lat - lat_lo,
        lat_hi - lat,
    ]
}

/// Jacobian of [`velocity_residuals`] with respect to the state
/// `[pos_x, vel_x, pos_y, vel_y, heading]`.
pub fn velocity_jacobian(x: &LipState, _stance: StanceFoot) -> SMatrix<f64, 4, 5> {
    let (long, lat, s, c) = body_frame_velocity(x);
    let mut j = SMatrix::<f64, 4, 5>::zeros();
    // d long / d state and d lat / d state; band offsets are constants.
    let dlong = [0.0, c, 0.0, s, lat];
    let dlat = [0.0, -s, 0.0, c, -long];
    for col in 0..5 {
        j[(0, col)] = dlong[col];
        j[(1, col)] = -dlong[col];
        j[(2, col)] = dlat[col];
        j[(3, col)] = -dlat[col];
    }
    j
}

/// Leg reach residuals `[d^2 - REACH_MIN_SQ, max_reach^2 - d^2]` where `d`
/// is the distance from the mass at step start to the commanded foothold.
pub fn reachability_residuals(
    x: &LipState,
    u: &StepControl,
    limits: &KinematicLimits,
) -> [f64; 2] {
    let dx = u.foot_x - x.pos_x;
    let dy = u.foot_y - x.pos_y;
    let d2 = dx * dx + dy * dy;
    [
        d2 - REACH_MIN_SQ,
        limits.max_step_reach * limits.max_step_reach - d2,
    ]
}

/// Jacobians of [`reachability_residuals`] with respect to the state and
/// the control `[foot_x, foot_y, omega]`.
pub fn reachability_jacobians(
    x: &LipState,
    u: &StepControl,
) -> (SMatrix<f64, 2, 5>, SMatrix<f64, 2, 3>) {
    let dx = u.foot_x - x.pos_x;
    let dy = u.foot_y - x.pos_y;
    let mut jx = SMatrix::<f64, 2, 5>::zeros();
    let mut ju = SMatrix::<f64, 2, 3>::zeros();
    jx[(0, 0)] = -2.0 * dx;
    jx[(0, 2)] = -2.0 * dy;
    ju[(0, 0)] = 2.0 * dx;
    ju[(0, 1)] = 2.0 * dy;
    for col in 0..5 {
        jx[(1, col)] = -jx[(0, col)];
    }
    for col in 0..3 {
        ju[(1, col)] = -ju[(0, col)];
    }
    (jx, ju)
}

/// Turn magnitude residuals `[omega + max_turn, max_turn - omega]`.
pub fn turn_rate_residuals(u: &StepControl, limits: &KinematicLimits) -> [f64; 2] {
    [
        u.omega + limits.max_turn_per_step,
        limits.max_turn_per_step - u.omega,
    ]
}

/// Jacobian of [`turn_rate_residuals`] with respect to the control.
pub fn turn_rate_jacobian() -> SMatrix<f64, 2, 3> {
    let mut j = SMatrix::<f64, 2, 3>::zeros();
    j[(0, 2)] = 1.0;
    j[(1, 2)] = -1.0;
    j
}

fn coupled_speed(x: &LipState, u: &StepControl, limits: &KinematicLimits) -> (f64, f64, f64) {
    let (long, _, _, _) = body_frame_velocity(x);
    let scale = limits.turn_speed_coupling / std::f64::consts::PI;
    let smooth = (u.omega * u.omega + TURN_SMOOTHING * TURN_SMOOTHING).sqrt();
    (scale * smooth + long, smooth, scale)
}

/// Turn-speed coupling residuals, ordered `[lower, upper]`.
///
/// The coupled quantity `coupling/pi * |omega| + v_long` must stay inside
/// the longitudinal band; commanding a hard turn therefore forces the step
/// to slow down. `|omega|` is smoothed near zero (see [`TURN_SMOOTHING`]).
pub fn maneuverability_residuals(
    x: &LipState,
    u: &StepControl,
    limits: &KinematicLimits,
) -> [f64; 2] {
    let (coupled, _, _) = coupled_speed(x, u, limits);
    [coupled - limits.vel_long_min, limits.vel_long_max - coupled]
}

/// Jacobians of [`maneuverability_residuals`] with respect to the state at
/// step start and the control.
pub fn maneuverability_jacobians(
    x: &LipState,
    u: &StepControl,
    limits: &KinematicLimits,
) -> (SMatrix<f64, 2, 5>, SMatrix<f64, 2, 3>) {
    let (_, smooth, scale) = coupled_speed(x, u, limits);
    let (_, lat, s, c) = body_frame_velocity(x);
    let dcoupled_x = [0.0, c, 0.0, s, lat];
    let dcoupled_omega = scale * u.omega / smooth;
    let mut jx = SMatrix::<f64, 2, 5>::zeros();
    let mut ju = SMatrix::<f64, 2, 3>::zeros();
    for col in 0..5 {
        jx[(0, col)] = dcoupled_x[col];
        jx[(1, col)] = -dcoupled_x[col];
    }
    ju[(0, 2)] = dcoupled_omega;
    ju[(1, 2)] = -dcoupled_omega;
    (jx, ju)
}
