//! Step-to-step model of a walking robot's center of mass.
//!
//! The robot is abstracted as a 3D linear inverted pendulum: a point mass
//! held at constant height above a massless leg, plus a heading angle that
//! the swing leg can rotate by a bounded amount each step. Between footstep
//! transitions the horizontal dynamics are linear and decouple per axis, so
//! the evolution over one full step of duration `T` has a closed form. That
//! closed form is exposed here as a discrete-time linear system whose state
//! is `[pos_x, vel_x, pos_y, vel_y, heading]` and whose control is the next
//! foothold position together with a per-step heading increment.
//!
//! All angles are kept in `(-pi, pi]`.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use std::f64::consts::PI;
use thiserror::Error;

/// Stacked state `[pos_x, vel_x, pos_y, vel_y, heading]`.
pub type StateVec = SVector<f64, 5>;
/// Stacked control `[foot_x, foot_y, omega]`.
pub type ControlVec = SVector<f64, 3>;

#[derive(Debug, Error)]
pub enum LipError {
    /// Model parameters must be finite and strictly positive.
    #[error("invalid pendulum parameters: {0}")]
    InvalidParams(String),
    /// Remaining-time queries are only defined inside the current step.
    #[error("time {t} s lies outside the step interval [0, {step_duration}] s")]
    TimeOutOfStep { t: f64, step_duration: f64 },
}

/// Wraps an angle to `(-pi, pi]`.
///
/// The half-open convention is deliberate: `pi` maps to `pi`, `-pi` maps to
/// `pi`, so every angle has exactly one representative.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        // Already in range; returning it untouched keeps the map exact.
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI);
    if wrapped == 0.0 {
        PI
    } else {
        wrapped - PI
    }
}

/// Physical constants of the pendulum.
///
/// `beta = sqrt(gravity / com_height)` is the natural frequency of the
/// unstable mode and is derived once at construction so it can never drift
/// out of sync with the height and gravity it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipParams {
    com_height: f64,
    gravity: f64,
    step_duration: f64,
    beta: f64,
}

impl LipParams {
    pub fn new(com_height: f64, gravity: f64, step_duration: f64) -> Result<Self, LipError> {
        let all_finite =
            com_height.is_finite() && gravity.is_finite() && step_duration.is_finite();
        if !all_finite || com_height <= 0.0 || gravity <= 0.0 || step_duration <= 0.0 {
            return Err(LipError::InvalidParams(format!(
                "com_height={com_height}, gravity={gravity}, step_duration={step_duration}"
            )));
        }
        Ok(Self {
            com_height,
            gravity,
            step_duration,
            beta: (gravity / com_height).sqrt(),
        })
    }

    pub fn com_height(&self) -> f64 {
        self.com_height
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn step_duration(&self) -> f64 {
        self.step_duration
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for LipParams {
    /// One meter center-of-mass height, standard gravity, 0.4 s steps.
    fn default() -> Self {
        Self::new(1.0, 9.81, 0.4).expect("default parameters are valid")
    }
}

/// Which foot is on the ground during a step.
///
/// Stance parity flips every step and decides the sign convention for
/// lateral motion: the body leans away from the stance leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StanceFoot {
    Left,
    Right,
}

impl StanceFoot {
    pub fn flipped(self) -> Self {
        match self {
            StanceFoot::Left => StanceFoot::Right,
            StanceFoot::Right => StanceFoot::Left,
        }
    }
}

/// Center-of-mass state sampled at a step boundary (or mid-step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipState {
    pub pos_x: f64,
    pub vel_x: f64,
    pub pos_y: f64,
    pub vel_y: f64,
    /// Heading in `(-pi, pi]`.
    pub heading: f64,
}

impl LipState {
    /// Builds a state, wrapping the heading into `(-pi, pi]`.
    pub fn new(pos_x: f64, vel_x: f64, pos_y: f64, vel_y: f64, heading: f64) -> Self {
        Self {
            pos_x,
            vel_x,
            pos_y,
            vel_y,
            heading: wrap_angle(heading),
        }
    }

    pub fn from_vector(v: &StateVec) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn to_vector(&self) -> StateVec {
        StateVec::from([self.pos_x, self.vel_x, self.pos_y, self.vel_y, self.heading])
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.pos_x, self.pos_y)
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.vel_x, self.vel_y)
    }
}

/// Per-step control: where the next foot lands and how much the body turns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub foot_x: f64,
    pub foot_y: f64,
    /// Heading increment applied over the step, rad.
    pub omega: f64,
}

impl StepControl {
    pub fn new(foot_x: f64, foot_y: f64, omega: f64) -> Self {
        Self { foot_x, foot_y, omega }
    }

    pub fn from_vector(v: &ControlVec) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> ControlVec {
        ControlVec::from([self.foot_x, self.foot_y, self.omega])
    }

    pub fn foot(&self) -> Vector2<f64> {
        Vector2::new(self.foot_x, self.foot_y)
    }
}

/// Discrete-time system matrices for one step of a given duration.
///
/// `per_axis` and `per_axis_input` act on a single `[pos, vel]` pair; the
/// full `state_transition` and `control_input` stack two translational
/// copies plus the heading row, which integrates `omega` directly.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrices {
    pub per_axis: Matrix2<f64>,
    pub per_axis_input: Vector2<f64>,
    pub state_transition: SMatrix<f64, 5, 5>,
    pub control_input: SMatrix<f64, 5, 3>,
}

/// Closed-form step matrices of the pendulum over `duration` seconds.
///
/// With `b = beta` and `s = duration` the per-axis blocks are
/// `[[cosh(b s), sinh(b s)/b], [b sinh(b s), cosh(b s)]]` for the state and
/// `[1 - cosh(b s), -b sinh(b s)]` for the foothold. The state block always
/// has unit determinant, so the map is volume preserving.
pub fn step_matrices(params: &LipParams, duration: f64) -> StepMatrices {
    let b = params.beta();
    let bs = b * duration;
    let ch = bs.cosh();
    let sh = bs.sinh();

    let per_axis = Matrix2::new(ch, sh / b, b * sh, ch);
    let per_axis_input = Vector2::new(1.0 - ch, -b * sh);

    let mut state_transition = SMatrix::<f64, 5, 5>::identity();
    let mut control_input = SMatrix::<f64, 5, 3>::zeros();
    for axis in 0..2 {
        let o = 2 * axis;
        state_transition
            .fixed_view_mut::<2, 2>(o, o)
            .copy_from(&per_axis);
        control_input
            .fixed_view_mut::<2, 1>(o, axis)
            .copy_from(&per_axis_input);
    }
    // Heading integrates the commanded increment exactly.
    control_input[(4, 2)] = 1.0;

    StepMatrices {
        per_axis,
        per_axis_input,
        state_transition,
        control_input,
    }
}

/// Advances the state by one full step under control `u`.
///
/// The returned heading is wrapped to `(-pi, pi]`.
pub fn step_dynamics(x: &LipState, u: &StepControl, params: &LipParams) -> LipState {
    let m = step_matrices(params, params.step_duration());
    let next = m.state_transition * x.to_vector() + m.control_input * u.to_vector();
    LipState::from_vector(&next)
}

/// Propagates the state through the remainder of the current step.
///
/// `foot` is the stance foot currently on the ground and `omega` the heading
/// increment of the step in progress; the heading advances by the fraction
/// `t_remaining / step_duration` of it, matching the per-step integration of
/// [`step_dynamics`] when `t_remaining` equals the full duration.
pub fn integrate_within_step(
    x: &LipState,
    foot: Vector2<f64>,
    omega: f64,
    t_remaining: f64,
    params: &LipParams,
) -> Result<LipState, LipError> {
    let t_total = params.step_duration();
    if !t_remaining.is_finite() || t_remaining < 0.0 || t_remaining > t_total {
        return Err(LipError::TimeOutOfStep {
            t: t_remaining,
            step_duration: t_total,
        });
    }
    let m = step_matrices(params, t_remaining);
    let axis = |pos: f64, vel: f64, f: f64| -> (f64, f64) {
        let next = m.per_axis * Vector2::new(pos, vel) + m.per_axis_input * f;
        (next[0], next[1])
    };
    let (px, vx) = axis(x.pos_x, x.vel_x, foot[0]);
    let (py, vy) = axis(x.pos_y, x.vel_y, foot[1]);
    let heading = x.heading + omega * (t_remaining / t_total);
    Ok(LipState::new(px, vx, py, vy, heading))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_angle_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(3.0 * PI), PI);
        assert_relative_eq!(wrap_angle(PI - 0.01 + 0.02), -PI + 0.01, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-2.5 * PI), -0.5 * PI, epsilon = 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn params_reject_nonpositive_and_nonfinite() {
        assert!(LipParams::new(0.0, 9.81, 0.4).is_err());
        assert!(LipParams::new(1.0, -9.81, 0.4).is_err());
        assert!(LipParams::new(1.0, 9.81, 0.0).is_err());
        assert!(LipParams::new(f64::NAN, 9.81, 0.4).is_err());
        assert!(LipParams::new(1.0, f64::INFINITY, 0.4).is_err());
    }

    #[test]
    fn beta_matches_height_and_gravity() {
        let p = LipParams::new(1.0, 9.81, 0.4).unwrap();
        // Frozen high-precision value of sqrt(9.81 / 1.0).
        assert_relative_eq!(p.beta(), 3.132091952673165, epsilon = 1e-15);
        let p2 = LipParams::new(0.8, 9.81, 0.4).unwrap();
        assert_relative_eq!(p2.beta() * p2.beta() * p2.com_height(), 9.81, epsilon = 1e-12);
    }

    #[test]
    fn step_matrices_frozen_entries() {
        let p = LipParams::default();
        let m = step_matrices(&p, p.step_duration());
        // Frozen values of cosh/sinh at beta * T = 1.252836781069266.
        assert_relative_eq!(m.per_axis[(0, 0)], 1.892975775364581, epsilon = 1e-14);
        assert_relative_eq!(m.per_axis[(0, 1)], 0.5131658337192296, epsilon = 1e-14);
        assert_relative_eq!(m.per_axis[(1, 0)], 5.034156828785643, epsilon = 1e-13);
        assert_relative_eq!(m.per_axis[(1, 1)], 1.892975775364581, epsilon = 1e-14);
        assert_relative_eq!(m.per_axis_input[0], -0.892975775364581, epsilon = 1e-14);
        assert_relative_eq!(m.per_axis_input[1], -5.034156828785643, epsilon = 1e-13);
        assert_eq!(m.control_input[(4, 2)], 1.0);
        assert_eq!(m.state_transition[(4, 4)], 1.0);
        // Cross-axis blocks stay zero.
        assert_eq!(m.state_transition[(0, 2)], 0.0);
        assert_eq!(m.control_input[(0, 1)], 0.0);
    }

    #[test]
    fn step_matrices_zero_duration_is_identity() {
        let p = LipParams::default();
        let m = step_matrices(&p, 0.0);
        assert_eq!(m.per_axis, Matrix2::identity());
        assert_eq!(m.per_axis_input, Vector2::zeros());
    }

    #[test]
    fn per_axis_determinant_is_one() {
        let p = LipParams::new(0.9, 9.81, 0.35).unwrap();
        for i in 0..50 {
            let d = 0.02 * i as f64;
            let m = step_matrices(&p, d);
            assert_relative_eq!(m.per_axis.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn foot_under_resting_mass_is_a_fixed_point() {
        let p = LipParams::default();
        let x = LipState::new(1.5, 0.0, -2.0, 0.0, 0.7);
        let u = StepControl::new(1.5, -2.0, 0.0);
        let next = step_dynamics(&x, &u, &p);
        assert_relative_eq!(next.pos_x, 1.5, epsilon = 1e-12);
        assert_relative_eq!(next.vel_x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(next.pos_y, -2.0, epsilon = 1e-12);
        assert_relative_eq!(next.vel_y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(next.heading, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn step_dynamics_frozen_case() {
        // Mass at rest at the origin, foot placed 0.1 m behind: the mass
        // falls away from the foot. Frozen closed-form values.
        let p = LipParams::default();
        let x = LipState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let u = StepControl::new(-0.1, 0.0, 0.1);
        let next = step_dynamics(&x, &u, &p);
        assert_relative_eq!(next.pos_x, 0.08929757753645812, epsilon = 1e-14);
        assert_relative_eq!(next.vel_x, 0.5034156828785643, epsilon = 1e-13);
        assert_eq!(next.pos_y, 0.0);
        assert_eq!(next.vel_y, 0.0);
        assert_relative_eq!(next.heading, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn step_dynamics_wraps_heading() {
        let p = LipParams::default();
        let x = LipState::new(0.0, 0.0, 0.0, 0.0, PI - 0.01);
        let u = StepControl::new(0.0, 0.0, 0.02);
        let next = step_dynamics(&x, &u, &p);
        assert_relative_eq!(next.heading, -PI + 0.01, epsilon = 1e-12);
    }

    #[test]
    fn integrate_within_step_endpoints() {
        let p = LipParams::default();
        let x = LipState::new(0.3, 0.4, -0.2, 0.1, 1.0);
        let u = StepControl::new(0.35, -0.15, 0.2);

        let same = integrate_within_step(&x, u.foot(), u.omega, 0.0, &p).unwrap();
        assert_eq!(same, x);

        let full = integrate_within_step(&x, u.foot(), u.omega, p.step_duration(), &p).unwrap();
        let stepped = step_dynamics(&x, &u, &p);
        assert_relative_eq!(full.pos_x, stepped.pos_x, epsilon = 1e-12);
        assert_relative_eq!(full.vel_x, stepped.vel_x, epsilon = 1e-12);
        assert_relative_eq!(full.pos_y, stepped.pos_y, epsilon = 1e-12);
        assert_relative_eq!(full.vel_y, stepped.vel_y, epsilon = 1e-12);
        assert_relative_eq!(full.heading, stepped.heading, epsilon = 1e-12);
    }

    #[test]
    fn integrate_within_step_rejects_out_of_range_times() {
        let p = LipParams::default();
        let x = LipState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let f = Vector2::zeros();
        assert!(integrate_within_step(&x, f, 0.0, -0.01, &p).is_err());
        assert!(integrate_within_step(&x, f, 0.0, 0.41, &p).is_err());
        assert!(integrate_within_step(&x, f, 0.0, f64::NAN, &p).is_err());
    }

    #[test]
    fn state_roundtrip_wraps_heading() {
        let v = StateVec::from([1.0, 2.0, 3.0, 4.0, 4.0 * PI + 0.5]);
        let s = LipState::from_vector(&v);
        assert_relative_eq!(s.heading, 0.5, epsilon = 1e-12);
        assert_eq!(s.to_vector()[0], 1.0);
    }
}
