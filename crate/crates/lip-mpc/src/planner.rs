//! Receding-horizon step planner.
//!
//! Each call plans `N` upcoming steps: where to place the next `N` feet and
//! how much to turn on each step, minimizing distance to a goal plus a
//! heading-alignment cost, subject to barrier and kinematic constraints.
//! Only the first planned control is meant to be executed; the caller
//! replans as the state evolves and feeds the previous solution back in as
//! a warm start.

use crate::problem::NlpProblem;
use crate::solver::{solve_alm, AlmOptions, DenseNlp, Evaluation, StopReason};
use lip_core::{integrate_within_step, wrap_angle, LipError, LipParams, LipState, StanceFoot, StepControl, StateVec};
use nalgebra::Vector2;
use safety_constraints::{CbfConfig, KinematicLimits, Obstacle, SafetyError};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Distance below which the heading-alignment cost switches off; pointing
/// "toward" a goal underfoot is meaningless and its gradient blows up.
const GOAL_PROXIMITY: f64 = 1e-9;

/// Offset behind the mass used to seed footholds when no warm start exists.
const COLD_START_SPEED: f64 = 0.6;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Model(#[from] LipError),
}

/// Stage cost weights: squared goal distance and squared heading error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub position: f64,
    pub heading: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            position: 1.0,
            heading: 50.0,
        }
    }
}

/// Termination and relaxation settings of the horizon solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Cap on outer multiplier updates.
    pub max_iterations: usize,
    /// Linear weight on barrier slack; large enough to dominate any
    /// constraint multiplier so the relaxation is exact.
    pub slack_penalty: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            optimality_tol: 1e-6,
            max_iterations: 100,
            slack_penalty: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub weights: Weights,
    pub limits: KinematicLimits,
    pub cbf: CbfConfig,
    pub goal: Vector2<f64>,
    pub solver: SolverSettings,
    /// Drops the turn-speed coupling rows when false (ablation).
    pub maneuverability_enabled: bool,
}

impl PlannerConfig {
    pub fn for_goal(goal: Vector2<f64>) -> Self {
        Self {
            horizon: 3,
            weights: Weights::default(),
            limits: KinematicLimits::default(),
            cbf: CbfConfig::default(),
            goal,
            solver: SolverSettings::default(),
            maneuverability_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.horizon == 0 {
            return Err(PlanError::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.weights.position.is_finite() && self.weights.heading.is_finite())
            || self.weights.position < 0.0
            || self.weights.heading < 0.0
        {
            return Err(PlanError::InvalidConfig(format!(
                "weights must be finite and nonnegative, got {:?}",
                self.weights
            )));
        }
        if !(self.goal.x.is_finite() && self.goal.y.is_finite()) {
            return Err(PlanError::InvalidConfig("goal must be finite".into()));
        }
        let s = &self.solver;
        if !(s.feasibility_tol > 0.0 && s.optimality_tol > 0.0 && s.slack_penalty > 0.0)
            || s.max_iterations == 0
        {
            return Err(PlanError::InvalidConfig(format!(
                "solver settings out of range: {s:?}"
            )));
        }
        self.limits.validate()?;
        self.cbf.validate()?;
        Ok(())
    }
}

impl Default for PlannerConfig {
    /// Reference scenario: walk to `(10, 10)`.
    fn default() -> Self {
        Self::for_goal(Vector2::new(10.0, 10.0))
    }
}

/// Solver verdict for one planning call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    /// Feasible and stationary; no barrier row needed slack.
    Optimal,
    /// Converged, but at least one barrier row is held open by slack.
    SlackRelaxed,
    /// Iteration budget exhausted before certification.
    MaxIterations,
    /// Numeric breakdown; the best iterate found is still returned.
    Failed,
}

impl fmt::Display for NlpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            NlpStatus::Optimal => "Optimal",
            NlpStatus::SlackRelaxed => "SlackRelaxed",
            NlpStatus::MaxIterations => "MaxIterations",
            NlpStatus::Failed => "Failed",
        };
        f.write_str(name)
    }
}

impl FromStr for NlpStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Optimal" => Ok(NlpStatus::Optimal),
            "SlackRelaxed" => Ok(NlpStatus::SlackRelaxed),
            "MaxIterations" => Ok(NlpStatus::MaxIterations),
            "Failed" => Ok(NlpStatus::Failed),
            other => Err(format!("unknown solver status {other:?}")),
        }
    }
}

/// Result of one planning call.
#[derive(Debug, Clone)]
pub struct NlpSolution {
    /// Planned controls, one per horizon step; execute the first.
    pub controls: Vec<StepControl>,
    /// Predicted states after each planned step.
    pub states: Vec<LipState>,
    pub status: NlpStatus,
    /// Stage costs plus slack penalty at the returned point.
    pub objective: f64,
    /// Largest barrier slack; zero when the plan respects every barrier.
    pub max_slack: f64,
    /// Accepted line-search steps across all outer iterations.
    pub iterations: usize,
    pub solve_time: Duration,
    /// Stance parity of the first planned step; used to realign warm starts.
    pub stance_first: StanceFoot,
}

/// Heading that points from the state's position toward the goal.
pub fn heading_goal(x: &LipState, goal: Vector2<f64>) -> f64 {
    (goal.y - x.pos_y).atan2(goal.x - x.pos_x)
}

/// Stage cost: weighted squared goal distance plus weighted squared heading
/// misalignment. The heading term vanishes within [`GOAL_PROXIMITY`] of the
/// goal, where alignment is undefined.
pub fn stage_cost(x: &LipState, goal: Vector2<f64>, weights: &Weights) -> f64 {
    stage_cost_gradient(x, goal, weights).0
}

/// [`stage_cost`] together with its gradient in the state.
pub fn stage_cost_gradient(
    x: &LipState,
    goal: Vector2<f64>,
    weights: &Weights,
) -> (f64, StateVec) {
    let dx = x.pos_x - goal.x;
    let dy = x.pos_y - goal.y;
    let dist_sq = dx * dx + dy * dy;
    let mut cost = weights.position * dist_sq;
    let mut grad = StateVec::zeros();
    grad[0] = 2.0 * weights.position * dx;
    grad[2] = 2.0 * weights.position * dy;

    if dist_sq > GOAL_PROXIMITY * GOAL_PROXIMITY {
        let err = wrap_angle(x.heading - heading_goal(x, goal));
        cost += weights.heading * err * err;
        let scale = 2.0 * weights.heading * err;
        // The goal heading itself moves with the position: d(err)/d(pos)
        // follows from the derivative of atan2 toward a fixed target.
        grad[0] += scale * (-(goal.y - x.pos_y) / dist_sq);
        grad[2] += scale * ((goal.x - x.pos_x) / dist_sq);
        grad[4] = scale;
    }
    (cost, grad)
}

/// Advances a mid-step measurement to the upcoming step boundary, which is
/// where the horizon problem starts.
pub fn preprocess_state(
    x_current: &LipState,
    u_current: &StepControl,
    t_remaining: f64,
    params: &LipParams,
) -> Result<LipState, PlanError> {
    Ok(integrate_within_step(
        x_current,
        u_current.foot(),
        u_current.omega,
        t_remaining,
        params,
    )?)
}

/// Builds the horizon problem for an initial boundary state.
///
/// `obstacles` must already be inflated by the planning margin.
/// `stance_first` is the stance parity of the first planned step. A warm
/// start from the previous solution is realigned automatically: if its
/// first-step parity matches it is reused as is (replanning within the same
/// step), otherwise it is shifted by one step with the last control
/// repeated (the horizon advanced across a boundary).
pub fn assemble(
    initial: &LipState,
    stance_first: StanceFoot,
    obstacles: &[Obstacle],
    config: &PlannerConfig,
    params: &LipParams,
    warm: Option<&NlpSolution>,
) -> Result<NlpProblem, PlanError> {
    config.validate()?;
    let state_ok = initial.to_vector().iter().all(|v| v.is_finite());
    if !state_ok {
        return Err(PlanError::InvalidConfig("initial state must be finite".into()));
    }

    let guess_controls = match warm {
        Some(prev) if prev.controls.len() == config.horizon && !prev.controls.is_empty() => {
            if prev.stance_first == stance_first {
                prev.controls.clone()
            } else {
                let mut shifted: Vec<StepControl> = prev.controls[1..].to_vec();
                shifted.push(*prev.controls.last().expect("nonempty"));
                shifted
            }
        }
        _ => cold_start(initial, config, params),
    };

    Ok(NlpProblem::new(
        *initial,
        stance_first,
        obstacles.to_vec(),
        config,
        params,
        &guess_controls,
    ))
}

/// Foothold sequence that holds a mid-band forward speed along the current
/// heading; a crude but feasible-ish walk used when no warm start exists.
fn cold_start(initial: &LipState, config: &PlannerConfig, params: &LipParams) -> Vec<StepControl> {
    let mats = lip_core::step_matrices(params, params.step_duration());
    let ch = mats.per_axis[(0, 0)];
    let bsh = mats.per_axis[(1, 0)];
    let (sin_h, cos_h) = initial.heading.sin_cos();
    let v_des = Vector2::new(COLD_START_SPEED * cos_h, COLD_START_SPEED * sin_h);

    let mut controls = Vec::with_capacity(config.horizon);
    let mut x = *initial;
    for _ in 0..config.horizon {
        // Foot placement that lands the end-of-step velocity on v_des.
        let fx = x.pos_x - (v_des.x - ch * x.vel_x) / bsh;
        let fy = x.pos_y - (v_des.y - ch * x.vel_y) / bsh;
        let u = StepControl::new(fx, fy, 0.0);
        x = lip_core::step_dynamics(&x, &u, params);
        controls.push(u);
    }
    controls
}

/// Runs the solver on an assembled problem.
pub fn solve(problem: &NlpProblem, config: &PlannerConfig) -> NlpSolution {
    let started = Instant::now();
    let options = AlmOptions {
        feasibility_tol: config.solver.feasibility_tol,
        optimality_tol: config.solver.optimality_tol,
        max_major_iterations: config.solver.max_iterations,
        ..AlmOptions::default()
    };
    let outcome = solve_alm(problem, problem.initial_guess().clone(), &options);

    // Slacks are separable given the controls: the optimal value of each is
    // the positive part of its violated barrier row. Re-deriving them from
    // the returned controls removes solver noise from the slack readout.
    let controls = problem.controls_from_point(&outcome.point);
    let polished = problem.guess_from_controls(&controls);
    let mut eval = Evaluation::zeros(problem.num_vars(), problem.num_constraints());
    problem.evaluate(&polished, &mut eval);

    let n_ctrl = 3 * problem.horizon();
    let max_slack = polished
        .rows(n_ctrl, problem.num_slacks())
        .iter()
        .fold(0.0_f64, |m, &s| m.max(s));

    let feas_tol = config.solver.feasibility_tol;
    let hard_violation = hard_rows_violation(problem, &eval);
    let status = match outcome.stop {
        StopReason::NumericFailure => NlpStatus::Failed,
        StopReason::IterationLimit => NlpStatus::MaxIterations,
        StopReason::Converged => {
            if hard_violation > feas_tol {
                NlpStatus::Failed
            } else if max_slack > feas_tol {
                NlpStatus::SlackRelaxed
            } else {
                NlpStatus::Optimal
            }
        }
    };

    let states = problem
        .rollout(&controls)
        .into_iter()
        .map(|s| LipState::new(s.pos_x, s.vel_x, s.pos_y, s.vel_y, s.heading))
        .collect();

    NlpSolution {
        controls,
        states,
        status,
        objective: eval.objective,
        max_slack,
        iterations: outcome.inner_iterations,
        solve_time: started.elapsed(),
        stance_first: problem.stance_first,
    }
}

/// Largest violation among rows that have no slack.
fn hard_rows_violation(problem: &NlpProblem, eval: &Evaluation) -> f64 {
    let layout = problem.layout();
    let mut worst = 0.0_f64;
    for k in 0..layout.horizon {
        let start = layout.reach_row(k);
        let end = k * layout.rows_per_step() + layout.rows_per_step();
        for row in start..end {
            worst = worst.max(-eval.residuals[row]);
        }
    }
    worst
}

/// One full planning call: advance the measurement to the step boundary,
/// inflate the true obstacle geometry, assemble, and solve.
///
/// `stance_current` is the stance of the step in progress; the first
/// planned step uses the opposite parity.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    x_current: &LipState,
    u_current: &StepControl,
    stance_current: StanceFoot,
    t_remaining: f64,
    obstacles: &[Obstacle],
    config: &PlannerConfig,
    params: &LipParams,
    warm: Option<&NlpSolution>,
) -> Result<NlpSolution, PlanError> {
    let boundary_state = preprocess_state(x_current, u_current, t_remaining, params)?;
    let inflated = obstacles
        .iter()
        .map(|o| o.inflated(config.cbf.inflation_margin))
        .collect::<Result<Vec<_>, _>>()?;
    let problem = assemble(
        &boundary_state,
        stance_current.flipped(),
        &inflated,
        config,
        params,
        warm,
    )?;
    Ok(solve(&problem, config))
}
