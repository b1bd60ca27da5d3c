//! Receding-horizon planner over unicycle commands.
//!
//! The decision vector is `[v_0, w_0, .., v_{N-1}, w_{N-1}, s]`: speed and
//! heading increment per step, followed by one slack variable per barrier
//! row. Unlike the footstep problem, the rollout is genuinely nonlinear in
//! the controls (translation depends on the accumulated heading), so the
//! constraint Jacobian chains analytic per-step derivatives through
//! forward-accumulated pose sensitivities. Barrier decay rows soften with
//! slack exactly as in the footstep planner; the speed and turn bounds stay
//! hard.

use crate::{DdCommand, DdPose};
use lip_core::{LipParams, LipState, StanceFoot};
use lip_mpc::solver::{solve_alm, AlmOptions, DenseNlp, Evaluation, StopReason};
use lip_mpc::{stage_cost_gradient, NlpStatus, PlanError, PlannerConfig, Weights};
use nalgebra::{DVector, Matrix3, Matrix3xX, Vector2, Vector3};
use safety_constraints::{dcbf_residual, CbfConfig, KinematicLimits, Obstacle};
use std::time::{Duration, Instant};

/// Result of one unicycle planning call.
#[derive(Debug, Clone)]
pub struct DdSolution {
    /// Planned commands, one per horizon step; execute the first.
    pub commands: Vec<DdCommand>,
    /// Predicted poses after each planned step.
    pub poses: Vec<DdPose>,
    pub status: NlpStatus,
    /// Stage costs plus slack penalty at the returned point.
    pub objective: f64,
    /// Largest barrier slack; zero when the plan respects every barrier.
    pub max_slack: f64,
    /// Accepted line-search steps across all outer iterations.
    pub iterations: usize,
    pub solve_time: Duration,
    /// Step parity the plan starts at; used to realign warm starts. The
    /// unicycle has no feet, but the walker executing its commands does,
    /// and the horizon advances exactly when the stance flips.
    pub stance_first: StanceFoot,
}

/// Horizon NLP over unicycle commands.
pub struct DdNlp {
    initial: DdPose,
    /// Obstacles already grown by the planning margin.
    obstacles: Vec<Obstacle>,
    limits: KinematicLimits,
    cbf: CbfConfig,
    weights: Weights,
    goal: Vector2<f64>,
    horizon: usize,
    slack_penalty: f64,
    step_duration: f64,
    stance_first: StanceFoot,
    guess: DVector<f64>,
}

/// Pose as rolled out inside the NLP: heading left unwrapped so every
/// residual stays smooth in the controls. Wrapping happens only on the
/// poses handed back to the caller.
#[derive(Clone, Copy)]
struct RawPose {
    x: f64,
    y: f64,
    theta: f64,
}

impl DdNlp {
    fn new(
        initial: DdPose,
        stance_first: StanceFoot,
        obstacles: Vec<Obstacle>,
        config: &PlannerConfig,
        params: &LipParams,
        guess_commands: &[DdCommand],
    ) -> Self {
        let mut problem = Self {
            initial,
            obstacles,
            limits: config.limits,
            cbf: config.cbf,
            weights: config.weights,
            goal: config.goal,
            horizon: config.horizon,
            slack_penalty: config.solver.slack_penalty,
            step_duration: params.step_duration(),
            stance_first,
            guess: DVector::zeros(0),
        };
        problem.guess = problem.guess_from_commands(guess_commands);
        problem
    }

    /// Builds the program exactly as [`dd_plan`] does, without solving it.
    /// The warm start realigns by step parity: matching parity reuses the
    /// previous commands verbatim, flipped parity shifts them by one step
    /// with the last command repeated.
    pub fn from_plan_inputs(
        pose: &DdPose,
        stance_first: StanceFoot,
        obstacles: &[Obstacle],
        config: &PlannerConfig,
        params: &LipParams,
        warm: Option<&DdSolution>,
    ) -> Self {
        let guess_commands = match warm {
            Some(prev) if prev.commands.len() == config.horizon && !prev.commands.is_empty() => {
                if prev.stance_first == stance_first {
                    prev.commands.clone()
                } else {
                    let mut shifted: Vec<DdCommand> = prev.commands[1..].to_vec();
                    shifted.push(*prev.commands.last().expect("nonempty"));
                    shifted
                }
            }
            _ => cold_start(config),
        };
        Self::new(
            *pose,
            stance_first,
            obstacles.to_vec(),
            config,
            params,
            &guess_commands,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_slacks(&self) -> usize {
        self.horizon * self.obstacles.len()
    }

    pub fn initial_guess(&self) -> &DVector<f64> {
        &self.guess
    }

    pub fn commands_from_point(&self, z: &DVector<f64>) -> Vec<DdCommand> {
        (0..self.horizon)
            .map(|k| DdCommand::new(z[2 * k], z[2 * k + 1]))
            .collect()
    }

    /// Stacks commands with the slacks each barrier row needs at that
    /// rollout, which is the exact minimizer of the slack penalty given
    /// the commands.
    pub fn guess_from_commands(&self, commands: &[DdCommand]) -> DVector<f64> {
        assert_eq!(commands.len(), self.horizon, "one command per step");
        let mut z = DVector::zeros(2 * self.horizon + self.num_slacks());
        for (k, cmd) in commands.iter().enumerate() {
            z[2 * k] = cmd.v;
            z[2 * k + 1] = cmd.omega;
        }
        let raw = self.raw_rollout(commands);
        let mut idx = 2 * self.horizon;
        for k in 0..self.horizon {
            let current = position(&raw[k]);
            let next = position(&raw[k + 1]);
            for obstacle in &self.obstacles {
                let c = dcbf_residual(
                    obstacle.barrier(next),
                    obstacle.barrier(current),
                    self.cbf.gamma,
                );
                z[idx] = (-c).max(0.0);
                idx += 1;
            }
        }
        z
    }

    /// Predicted poses after each planned step, headings wrapped. Positions
    /// match the internal rollout bitwise, so residuals re-evaluated on
    /// these poses agree with the solver's.
    pub fn rollout(&self, commands: &[DdCommand]) -> Vec<DdPose> {
        self.raw_rollout(commands)[1..]
            .iter()
            .map(|p| DdPose::new(p.x, p.y, p.theta))
            .collect()
    }

    /// Rollout including the initial pose, heading unwrapped.
    fn raw_rollout(&self, commands: &[DdCommand]) -> Vec<RawPose> {
        let mut raw = Vec::with_capacity(commands.len() + 1);
        let mut pose = RawPose {
            x: self.initial.x,
            y: self.initial.y,
            theta: self.initial.theta,
        };
        raw.push(pose);
        for cmd in commands {
            let (sin_h, cos_h) = pose.theta.sin_cos();
            pose = RawPose {
                x: pose.x + cmd.v * cos_h * self.step_duration,
                y: pose.y + cmd.v * sin_h * self.step_duration,
                theta: pose.theta + cmd.omega,
            };
            raw.push(pose);
        }
        raw
    }

    fn rows_per_step(&self) -> usize {
        self.obstacles.len() + 4
    }
}

fn position(p: &RawPose) -> Vector2<f64> {
    Vector2::new(p.x, p.y)
}

impl DenseNlp for DdNlp {
    fn num_vars(&self) -> usize {
        2 * self.horizon + self.num_slacks()
    }

    fn num_constraints(&self) -> usize {
        self.horizon * self.rows_per_step() + self.num_slacks()
    }

    fn evaluate(&self, z: &DVector<f64>, out: &mut Evaluation) {
        let n = self.num_vars();
        let m = self.num_constraints();
        let horizon = self.horizon;
        let n_cmd = 2 * horizon;
        debug_assert_eq!(z.len(), n);

        let commands = self.commands_from_point(z);
        let raw = self.raw_rollout(&commands);

        // Forward-accumulated sensitivities d pose_k / d commands, one
        // 3 x 2N block per pose; pose_0 is a parameter.
        let mut sens: Vec<Matrix3xX<f64>> = Vec::with_capacity(horizon + 1);
        sens.push(Matrix3xX::zeros(n_cmd));
        for k in 0..horizon {
            let (sin_h, cos_h) = raw[k].theta.sin_cos();
            let v = commands[k].v;
            let a = Matrix3::new(
                1.0, 0.0, -v * sin_h * self.step_duration,
                0.0, 1.0, v * cos_h * self.step_duration,
                0.0, 0.0, 1.0,
            );
            let mut next = &a * &sens[k];
            next[(0, 2 * k)] += cos_h * self.step_duration;
            next[(1, 2 * k)] += sin_h * self.step_duration;
            next[(2, 2 * k + 1)] += 1.0;
            sens.push(next);
        }

        // Objective: stage costs over the predicted poses plus the linear
        // slack penalty, exact as in the footstep planner. The gradient
        // chains the pose gradient through the sensitivities.
        out.objective = 0.0;
        out.gradient.fill(0.0);
        for k in 1..=horizon {
            let proxy = LipState::new(raw[k].x, 0.0, raw[k].y, 0.0, raw[k].theta);
            let (cost, grad5) = stage_cost_gradient(&proxy, self.goal, &self.weights);
            out.objective += cost;
            let grad3 = Vector3::new(grad5[0], grad5[2], grad5[4]);
            let chained = sens[k].tr_mul(&grad3);
            for col in 0..n_cmd {
                out.gradient[col] += chained[col];
            }
        }
        for i in n_cmd..n {
            out.objective += self.slack_penalty * z[i];
            out.gradient[i] = self.slack_penalty;
        }

        out.residuals.fill(0.0);
        out.jacobian.fill(0.0);
        debug_assert_eq!(out.residuals.len(), m);

        let mut row = 0;
        let mut slack = n_cmd;
        for k in 0..horizon {
            let current = position(&raw[k]);
            let next = position(&raw[k + 1]);

            // Barrier decay per obstacle, softened by its slack variable.
            for obstacle in &self.obstacles {
                let c = dcbf_residual(
                    obstacle.barrier(next),
                    obstacle.barrier(current),
                    self.cbf.gamma,
                );
                out.residuals[row] = c + z[slack];
                let g_next = obstacle.barrier_gradient(next);
                let g_cur = obstacle.barrier_gradient(current) * (self.cbf.gamma - 1.0);
                for col in 0..n_cmd {
                    out.jacobian[(row, col)] = g_next.x * sens[k + 1][(0, col)]
                        + g_next.y * sens[k + 1][(1, col)]
                        + g_cur.x * sens[k][(0, col)]
                        + g_cur.y * sens[k][(1, col)];
                }
                out.jacobian[(row, slack)] = 1.0;
                row += 1;
                slack += 1;
            }

            // Hard speed band and turn bounds on the commands themselves.
            let v = commands[k].v;
            let w = commands[k].omega;
            out.residuals[row] = v - self.limits.vel_long_min;
            out.jacobian[(row, 2 * k)] = 1.0;
            out.residuals[row + 1] = self.limits.vel_long_max - v;
            out.jacobian[(row + 1, 2 * k)] = -1.0;
            out.residuals[row + 2] = w + self.limits.max_turn_per_step;
            out.jacobian[(row + 2, 2 * k + 1)] = 1.0;
            out.residuals[row + 3] = self.limits.max_turn_per_step - w;
            out.jacobian[(row + 3, 2 * k + 1)] = -1.0;
            row += 4;
        }

        // Slack nonnegativity.
        for i in 0..self.num_slacks() {
            out.residuals[row + i] = z[n_cmd + i];
            out.jacobian[(row + i, n_cmd + i)] = 1.0;
        }
    }
}

/// Commands that cruise straight ahead at the middle of the speed band.
fn cold_start(config: &PlannerConfig) -> Vec<DdCommand> {
    let mid = 0.5 * (config.limits.vel_long_min + config.limits.vel_long_max);
    vec![DdCommand::new(mid, 0.0); config.horizon]
}

/// One unicycle planning call.
///
/// `obstacles` must already be inflated by the planning margin.
/// `stance_first` is the step parity the plan starts at; a warm start from
/// the previous solution is realigned exactly as in the footstep planner:
/// matching parity reuses it verbatim, flipped parity shifts it by one step
/// with the last command repeated.
pub fn dd_plan(
    pose: &DdPose,
    stance_first: StanceFoot,
    obstacles: &[Obstacle],
    config: &PlannerConfig,
    params: &LipParams,
    warm: Option<&DdSolution>,
) -> Result<DdSolution, PlanError> {
    config.validate()?;
    if !(pose.x.is_finite() && pose.y.is_finite() && pose.theta.is_finite()) {
        return Err(PlanError::InvalidConfig("initial pose must be finite".into()));
    }

    let problem = DdNlp::from_plan_inputs(pose, stance_first, obstacles, config, params, warm);
    Ok(solve_dd(&problem, config))
}

fn solve_dd(problem: &DdNlp, config: &PlannerConfig) -> DdSolution {
    let started = Instant::now();
    let options = AlmOptions {
        feasibility_tol: config.solver.feasibility_tol,
        optimality_tol: config.solver.optimality_tol,
        max_major_iterations: config.solver.max_iterations,
        ..AlmOptions::default()
    };
    let outcome = solve_alm(problem, problem.initial_guess().clone(), &options);

    // Re-derive the slacks from the returned commands, as in the footstep
    // planner, so the slack readout is free of solver noise.
    let commands = problem.commands_from_point(&outcome.point);
    let polished = problem.guess_from_commands(&commands);
    let mut eval = Evaluation::zeros(problem.num_vars(), problem.num_constraints());
    problem.evaluate(&polished, &mut eval);

    let n_cmd = 2 * problem.horizon();
    let max_slack = polished
        .rows(n_cmd, problem.num_slacks())
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

    DdSolution {
        poses: problem.rollout(&commands),
        commands,
        status,
        objective: eval.objective,
        max_slack,
        iterations: outcome.inner_iterations,
        solve_time: started.elapsed(),
        stance_first: problem.stance_first,
    }
}

/// Largest violation among the speed and turn rows, which carry no slack.
fn hard_rows_violation(problem: &DdNlp, eval: &Evaluation) -> f64 {
    let per_step = problem.rows_per_step();
    let n_obs = problem.obstacles.len();
    let mut worst = 0.0_f64;
    for k in 0..problem.horizon() {
        for row in (k * per_step + n_obs)..((k + 1) * per_step) {
            worst = worst.max(-eval.residuals[row]);
        }
    }
    worst
}
