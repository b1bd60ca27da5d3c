//! One closed-loop episode: walk from start toward goal, replanning
//! mid-step, until arrival, collision, or the step budget runs out.

use crate::environment::Environment;
use crate::rng::SplitMix64;
use crate::SimError;
use dd_baseline::{dd_plan, deadbeat_foot_placement, DdPose, DdSolution, DEFAULT_LATERAL_OFFSET};
use lip_core::{
    integrate_within_step, step_dynamics, LipParams, LipState, StanceFoot, StepControl,
};
use lip_mpc::{plan, NlpSolution, NlpStatus, PlannerConfig};
use nalgebra::Vector2;
use safety_constraints::Obstacle;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

/// Distance to the goal at which an episode counts as finished, m.
pub const ARRIVAL_RADIUS: f64 = 0.3;

/// Barrier slack above this level marks a replan as a violation.
pub const SLACK_VIOLATION_TOL: f64 = 1e-6;

/// Which planner drives the walker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerKind {
    /// Footstep planner on the step-to-step walker model.
    LipMpc,
    /// Differential-drive baseline tracked through deadbeat foot placement.
    DdMpc,
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PlannerKind::LipMpc => "lip",
            PlannerKind::DdMpc => "dd",
        };
        f.write_str(name)
    }
}

impl FromStr for PlannerKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lip" => Ok(PlannerKind::LipMpc),
            "dd" => Ok(PlannerKind::DdMpc),
            other => Err(SimError::InvalidOptions(format!(
                "unknown planner {other:?}, expected \"lip\" or \"dd\""
            ))),
        }
    }
}

/// Zero-mean Gaussian push applied to the walker at each step boundary
/// after the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSpec {
    /// Position noise per axis, m.
    pub sigma_pos: f64,
    /// Velocity noise per axis, m/s.
    pub sigma_vel: f64,
    pub seed: u64,
}

/// Episode length and replanning cadence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub max_steps: usize,
    /// Plans computed per step; the step splits into this many intervals.
    pub replans_per_step: usize,
    pub disturbance: Option<DisturbanceSpec>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            max_steps: 100,
            replans_per_step: 8,
            disturbance: None,
        }
    }
}

/// One logged instant of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Simulation time, s.
    pub time: f64,
    /// Step index; one past the last step marks the terminal boundary.
    pub step: usize,
    pub state: LipState,
    /// Control executing at this instant.
    pub control: StepControl,
    pub stance: StanceFoot,
    /// Smallest barrier value over the true obstacles; negative inside one.
    pub min_h_true: f64,
    /// Smallest barrier value over the margin-inflated obstacles.
    pub min_h_inflated: f64,
    /// Status of the most recent replan.
    pub status: NlpStatus,
    /// Barrier slack of the most recent replan.
    pub max_slack: f64,
}

/// Where the committed plan expected the walker at the next boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryPrediction {
    Lip(LipState),
    Dd(DdPose),
}

impl BoundaryPrediction {
    pub fn position(&self) -> Vector2<f64> {
        match self {
            BoundaryPrediction::Lip(x) => x.position(),
            BoundaryPrediction::Dd(p) => Vector2::new(p.x, p.y),
        }
    }
}

/// A committed one-step prediction paired with the boundary state the
/// walker actually reached, taken before any disturbance at that boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub prediction: BoundaryPrediction,
    pub actual: LipState,
}

/// Outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeFlags {
    /// The walker came within [`ARRIVAL_RADIUS`] of the goal.
    pub finish: bool,
    /// Some replan reported a violation: relaxed slack or a solver
    /// failure. Iteration-capped best-effort plans do not count.
    pub violate: bool,
    /// The walker entered the inflated margin region of an obstacle.
    pub enter: bool,
    /// The walker entered a true obstacle.
    pub collide: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub samples: Vec<Sample>,
    /// One record per completed step.
    pub step_records: Vec<StepRecord>,
    pub outcome: OutcomeFlags,
    /// Steps begun before the episode ended.
    pub steps: usize,
    pub wall_time: Duration,
}

/// Result of one replan attempt; the latest adopted plan lives elsewhere.
struct RefreshOutcome {
    status: NlpStatus,
    max_slack: f64,
}

#[allow(clippy::too_many_arguments)]
fn refresh_lip(
    state: &LipState,
    u_current: &StepControl,
    stance_current: StanceFoot,
    t_remaining: f64,
    obstacles: &[Obstacle],
    cfg: &PlannerConfig,
    params: &LipParams,
    latest: &mut Option<NlpSolution>,
) -> RefreshOutcome {
    // The planner inflates the true obstacles by its own margin.
    match plan(
        state,
        u_current,
        stance_current,
        t_remaining,
        obstacles,
        cfg,
        params,
        latest.as_ref(),
    ) {
        Ok(sol) => {
            let outcome = RefreshOutcome {
                status: sol.status,
                max_slack: sol.max_slack,
            };
            // A failed solve never replaces a usable plan; best-effort
            // iterates from a capped solve do.
            if sol.status != NlpStatus::Failed {
                *latest = Some(sol);
            }
            outcome
        }
        Err(_) => RefreshOutcome {
            status: NlpStatus::Failed,
            max_slack: 0.0,
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn refresh_dd(
    state: &LipState,
    u_current: &StepControl,
    stance_current: StanceFoot,
    t_remaining: f64,
    inflated: &[Obstacle],
    cfg: &PlannerConfig,
    params: &LipParams,
    latest: &mut Option<DdSolution>,
) -> Result<RefreshOutcome, SimError> {
    // The baseline plans boundary-to-boundary, so the walker state is
    // first carried to the upcoming boundary under the committed control,
    // mirroring what the footstep planner does internally.
    let boundary = integrate_within_step(state, u_current.foot(), u_current.omega, t_remaining, params)?;
    let pose = DdPose::new(boundary.pos_x, boundary.pos_y, boundary.heading);
    Ok(
        match dd_plan(&pose, stance_current.flipped(), inflated, cfg, params, latest.as_ref()) {
            Ok(sol) => {
                let outcome = RefreshOutcome {
                    status: sol.status,
                    max_slack: sol.max_slack,
                };
                if sol.status != NlpStatus::Failed {
                    *latest = Some(sol);
                }
                outcome
            }
            Err(_) => RefreshOutcome {
                status: NlpStatus::Failed,
                max_slack: 0.0,
            },
        },
    )
}

fn min_barrier(obstacles: &[Obstacle], point: Vector2<f64>) -> f64 {
    obstacles
        .iter()
        .map(|o| o.barrier(point))
        .fold(f64::INFINITY, f64::min)
}

/// Runs one episode and logs every sub-interval of every step.
///
/// The walker starts at rest over its stance foot, facing the goal. Each
/// step commits the first move of the latest plan at the boundary, then
/// replans `replans_per_step` times while the step executes; plans made
/// mid-step take effect at the next boundary. The episode ends on arrival,
/// on contact with a true obstacle, or after `max_steps` steps.
///
/// The goal inside `config` is ignored; the environment's goal is used.
pub fn run_episode(
    env: &Environment,
    planner: PlannerKind,
    config: &PlannerConfig,
    params: &LipParams,
    options: &EpisodeOptions,
) -> Result<EpisodeLog, SimError> {
    if options.max_steps == 0 || options.replans_per_step == 0 {
        return Err(SimError::InvalidOptions(
            "max_steps and replans_per_step must be at least 1".into(),
        ));
    }
    if let Some(d) = &options.disturbance {
        let valid = d.sigma_pos.is_finite()
            && d.sigma_vel.is_finite()
            && d.sigma_pos >= 0.0
            && d.sigma_vel >= 0.0;
        if !valid {
            return Err(SimError::InvalidOptions(format!(
                "disturbance sigmas must be finite and nonnegative, got {} and {}",
                d.sigma_pos, d.sigma_vel
            )));
        }
    }
    let mut cfg = *config;
    cfg.goal = env.goal;
    cfg.validate()?;

    let inflated = env
        .obstacles
        .iter()
        .map(|o| o.inflated(cfg.cbf.inflation_margin))
        .collect::<Result<Vec<_>, _>>()?;

    let step_duration = params.step_duration();
    let dt = step_duration / options.replans_per_step as f64;
    let mut noise = options.disturbance.map(|d| SplitMix64::new(d.seed));

    // Rest over the initial foothold, facing the goal.
    let to_goal = env.goal - env.start;
    let mut state = LipState::new(
        env.start.x,
        0.0,
        env.start.y,
        0.0,
        to_goal.y.atan2(to_goal.x),
    );
    let mut u_current = StepControl::new(env.start.x, env.start.y, 0.0);
    let mut stance_current = StanceFoot::Left;

    let mut lip_latest: Option<NlpSolution> = None;
    let mut dd_latest: Option<DdSolution> = None;

    let mut samples = Vec::new();
    let mut step_records = Vec::new();
    let mut outcome = OutcomeFlags::default();
    let mut steps = 0;
    let mut terminated = false;
    let mut status = NlpStatus::MaxIterations;
    let mut max_slack = 0.0;
    let clock = Instant::now();

    // Bootstrap plan for the very first commit: the boundary is now.
    match planner {
        PlannerKind::LipMpc => {
            refresh_lip(
                &state,
                &u_current,
                stance_current,
                0.0,
                &env.obstacles,
                &cfg,
                params,
                &mut lip_latest,
            );
        }
        PlannerKind::DdMpc => {
            refresh_dd(
                &state,
                &u_current,
                stance_current,
                0.0,
                &inflated,
                &cfg,
                params,
                &mut dd_latest,
            )?;
        }
    }

    'episode: for step in 0..options.max_steps {
        steps = step + 1;
        let stance_next = stance_current.flipped();

        // Commit the first planned move; a plan whose stance parity does
        // not match the upcoming step is stale and falls through to the
        // hold fallback, as does a missing plan.
        let prediction = match planner {
            PlannerKind::LipMpc => match &lip_latest {
                Some(sol) if sol.stance_first == stance_next => {
                    u_current = sol.controls[0];
                    BoundaryPrediction::Lip(sol.states[0])
                }
                _ => BoundaryPrediction::Lip(step_dynamics(&state, &u_current, params)),
            },
            PlannerKind::DdMpc => match &dd_latest {
                Some(sol) if sol.stance_first == stance_next => {
                    let cmd = sol.commands[0];
                    let (sin_h, cos_h) = state.heading.sin_cos();
                    let v_des = Vector2::new(cmd.v * cos_h, cmd.v * sin_h);
                    let foot =
                        deadbeat_foot_placement(&state, stance_next, v_des, params, DEFAULT_LATERAL_OFFSET)
                            .foot();
                    u_current = StepControl::new(foot.x, foot.y, cmd.omega);
                    BoundaryPrediction::Dd(sol.poses[0])
                }
                _ => BoundaryPrediction::Lip(step_dynamics(&state, &u_current, params)),
            },
        };
        stance_current = stance_next;

        // The push lands at the boundary, after the control is committed.
        if step > 0 {
            if let (Some(rng), Some(d)) = (noise.as_mut(), options.disturbance.as_ref()) {
                state.pos_x += d.sigma_pos * rng.standard_normal();
                state.pos_y += d.sigma_pos * rng.standard_normal();
                state.vel_x += d.sigma_vel * rng.standard_normal();
                state.vel_y += d.sigma_vel * rng.standard_normal();
            }
        }

        for j in 0..options.replans_per_step {
            let t_remaining = step_duration - j as f64 * dt;
            let refreshed = match planner {
                PlannerKind::LipMpc => refresh_lip(
                    &state,
                    &u_current,
                    stance_current,
                    t_remaining,
                    &env.obstacles,
                    &cfg,
                    params,
                    &mut lip_latest,
                ),
                PlannerKind::DdMpc => refresh_dd(
                    &state,
                    &u_current,
                    stance_current,
                    t_remaining,
                    &inflated,
                    &cfg,
                    params,
                    &mut dd_latest,
                )?,
            };
            status = refreshed.status;
            max_slack = refreshed.max_slack;

            let position = state.position();
            let min_h_true = min_barrier(&env.obstacles, position);
            let min_h_inflated = min_barrier(&inflated, position);
            samples.push(Sample {
                time: step as f64 * step_duration + j as f64 * dt,
                step,
                state,
                control: u_current,
                stance: stance_current,
                min_h_true,
                min_h_inflated,
                status,
                max_slack,
            });

            outcome.enter |= min_h_inflated < 0.0;
            outcome.collide |= min_h_true < 0.0;
            if (position - env.goal).norm() <= ARRIVAL_RADIUS && !outcome.collide {
                outcome.finish = true;
                terminated = true;
                break 'episode;
            }
            if outcome.collide {
                terminated = true;
                break 'episode;
            }

            state = integrate_within_step(&state, u_current.foot(), u_current.omega, dt, params)?;
        }

        step_records.push(StepRecord {
            prediction,
            actual: state,
        });
    }

    if !terminated {
        // The loop left the state at the final boundary; log it so the
        // last reachable instant takes part in classification.
        let position = state.position();
        let min_h_true = min_barrier(&env.obstacles, position);
        let min_h_inflated = min_barrier(&inflated, position);
        samples.push(Sample {
            time: options.max_steps as f64 * step_duration,
            step: options.max_steps,
            state,
            control: u_current,
            stance: stance_current,
            min_h_true,
            min_h_inflated,
            status,
            max_slack,
        });
        outcome.enter |= min_h_inflated < 0.0;
        outcome.collide |= min_h_true < 0.0;
        outcome.finish = (position - env.goal).norm() <= ARRIVAL_RADIUS && !outcome.collide;
    }

    outcome.enter |= outcome.collide;
    outcome.violate = samples.iter().any(|s| {
        s.status == NlpStatus::SlackRelaxed
            || s.status == NlpStatus::Failed
            || s.max_slack > SLACK_VIOLATION_TOL
    });

    Ok(EpisodeLog {
        samples,
        step_records,
        outcome,
        steps,
        wall_time: clock.elapsed(),
    })
}

/// Recomputes the outcome flags of a finished episode from its samples.
///
/// The barrier minima are evaluated afresh against the environment rather
/// than read from the log, so the result independently checks what the
/// loop recorded. `margin` must be the inflation margin the episode ran
/// with for the enter flag to line up.
pub fn classify(
    log: &EpisodeLog,
    env: &Environment,
    margin: f64,
) -> Result<OutcomeFlags, SimError> {
    let inflated = env
        .obstacles
        .iter()
        .map(|o| o.inflated(margin))
        .collect::<Result<Vec<_>, _>>()?;

    let mut flags = OutcomeFlags::default();
    for sample in &log.samples {
        let position = sample.state.position();
        flags.enter |= min_barrier(&inflated, position) < 0.0;
        flags.collide |= min_barrier(&env.obstacles, position) < 0.0;
        flags.violate |= sample.status == NlpStatus::SlackRelaxed
            || sample.status == NlpStatus::Failed
            || sample.max_slack > SLACK_VIOLATION_TOL;
    }
    if let Some(last) = log.samples.last() {
        flags.finish =
            (last.state.position() - env.goal).norm() <= ARRIVAL_RADIUS && !flags.collide;
    }
    flags.enter |= flags.collide;
    Ok(flags)
}
