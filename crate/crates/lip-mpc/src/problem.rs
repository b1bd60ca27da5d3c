//! Horizon NLP over foothold and turn commands.
//!
//! The decision vector is `[u_0 .. u_{N-1}, s]`: three entries per step
//! (foothold x, foothold y, heading increment) followed by one slack
//! variable per barrier row. Predicted states are eliminated by single
//! shooting: they are exact affine functions of the controls, so the
//! constraint Jacobian with respect to the controls follows from the chain
//! rule through precomputed sensitivity blocks. Barrier decay rows are
//! softened by their slack (`c + s >= 0`, `s >= 0`, linear penalty on
//! `s`); every kinematic row stays hard.

use crate::planner::{stage_cost_gradient, PlannerConfig, Weights};
use crate::solver::{DenseNlp, Evaluation};
use lip_core::{step_matrices, LipParams, LipState, StanceFoot, StepControl};
use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector2};
use safety_constraints::{
    constraint_bundle_with, BundleLayout, CbfConfig, KinematicLimits, Obstacle,
};

pub struct NlpProblem {
    pub(crate) initial: LipState,
    pub(crate) stance_first: StanceFoot,
    /// Obstacles already grown by the planning margin.
    pub(crate) obstacles: Vec<Obstacle>,
    pub(crate) limits: KinematicLimits,
    pub(crate) cbf: CbfConfig,
    pub(crate) weights: Weights,
    pub(crate) goal: Vector2<f64>,
    pub(crate) horizon: usize,
    pub(crate) slack_penalty: f64,
    pub(crate) maneuverability: bool,
    step_a: SMatrix<f64, 5, 5>,
    step_b: SMatrix<f64, 5, 3>,
    /// Block lower-triangular map from stacked controls to stacked states.
    sensitivity: DMatrix<f64>,
    pub(crate) guess: DVector<f64>,
}

impl NlpProblem {
    pub(crate) fn new(
        initial: LipState,
        stance_first: StanceFoot,
        obstacles: Vec<Obstacle>,
        config: &PlannerConfig,
        params: &LipParams,
        guess_controls: &[StepControl],
    ) -> Self {
        let n = config.horizon;
        let mats = step_matrices(params, params.step_duration());

        // Powers of the step matrix up to A^(N-1).
        let mut powers: Vec<SMatrix<f64, 5, 5>> = Vec::with_capacity(n);
        powers.push(SMatrix::identity());
        for i in 1..n {
            let next = powers[i - 1] * mats.state_transition;
            powers.push(next);
        }

        // d x_m / d u_j = A^(m-1-j) B for j < m.
        let mut sensitivity = DMatrix::zeros(5 * n, 3 * n);
        for m in 1..=n {
            for j in 0..m {
                let block = powers[m - 1 - j] * mats.control_input;
                sensitivity
                    .view_mut((5 * (m - 1), 3 * j), (5, 3))
                    .copy_from(&block);
            }
        }

        let mut problem = Self {
            initial,
            stance_first,
            obstacles,
            limits: config.limits,
            cbf: config.cbf,
            weights: config.weights,
            goal: config.goal,
            horizon: n,
            slack_penalty: config.solver.slack_penalty,
            maneuverability: config.maneuverability_enabled,
            step_a: mats.state_transition,
            step_b: mats.control_input,
            sensitivity,
            guess: DVector::zeros(0),
        };
        problem.guess = problem.guess_from_controls(guess_controls);
        problem
    }

    pub fn layout(&self) -> BundleLayout {
        BundleLayout {
            horizon: self.horizon,
            n_obstacles: self.obstacles.len(),
            maneuverability: self.maneuverability,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_slacks(&self) -> usize {
        self.horizon * self.obstacles.len()
    }

    /// Starting point handed to the solver.
    pub fn initial_guess(&self) -> &DVector<f64> {
        &self.guess
    }

    /// Full decision vector for given controls, with each slack at its
    /// optimal value (the positive part of the violated barrier row).
    pub fn point_from_controls(&self, controls: &[StepControl]) -> DVector<f64> {
        self.guess_from_controls(controls)
    }

    pub(crate) fn controls_from_point(&self, z: &DVector<f64>) -> Vec<StepControl> {
        (0..self.horizon)
            .map(|k| StepControl::new(z[3 * k], z[3 * k + 1], z[3 * k + 2]))
            .collect()
    }

    /// Exact rollout of the step dynamics. Headings are left unwrapped so
    /// the trajectory stays an affine function of the controls; every
    /// residual downstream is built from positions and trigonometric terms,
    /// which wrapping cannot change.
    pub(crate) fn rollout(&self, controls: &[StepControl]) -> Vec<LipState> {
        let mut states = Vec::with_capacity(controls.len());
        let mut x: SVector<f64, 5> = self.initial.to_vector();
        for u in controls {
            x = self.step_a * x + self.step_b * u.to_vector();
            states.push(LipState {
                pos_x: x[0],
                vel_x: x[1],
                pos_y: x[2],
                vel_y: x[3],
                heading: x[4],
            });
        }
        states
    }

    fn bundle(&self, states: &[LipState], controls: &[StepControl]) -> safety_constraints::ConstraintBundle {
        constraint_bundle_with(
            &self.initial,
            states,
            controls,
            self.stance_first,
            &self.obstacles,
            &self.limits,
            &self.cbf,
            self.maneuverability,
        )
        .expect("inputs validated at assembly")
    }

    /// Builds a full starting vector from control values, with each slack
    /// initialized to the smallest value making its barrier row feasible.
    pub(crate) fn guess_from_controls(&self, controls: &[StepControl]) -> DVector<f64> {
        let n = self.horizon;
        let n_obs = self.obstacles.len();
        let mut z = DVector::zeros(3 * n + n * n_obs);
        for (k, u) in controls.iter().enumerate() {
            z[3 * k] = u.foot_x;
            z[3 * k + 1] = u.foot_y;
            z[3 * k + 2] = u.omega;
        }
        if n_obs > 0 {
            let states = self.rollout(controls);
            let bundle = self.bundle(&states, controls);
            for k in 0..n {
                for o in 0..n_obs {
                    let c = bundle.residuals[bundle.layout.dcbf_row(k, o)];
                    z[3 * n + k * n_obs + o] = (-c).max(0.0);
                }
            }
        }
        z
    }
}

impl DenseNlp for NlpProblem {
    fn num_vars(&self) -> usize {
        3 * self.horizon + self.num_slacks()
    }

    fn num_constraints(&self) -> usize {
        self.layout().total_rows() + self.num_slacks()
    }

    fn evaluate(&self, z: &DVector<f64>, out: &mut Evaluation) {
        let n = self.horizon;
        let n_obs = self.obstacles.len();
        let n_ctrl = 3 * n;
        let n_slack = n * n_obs;
        let controls = self.controls_from_point(z);
        let states = self.rollout(&controls);

        // Objective: stage costs over predicted states plus the linear
        // slack penalty. A linear cost with nonnegativity rows is an exact
        // penalty: whenever the barriers can hold, the minimizer pins every
        // slack at zero instead of trading a sliver of violation against
        // the stage costs. The control gradient is the stacked state
        // gradient pushed through the sensitivity map.
        let mut objective = 0.0;
        let mut state_grads = DVector::zeros(5 * n);
        for (k, x) in states.iter().enumerate() {
            let (cost, grad) = stage_cost_gradient(x, self.goal, &self.weights);
            objective += cost;
            state_grads.rows_mut(5 * k, 5).copy_from(&grad);
        }
        out.gradient
            .rows_mut(0, n_ctrl)
            .gemv_tr(1.0, &self.sensitivity, &state_grads, 0.0);
        for j in 0..n_slack {
            objective += self.slack_penalty * z[n_ctrl + j];
            out.gradient[n_ctrl + j] = self.slack_penalty;
        }
        out.objective = objective;

        // Constraints: the stacked bundle with slack added to each barrier
        // row, then slack nonnegativity.
        let bundle = self.bundle(&states, &controls);
        let m_bundle = bundle.layout.total_rows();
        out.residuals.rows_mut(0, m_bundle).copy_from(&bundle.residuals);
        for k in 0..n {
            for o in 0..n_obs {
                let row = bundle.layout.dcbf_row(k, o);
                out.residuals[row] += z[n_ctrl + k * n_obs + o];
            }
        }
        for j in 0..n_slack {
            out.residuals[m_bundle + j] = z[n_ctrl + j];
        }

        // Only the chained block and the slack identity entries can ever be
        // nonzero; everything else stays at the zero the buffer was created
        // with, so no full-matrix clear is needed between evaluations.
        let j_states = bundle.jacobian.columns(0, 5 * n);
        let j_controls = bundle.jacobian.columns(5 * n, 3 * n);
        let mut chained = out.jacobian.view_mut((0, 0), (m_bundle, n_ctrl));
        chained.gemm(1.0, &j_states, &self.sensitivity, 0.0);
        chained += j_controls;
        for k in 0..n {
            for o in 0..n_obs {
                let row = bundle.layout.dcbf_row(k, o);
                out.jacobian[(row, n_ctrl + k * n_obs + o)] = 1.0;
            }
        }
        for j in 0..n_slack {
            out.jacobian[(m_bundle + j, n_ctrl + j)] = 1.0;
        }
    }
}
