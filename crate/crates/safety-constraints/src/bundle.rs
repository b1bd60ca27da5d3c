use crate::{
    dcbf_residual, maneuverability_jacobians, maneuverability_residuals, reachability_jacobians,
    reachability_residuals, turn_rate_jacobian, turn_rate_residuals, velocity_jacobian,
    velocity_residuals, CbfConfig, KinematicLimits, Obstacle, SafetyError,
};
use lip_core::{LipState, StanceFoot, StepControl};
use nalgebra::{DMatrix, DVector};

/// Row and column bookkeeping for a stacked constraint bundle.
///
/// Rows are grouped per horizon step `k` in a fixed order: one barrier decay
/// row per obstacle, two reach rows, two turn rows, two turn-speed coupling
/// rows (when enabled), then four velocity band rows. Columns of the
/// Jacobian cover the stacked free variables `[x_1 .. x_N, u_0 .. u_{N-1}]`;
/// the initial state is a parameter and contributes no columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleLayout {
    pub horizon: usize,
    pub n_obstacles: usize,
    pub maneuverability: bool,
}

impl BundleLayout {
    pub fn rows_per_step(&self) -> usize {
        self.n_obstacles + 2 + 2 + if self.maneuverability { 2 } else { 0 } + 4
    }

    pub fn total_rows(&self) -> usize {
        self.horizon * self.rows_per_step()
    }

    /// Jacobian columns: five per predicted state, three per control.
    pub fn total_cols(&self) -> usize {
        8 * self.horizon
    }

    pub fn dcbf_row(&self, k: usize, obstacle: usize) -> usize {
        debug_assert!(obstacle < self.n_obstacles);
        k * self.rows_per_step() + obstacle
    }

    pub fn reach_row(&self, k: usize) -> usize {
        k * self.rows_per_step() + self.n_obstacles
    }

    pub fn turn_row(&self, k: usize) -> usize {
        self.reach_row(k) + 2
    }

    pub fn maneuver_row(&self, k: usize) -> Option<usize> {
        self.maneuverability.then(|| self.turn_row(k) + 2)
    }

    pub fn velocity_row(&self, k: usize) -> usize {
        self.turn_row(k) + 2 + if self.maneuverability { 2 } else { 0 }
    }

    pub fn state_col(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.horizon);
        5 * (k - 1)
    }

    pub fn control_col(&self, k: usize) -> usize {
        debug_assert!(k < self.horizon);
        5 * self.horizon + 3 * k
    }
}

/// Stacked inequality residuals (feasible iff all nonnegative) and their
/// dense Jacobian over one planning horizon.
#[derive(Debug, Clone)]
pub struct ConstraintBundle {
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub layout: BundleLayout,
}

/// Stacks every constraint family over the horizon. See
/// [`constraint_bundle_with`] for the variant that can drop the turn-speed
/// coupling rows.
///
/// `obstacles` are used as given; inflate them beforehand if a safety
/// margin is wanted. `stance_first` is the stance parity of horizon step 0
/// and alternates from there.
pub fn constraint_bundle(
    initial: &LipState,
    states: &[LipState],
    controls: &[StepControl],
    stance_first: StanceFoot,
    obstacles: &[Obstacle],
    limits: &KinematicLimits,
    cbf: &CbfConfig,
) -> Result<ConstraintBundle, SafetyError> {
    constraint_bundle_with(
        initial,
        states,
        controls,
        stance_first,
        obstacles,
        limits,
        cbf,
        true,
    )
}

/// [`constraint_bundle`] with an explicit switch for the turn-speed
/// coupling rows, used by ablation studies.
#[allow(clippy::too_many_arguments)]
pub fn constraint_bundle_with(
    initial: &LipState,
    states: &[LipState],
    controls: &[StepControl],
    stance_first: StanceFoot,
    obstacles: &[Obstacle],
    limits: &KinematicLimits,
    cbf: &CbfConfig,
    maneuverability: bool,
) -> Result<ConstraintBundle, SafetyError> {
    limits.validate()?;
    cbf.validate()?;
    if states.is_empty() {
        return Err(SafetyError::HorizonMismatch(
            "horizon must contain at least one step".into(),
        ));
    }
    if states.len() != controls.len() {
        return Err(SafetyError::HorizonMismatch(format!(
            "{} states vs {} controls",
            states.len(),
            controls.len()
        )));
    }

    let layout = BundleLayout {
        horizon: states.len(),
        n_obstacles: obstacles.len(),
        maneuverability,
    };
    let mut residuals = DVector::zeros(layout.total_rows());
    let mut jacobian = DMatrix::zeros(layout.total_rows(), layout.total_cols());

    let mut stance = stance_first;
    for k in 0..layout.horizon {
        // State at the start of step k; for k = 0 it is the fixed initial
        // state and has no Jacobian columns.
        let (x_start, start_col) = if k == 0 {
            (initial, None)
        } else {
            (&states[k - 1], Some(layout.state_col(k)))
        };
        let x_end = &states[k];
        let end_col = layout.state_col(k + 1);
        let u = &controls[k];
        let u_col = layout.control_col(k);

        for (o, obs) in obstacles.iter().enumerate() {
            let h_start = obs.barrier(x_start.position());
            let h_end = obs.barrier(x_end.position());
            let row = layout.dcbf_row(k, o);
            residuals[row] = dcbf_residual(h_end, h_start, cbf.gamma);
            let g_end = obs.barrier_gradient(x_end.position());
            jacobian[(row, end_col)] = g_end.x;
            jacobian[(row, end_col + 2)] = g_end.y;
            if let Some(col) = start_col {
                let g_start = obs.barrier_gradient(x_start.position());
                jacobian[(row, col)] = (cbf.gamma - 1.0) * g_start.x;
                jacobian[(row, col + 2)] = (cbf.gamma - 1.0) * g_start.y;
            }
        }

        let reach = reachability_residuals(x_start, u, limits);
        let (reach_jx, reach_ju) = reachability_jacobians(x_start, u);
        let row = layout.reach_row(k);
        for i in 0..2 {
            residuals[row + i] = reach[i];
            for c in 0..3 {
                jacobian[(row + i, u_col + c)] = reach_ju[(i, c)];
            }
            if let Some(col) = start_col {
                for c in 0..5 {
                    jacobian[(row + i, col + c)] = reach_jx[(i, c)];
                }
            }
        }

        let turn = turn_rate_residuals(u, limits);
        let turn_ju = turn_rate_jacobian();
        let row = layout.turn_row(k);
        for i in 0..2 {
            residuals[row + i] = turn[i];
            for c in 0..3 {
                jacobian[(row + i, u_col + c)] = turn_ju[(i, c)];
            }
        }

        if let Some(row) = layout.maneuver_row(k) {
            let man = maneuverability_residuals(x_start, u, limits);
            let (man_jx, man_ju) = maneuverability_jacobians(x_start, u, limits);
            for i in 0..2 {
                residuals[row + i] = man[i];
                for c in 0..3 {
                    jacobian[(row + i, u_col + c)] = man_ju[(i, c)];
                }
                if let Some(col) = start_col {
                    for c in 0..5 {
                        jacobian[(row + i, col + c)] = man_jx[(i, c)];
                    }
                }
            }
        }

        let vel = velocity_residuals(x_end, stance, limits);
        let vel_jx = velocity_jacobian(x_end, stance);
        let row = layout.velocity_row(k);
        for i in 0..4 {
            residuals[row + i] = vel[i];
            for c in 0..5 {
                jacobian[(row + i, end_col + c)] = vel_jx[(i, c)];
            }
        }

        stance = stance.flipped();
    }

    Ok(ConstraintBundle {
        residuals,
        jacobian,
        layout,
    })
}
