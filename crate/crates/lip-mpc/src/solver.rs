//! Dense augmented Lagrangian solver for small inequality-constrained
//! nonlinear programs.
//!
//! The solver targets problems with tens of variables and at most a few
//! hundred constraints, all smooth, evaluated together with analytic first
//! derivatives. Inequalities use the convention `c(z) >= 0`. The outer loop
//! maintains multiplier estimates and a penalty parameter; each inner loop
//! minimizes the augmented Lagrangian with BFGS and an Armijo line search.
//! Everything is dense, allocation-light, and fully deterministic: the same
//! problem and starting point always produce the same iterates.

use nalgebra::{DMatrix, DVector};

/// One combined evaluation of the problem functions at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: DVector<f64>,
    /// Inequality residuals, feasible iff every entry is nonnegative.
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl Evaluation {
    pub fn zeros(num_vars: usize, num_constraints: usize) -> Self {
        Self {
            objective: 0.0,
            gradient: DVector::zeros(num_vars),
            residuals: DVector::zeros(num_constraints),
            jacobian: DMatrix::zeros(num_constraints, num_vars),
        }
    }

    fn is_finite(&self) -> bool {
        self.objective.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.residuals.iter().all(|v| v.is_finite())
    }
}

/// Smooth nonlinear program with inequality constraints `c(z) >= 0`.
pub trait DenseNlp {
    fn num_vars(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// Fills `out` with objective, gradient, residuals, and Jacobian at `z`.
    /// `out` must originate from [`Evaluation::zeros`] with matching
    /// dimensions; implementations may skip rewriting entries that are zero
    /// for every `z`.
    fn evaluate(&self, z: &DVector<f64>, out: &mut Evaluation);
}

#[derive(Debug, Clone, Copy)]
pub struct AlmOptions {
    /// Largest tolerated constraint violation at the solution.
    pub feasibility_tol: f64,
    /// Infinity-norm bound on the Lagrangian gradient at the solution.
    pub optimality_tol: f64,
    /// Cap on outer multiplier updates.
    pub max_major_iterations: usize,
    /// Cap on BFGS iterations within one outer iteration.
    pub max_inner_iterations: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
}

impl Default for AlmOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            optimality_tol: 1e-6,
            max_major_iterations: 100,
            max_inner_iterations: 200,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e8,
        }
    }
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Feasible to tolerance with a stationary Lagrangian.
    Converged,
    /// Ran out of outer iterations, or the penalty saturated while the
    /// violation stopped improving (locally infeasible).
    IterationLimit,
    /// A non-finite value appeared and could not be stepped around.
    NumericFailure,
}

/// Solver output. `point` is the best iterate seen by a feasibility-first
/// ordering, which is well defined even when the run did not converge.
#[derive(Debug, Clone)]
pub struct AlmOutcome {
    pub point: DVector<f64>,
    pub objective: f64,
    pub residuals: DVector<f64>,
    pub max_violation: f64,
    pub stop: StopReason,
    pub major_iterations: usize,
    pub inner_iterations: usize,
}

fn max_violation(residuals: &DVector<f64>) -> f64 {
    residuals.iter().fold(0.0_f64, |m, &c| m.max(-c))
}

/// Feasibility-first comparison: a feasible point with lower objective wins;
/// against an infeasible point, feasible always wins; two infeasible points
/// compare by violation.
struct BestPoint {
    z: DVector<f64>,
    objective: f64,
    violation: f64,
    residuals: DVector<f64>,
    feas_tol: f64,
}

impl BestPoint {
    fn offer(&mut self, z: &DVector<f64>, objective: f64, residuals: &DVector<f64>) {
        let violation = max_violation(residuals);
        let better = match (
            violation <= self.feas_tol,
            self.violation <= self.feas_tol,
        ) {
            (true, true) => objective < self.objective,
            (true, false) => true,
            (false, true) => false,
            (false, false) => violation < self.violation,
        };
        if better {
            self.z.copy_from(z);
            self.objective = objective;
            self.violation = violation;
            self.residuals.copy_from(residuals);
        }
    }

    /// Unconditional overwrite, for a converged iterate: the KKT point wins
    /// over any merely tolerance-feasible candidate with a lower objective.
    fn adopt(&mut self, z: &DVector<f64>, objective: f64, residuals: &DVector<f64>) {
        self.z.copy_from(z);
        self.objective = objective;
        self.violation = max_violation(residuals);
        self.residuals.copy_from(residuals);
    }
}

/// Augmented Lagrangian value and multiplier-weighted residual derivative
/// for one constraint. The piecewise form keeps the merit function smooth:
/// quadratic while the constraint is active or violated, constant once it
/// is comfortably satisfied.
fn penalty_terms(c: f64, lambda: f64, mu: f64) -> (f64, f64) {
    if mu * c <= lambda {
        (-lambda * c + 0.5 * mu * c * c, mu * c - lambda)
    } else {
        (-lambda * lambda / (2.0 * mu), 0.0)
    }
}

struct Merit<'a> {
    lambda: &'a DVector<f64>,
    mu: f64,
}

impl Merit<'_> {
    fn value(&self, eval: &Evaluation) -> f64 {
        let mut total = eval.objective;
        for (i, &c) in eval.residuals.iter().enumerate() {
            total += penalty_terms(c, self.lambda[i], self.mu).0;
        }
        total
    }

    /// Gradient without allocating; `weights` and `out` are scratch buffers
    /// of constraint and variable length.
    fn gradient_into(&self, eval: &Evaluation, weights: &mut DVector<f64>, out: &mut DVector<f64>) {
        for (i, &c) in eval.residuals.iter().enumerate() {
            weights[i] = penalty_terms(c, self.lambda[i], self.mu).1;
        }
        out.gemv_tr(1.0, &eval.jacobian, weights, 0.0);
        *out += &eval.gradient;
    }
}

/// Result of one subproblem minimization.
struct InnerOutcome {
    /// Infinity norm of the merit gradient at the final iterate.
    grad_norm: f64,
    /// False when a non-finite value survived the line search.
    finite: bool,
    /// True when neither the quasi-Newton nor the steepest-descent
    /// direction could reduce the merit at any step length whose required
    /// decrease is resolvable in f64: the iterate is a minimizer to
    /// working precision even if `grad_norm` is above the requested
    /// tolerance.
    at_precision_floor: bool,
}

/// Minimizes the augmented Lagrangian from `z` with BFGS.
#[allow(clippy::too_many_arguments)]
fn inner_minimize(
    problem: &impl DenseNlp,
    z: &mut DVector<f64>,
    eval: &mut Evaluation,
    merit: &Merit,
    tol: f64,
    max_iterations: usize,
    best: &mut BestPoint,
    used_iterations: &mut usize,
) -> InnerOutcome {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;

    // Every vector the loop touches is preallocated here; the loop body is
    // allocation free, which matters because replanning runs this tens of
    // thousands of times per episode.
    let mut weights = DVector::<f64>::zeros(m);
    let mut grad = DVector::<f64>::zeros(n);
    let mut new_grad = DVector::<f64>::zeros(n);
    let mut direction = DVector::<f64>::zeros(n);
    let mut s = DVector::<f64>::zeros(n);
    let mut y = DVector::<f64>::zeros(n);
    let mut hy = DVector::<f64>::zeros(n);
    let mut trial = z.clone();
    let mut trial_eval = Evaluation::zeros(n, m);
    merit.gradient_into(eval, &mut weights, &mut grad);

    let outcome = |grad_norm: f64, finite: bool, at_precision_floor: bool| InnerOutcome {
        grad_norm,
        finite,
        at_precision_floor,
    };

    for _ in 0..max_iterations {
        let grad_norm = grad.amax();
        if !grad_norm.is_finite() {
            return outcome(grad_norm, false, false);
        }
        if grad_norm <= tol {
            return outcome(grad_norm, true, false);
        }
        *used_iterations += 1;

        direction.gemv(-1.0, &h_inv, &grad, 0.0);
        let mut slope = grad.dot(&direction);
        if !slope.is_finite() || slope >= 0.0 {
            // The quasi-Newton model lost descent; restart from steepest
            // descent.
            h_inv.fill_with_identity();
            first_update = true;
            direction.copy_from(&grad);
            direction.neg_mut();
            slope = grad.dot(&direction);
        }
        if first_update {
            // Penalty gradients can be enormous; cap the raw step so the
            // line search starts from a sane trial instead of halving its
            // way down from an astronomical one.
            let scale = direction.amax();
            if scale > 1.0 {
                direction /= scale;
                slope /= scale;
            }
        }

        let merit_here = merit.value(eval);
        let mut accepted_step = 0.0;
        'attempts: for attempt in 0..2 {
            if attempt == 1 {
                // The quasi-Newton direction made no progress at any step
                // length; retry once along normalized steepest descent
                // before giving up on the subproblem.
                h_inv.fill_with_identity();
                first_update = true;
                direction.copy_from(&grad);
                direction.neg_mut();
                slope = grad.dot(&direction);
                let scale = direction.amax();
                if scale > 1.0 {
                    direction /= scale;
                    slope /= scale;
                }
            }
            // Below this, the Armijo threshold rounds to the current merit
            // itself and acceptance would mean bitwise-equal merit, i.e.
            // noise; such steps are unresolvable progress, not progress.
            let resolution = f64::EPSILON * merit_here.abs().max(1.0);
            let mut step = 1.0;
            while step >= 1e-14 && 1e-4 * step * -slope > resolution {
                trial.copy_from(z);
                trial.axpy(step, &direction, 1.0);
                problem.evaluate(&trial, &mut trial_eval);
                // On rejection, the next trial minimizes the quadratic
                // through the merit value, its slope at zero, and the
                // rejected value, clamped to [0.1, 0.5] of the current step;
                // plain halving covers non-finite probes.
                let mut next = 0.5 * step;
                if trial_eval.is_finite() {
                    let trial_merit = merit.value(&trial_eval);
                    if trial_merit.is_finite() {
                        if trial_merit <= merit_here + 1e-4 * step * slope {
                            accepted_step = step;
                            break 'attempts;
                        }
                        let gap = trial_merit - merit_here - slope * step;
                        if gap > 0.0 {
                            let vertex = -slope * step * step / (2.0 * gap);
                            next = vertex.clamp(0.1 * step, 0.5 * step);
                        }
                    }
                }
                step = next;
            }
        }
        if accepted_step == 0.0 {
            // Neither direction yields progress at any step length; the
            // merit cannot be reduced further in working precision.
            return outcome(grad_norm, true, true);
        }

        best.offer(&trial, trial_eval.objective, &trial_eval.residuals);

        merit.gradient_into(&trial_eval, &mut weights, &mut new_grad);
        if !new_grad.iter().all(|v| v.is_finite()) {
            std::mem::swap(z, &mut trial);
            std::mem::swap(eval, &mut trial_eval);
            return outcome(f64::NAN, false, false);
        }

        s.copy_from(&trial);
        s.axpy(-1.0, z, 1.0);
        y.copy_from(&new_grad);
        y.axpy(-1.0, &grad, 1.0);
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if first_update {
                // Scale the initial inverse Hessian to the first curvature
                // estimate; this mostly fixes the step length of the next
                // few iterations.
                let yy = y.dot(&y);
                if yy > 0.0 {
                    h_inv.fill_with_identity();
                    h_inv *= sy / yy;
                }
                first_update = false;
            }
            hy.gemv(1.0, &h_inv, &y, 0.0);
            let rho = 1.0 / sy;
            let yhy = y.dot(&hy);
            // Inverse BFGS update.
            h_inv.ger(-rho, &s, &hy, 1.0);
            h_inv.ger(-rho, &hy, &s, 1.0);
            h_inv.ger(rho * rho * yhy + rho, &s, &s, 1.0);
        }

        std::mem::swap(z, &mut trial);
        std::mem::swap(eval, &mut trial_eval);
        std::mem::swap(&mut grad, &mut new_grad);
    }

    outcome(grad.amax(), true, false)
}

/// Solves the program starting from `z0`.
pub fn solve_alm(problem: &impl DenseNlp, z0: DVector<f64>, options: &AlmOptions) -> AlmOutcome {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    assert_eq!(z0.len(), n, "starting point dimension mismatch");

    let mut z = z0;
    let mut eval = Evaluation::zeros(n, m);
    problem.evaluate(&z, &mut eval);

    let mut best = BestPoint {
        z: z.clone(),
        objective: eval.objective,
        violation: max_violation(&eval.residuals),
        residuals: eval.residuals.clone(),
        feas_tol: options.feasibility_tol,
    };

    if !eval.is_finite() {
        return AlmOutcome {
            point: best.z,
            objective: best.objective,
            residuals: best.residuals,
            max_violation: best.violation,
            stop: StopReason::NumericFailure,
            major_iterations: 0,
            inner_iterations: 0,
        };
    }

    let mut lambda = DVector::<f64>::zeros(m);
    let mut mu = options.initial_penalty;
    // Progress gate on the violation and the matching subproblem tolerance;
    // both tighten only when the gate is met, so the penalty stays moderate
    // while the multiplier estimates do the work.
    let mut gate = 0.1_f64;
    let mut inner_tol = 0.1_f64;
    let mut previous_violation = f64::INFINITY;
    let mut inner_total = 0;
    let mut stop = StopReason::IterationLimit;
    let mut majors = 0;

    for _ in 0..options.max_major_iterations {
        majors += 1;
        let merit = Merit { lambda: &lambda, mu };
        let inner = inner_minimize(
            problem,
            &mut z,
            &mut eval,
            &merit,
            inner_tol.max(options.optimality_tol),
            options.max_inner_iterations,
            &mut best,
            &mut inner_total,
        );
        if !inner.finite {
            stop = StopReason::NumericFailure;
            break;
        }

        let violation = max_violation(&eval.residuals);
        // Converged means actually stationary, not merely that the
        // subproblem returned: either the gradient norm met the tolerance,
        // or the merit bottomed out at the resolution of f64 arithmetic,
        // which is the best any further iteration could do.
        let stationary =
            inner.grad_norm <= options.optimality_tol || inner.at_precision_floor;
        if violation <= options.feasibility_tol
            && inner_tol <= options.optimality_tol
            && stationary
        {
            best.adopt(&z, eval.objective, &eval.residuals);
            stop = StopReason::Converged;
            break;
        }

        if violation <= gate.max(options.feasibility_tol) {
            // Multiplier step: the penalty held, so refine the estimates
            // and demand more next round.
            for i in 0..m {
                lambda[i] = (lambda[i] - mu * eval.residuals[i]).max(0.0);
            }
            if violation <= options.feasibility_tol {
                gate = options.feasibility_tol;
                inner_tol = options.optimality_tol;
            } else {
                gate = (gate * 0.2).max(options.feasibility_tol);
                inner_tol = (inner_tol * 0.2).max(options.optimality_tol);
            }
        } else {
            // Penalty step: infeasibility is not shrinking fast enough.
            if mu >= options.max_penalty && violation >= 0.9 * previous_violation {
                // Saturated penalty with a stagnant violation: locally
                // infeasible, more iterations cannot help.
                break;
            }
            mu = (mu * options.penalty_growth).min(options.max_penalty);
        }
        previous_violation = violation;
    }

    best.offer(&z, eval.objective, &eval.residuals);

    AlmOutcome {
        objective: best.objective,
        max_violation: best.violation,
        point: best.z,
        residuals: best.residuals,
        stop,
        major_iterations: majors,
        inner_iterations: inner_total,
    }
}
