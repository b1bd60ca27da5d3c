//! Finite-difference validation of every analytic Jacobian, including the
//! stacked horizon bundle.

use lip_core::{LipState, StanceFoot, StepControl};
use nalgebra::Vector2;
use safety_constraints::{
    constraint_bundle, dcbf_residual, maneuverability_jacobians, maneuverability_residuals,
    reachability_jacobians, reachability_residuals, turn_rate_jacobian, turn_rate_residuals,
    velocity_jacobian, velocity_residuals, CbfConfig, KinematicLimits, Obstacle,
};

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;

struct TestRng(u64);

impl TestRng {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let unit = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + unit * (hi - lo)
    }
}

fn assert_grad(analytic: f64, fd: f64, what: &str) {
    assert!(
        (analytic - fd).abs() <= FD_TOL * fd.abs().max(1.0),
        "{what}: analytic {analytic} vs finite difference {fd}"
    );
}

fn random_state(rng: &mut TestRng) -> LipState {
    LipState::new(
        rng.uniform(-2.0, 2.0),
        rng.uniform(-1.0, 1.0),
        rng.uniform(-2.0, 2.0),
        rng.uniform(-1.0, 1.0),
        rng.uniform(-3.0, 3.0),
    )
}

fn random_control(rng: &mut TestRng, near: &LipState) -> StepControl {
    StepControl::new(
        near.pos_x + rng.uniform(-0.3, 0.3),
        near.pos_y + rng.uniform(-0.3, 0.3),
        rng.uniform(-0.2, 0.2),
    )
}

fn perturb_state(x: &LipState, idx: usize, eps: f64) -> LipState {
    let mut v = x.to_vector();
    v[idx] += eps;
    // Bypass wrapping so finite differences of the heading stay smooth.
    LipState {
        pos_x: v[0],
        vel_x: v[1],
        pos_y: v[2],
        vel_y: v[3],
        heading: v[4],
    }
}

fn perturb_control(u: &StepControl, idx: usize, eps: f64) -> StepControl {
    let mut v = u.to_vector();
    v[idx] += eps;
    StepControl::from_vector(&v)
}

#[test]
fn dcbf_residual_is_the_decayed_difference() {
    assert!((dcbf_residual(0.5, 0.4, 0.3) - 0.22).abs() < 1e-15);
    // Feasibility boundary: h may shrink by exactly gamma per step.
    assert!(dcbf_residual(0.7, 1.0, 0.3).abs() < 1e-15);
    assert!(dcbf_residual(0.69, 1.0, 0.3) < 0.0);
    assert!(dcbf_residual(0.71, 1.0, 0.3) > 0.0);
}

#[test]
fn barrier_gradients_match_finite_differences() {
    let mut rng = TestRng(5);
    let shapes = [
        Obstacle::circle(Vector2::new(0.5, -0.5), 0.7).unwrap(),
        Obstacle::ellipse(Vector2::new(-1.0, 0.2), 1.5, 0.6, 1.1).unwrap(),
        Obstacle::ellipse(Vector2::new(0.0, 0.0), 0.9, 0.9, 0.0).unwrap(),
    ];
    for obs in &shapes {
        for _ in 0..50 {
            let p = Vector2::new(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
            let g = obs.barrier_gradient(p);
            for axis in 0..2 {
                let mut hi = p;
                let mut lo = p;
                hi[axis] += FD_STEP;
                lo[axis] -= FD_STEP;
                let fd = (obs.barrier(hi) - obs.barrier(lo)) / (2.0 * FD_STEP);
                assert_grad(g[axis], fd, "barrier gradient");
            }
        }
    }
}

#[test]
fn velocity_jacobian_matches_finite_differences() {
    let limits = KinematicLimits::default();
    let mut rng = TestRng(13);
    for stance in [StanceFoot::Left, StanceFoot::Right] {
        for _ in 0..50 {
            let x = random_state(&mut rng);
            let jac = velocity_jacobian(&x, stance);
            for col in 0..5 {
                let hi = velocity_residuals(&perturb_state(&x, col, FD_STEP), stance, &limits);
                let lo = velocity_residuals(&perturb_state(&x, col, -FD_STEP), stance, &limits);
                for row in 0..4 {
                    let fd = (hi[row] - lo[row]) / (2.0 * FD_STEP);
                    assert_grad(jac[(row, col)], fd, "velocity jacobian");
                }
            }
        }
    }
}

#[test]
fn reachability_jacobians_match_finite_differences() {
    let limits = KinematicLimits::default();
    let mut rng = TestRng(19);
    for _ in 0..50 {
        let x = random_state(&mut rng);
        let u = random_control(&mut rng, &x);
        let (jx, ju) = reachability_jacobians(&x, &u);
        for col in 0..5 {
            let hi = reachability_residuals(&perturb_state(&x, col, FD_STEP), &u, &limits);
            let lo = reachability_residuals(&perturb_state(&x, col, -FD_STEP), &u, &limits);
            for row in 0..2 {
                assert_grad(jx[(row, col)], (hi[row] - lo[row]) / (2.0 * FD_STEP), "reach d/dx");
            }
        }
        for col in 0..3 {
            let hi = reachability_residuals(&x, &perturb_control(&u, col, FD_STEP), &limits);
            let lo = reachability_residuals(&x, &perturb_control(&u, col, -FD_STEP), &limits);
            for row in 0..2 {
                assert_grad(ju[(row, col)], (hi[row] - lo[row]) / (2.0 * FD_STEP), "reach d/du");
            }
        }
    }
}

#[test]
fn turn_rate_jacobian_matches_finite_differences() {
    let limits = KinematicLimits::default();
    let mut rng = TestRng(23);
    let ju = turn_rate_jacobian();
    for _ in 0..20 {
        let x = random_state(&mut rng);
        let u = random_control(&mut rng, &x);
        for col in 0..3 {
            let hi = turn_rate_residuals(&perturb_control(&u, col, FD_STEP), &limits);
            let lo = turn_rate_residuals(&perturb_control(&u, col, -FD_STEP), &limits);
            for row in 0..2 {
                assert_grad(ju[(row, col)], (hi[row] - lo[row]) / (2.0 * FD_STEP), "turn d/du");
            }
        }
    }
}

#[test]
fn maneuverability_jacobians_match_finite_differences() {
    let limits = KinematicLimits::default();
    let mut rng = TestRng(31);
    for _ in 0..50 {
        let x = random_state(&mut rng);
        // Include omegas near zero, where the smoothed magnitude matters.
        let mut u = random_control(&mut rng, &x);
        if rng.uniform(0.0, 1.0) < 0.3 {
            u.omega = rng.uniform(-1e-5, 1e-5);
        }
        let (jx, ju) = maneuverability_jacobians(&x, &u, &limits);
        for col in 0..5 {
            let hi = maneuverability_residuals(&perturb_state(&x, col, FD_STEP), &u, &limits);
            let lo = maneuverability_residuals(&perturb_state(&x, col, -FD_STEP), &u, &limits);
            for row in 0..2 {
                assert_grad(jx[(row, col)], (hi[row] - lo[row]) / (2.0 * FD_STEP), "coupling d/dx");
            }
        }
        for col in 0..3 {
            // The smoothed |omega| has curvature ~1/TURN_SMOOTHING near
            // zero, so the difference step must shrink below that scale.
            let h = if col == 2 && u.omega.abs() < 1e-3 { 1e-10 } else { FD_STEP };
            let hi = maneuverability_residuals(&x, &perturb_control(&u, col, h), &limits);
            let lo = maneuverability_residuals(&x, &perturb_control(&u, col, -h), &limits);
            for row in 0..2 {
                assert_grad(ju[(row, col)], (hi[row] - lo[row]) / (2.0 * h), "coupling d/du");
            }
        }
    }
}

#[test]
fn bundle_jacobian_matches_finite_differences() {
    let limits = KinematicLimits::default();
    let cbf = CbfConfig::default();
    let obstacles = vec![
        Obstacle::circle(Vector2::new(1.0, 0.5), 0.6).unwrap(),
        Obstacle::ellipse(Vector2::new(-0.5, 1.5), 1.2, 0.5, 0.8).unwrap(),
        Obstacle::circle(Vector2::new(2.0, -1.0), 0.4).unwrap(),
    ];
    let mut rng = TestRng(41);
    for _ in 0..10 {
        let initial = random_state(&mut rng);
        let n = 3;
        let states: Vec<LipState> = (0..n).map(|_| random_state(&mut rng)).collect();
        let controls: Vec<StepControl> = states
            .iter()
            .map(|s| random_control(&mut rng, s))
            .collect();
        let bundle = constraint_bundle(
            &initial,
            &states,
            &controls,
            StanceFoot::Right,
            &obstacles,
            &limits,
            &cbf,
        )
        .unwrap();
        assert_eq!(bundle.residuals.len(), bundle.layout.total_rows());
        assert_eq!(bundle.jacobian.ncols(), bundle.layout.total_cols());

        let eval = |states: &[LipState], controls: &[StepControl]| {
            constraint_bundle(
                &initial,
                states,
                controls,
                StanceFoot::Right,
                &obstacles,
                &limits,
                &cbf,
            )
            .unwrap()
            .residuals
        };

        for var in 0..bundle.layout.total_cols() {
            let (hi, lo) = if var < 5 * n {
                let (k, comp) = (var / 5, var % 5);
                let mut sh = states.clone();
                sh[k] = perturb_state(&states[k], comp, FD_STEP);
                let mut sl = states.clone();
                sl[k] = perturb_state(&states[k], comp, -FD_STEP);
                (eval(&sh, &controls), eval(&sl, &controls))
            } else {
                let (k, comp) = ((var - 5 * n) / 3, (var - 5 * n) % 3);
                let mut ch = controls.clone();
                ch[k] = perturb_control(&controls[k], comp, FD_STEP);
                let mut cl = controls.clone();
                cl[k] = perturb_control(&controls[k], comp, -FD_STEP);
                (eval(&states, &ch), eval(&states, &cl))
            };
            for row in 0..bundle.residuals.len() {
                let fd = (hi[row] - lo[row]) / (2.0 * FD_STEP);
                assert_grad(bundle.jacobian[(row, var)], fd, &format!("bundle row {row} var {var}"));
            }
        }
    }
}

#[test]
fn bundle_layout_and_stance_alternation() {
    let limits = KinematicLimits::default();
    let cbf = CbfConfig::default();
    let obstacles: Vec<Obstacle> = (0..8)
        .map(|i| Obstacle::circle(Vector2::new(10.0 + i as f64, 10.0), 0.5).unwrap())
        .collect();

    // A state moving straight ahead at 0.6 m/s with lateral velocity +0.2:
    // feasible under Right stance, infeasible under Left.
    let drift = LipState::new(0.0, 0.6, 0.0, 0.2, 0.0);
    let u = StepControl::new(0.1, 0.1, 0.0);
    let states = vec![drift; 3];
    let controls = vec![u; 3];
    let bundle = constraint_bundle(
        &drift,
        &states,
        &controls,
        StanceFoot::Right,
        &obstacles,
        &limits,
        &cbf,
    )
    .unwrap();

    // 8 barrier rows + 2 reach + 2 turn + 2 coupling + 4 velocity per step.
    assert_eq!(bundle.layout.rows_per_step(), 18);
    assert_eq!(bundle.residuals.len(), 54);
    assert_eq!(bundle.jacobian.shape(), (54, 24));

    let v0 = bundle.layout.velocity_row(0);
    let v1 = bundle.layout.velocity_row(1);
    let v2 = bundle.layout.velocity_row(2);
    // Step 0 runs under Right stance: lateral band [0.15, 0.35] holds.
    assert!(bundle.residuals[v0 + 2] >= 0.0 && bundle.residuals[v0 + 3] >= 0.0);
    // Step 1 flips to Left stance, where the band is [-0.35, -0.15]; the
    // same +0.2 lateral velocity now breaks the upper bound.
    assert!(bundle.residuals[v1 + 3] < 0.0);
    // Step 2 is Right again.
    assert!(bundle.residuals[v2 + 2] >= 0.0 && bundle.residuals[v2 + 3] >= 0.0);
}

#[test]
fn bundle_rejects_mismatched_horizons() {
    let limits = KinematicLimits::default();
    let cbf = CbfConfig::default();
    let x = LipState::new(0.0, 0.5, 0.0, 0.0, 0.0);
    let u = StepControl::new(0.1, 0.0, 0.0);
    assert!(constraint_bundle(&x, &[], &[], StanceFoot::Right, &[], &limits, &cbf).is_err());
    assert!(constraint_bundle(&x, &[x], &[u, u], StanceFoot::Right, &[], &limits, &cbf).is_err());
}
