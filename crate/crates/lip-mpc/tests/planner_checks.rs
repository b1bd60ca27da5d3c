//! Planner-level checks: frozen cost values, problem dimensions, warm-start
//! alignment, solver status semantics, and a brute-force optimality oracle
//! for single-step horizons.

use lip_core::{step_dynamics, LipParams, LipState, StanceFoot, StepControl};
use lip_mpc::solver::{DenseNlp, Evaluation};
use lip_mpc::{
    assemble, heading_goal, plan, preprocess_state, solve, stage_cost, stage_cost_gradient,
    NlpStatus, PlannerConfig, Weights,
};
use nalgebra::Vector2;
use safety_constraints::{
    constraint_bundle, CbfConfig, KinematicLimits, Obstacle,
};
use std::f64::consts::PI;

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

#[test]
fn heading_goal_is_quadrant_correct() {
    let at = |x: f64, y: f64| LipState::new(x, 0.0, y, 0.0, 0.0);
    let goal = Vector2::new(1.0, 1.0);
    assert!((heading_goal(&at(0.0, 0.0), goal) - PI / 4.0).abs() < 1e-15);
    assert!((heading_goal(&at(2.0, 0.0), goal) - 3.0 * PI / 4.0).abs() < 1e-15);
    assert!((heading_goal(&at(2.0, 2.0), goal) + 3.0 * PI / 4.0).abs() < 1e-15);
    assert!((heading_goal(&at(0.0, 2.0), goal) + PI / 4.0).abs() < 1e-15);
    // Goal straight behind resolves to pi, not -pi.
    assert_eq!(heading_goal(&at(2.0, 1.0), goal), PI);
}

#[test]
fn stage_cost_frozen_case() {
    // Position (1, 2) heading pi/4, goal (4, 6): squared distance 25,
    // goal heading atan2(4, 3). Frozen values.
    let x = LipState::new(1.0, 0.0, 2.0, 0.0, PI / 4.0);
    let goal = Vector2::new(4.0, 6.0);
    let w = Weights::default();
    let cost = stage_cost(&x, goal, &w);
    assert!((cost - 26.006738705266854).abs() < 1e-12, "cost {cost}");

    let (_, grad) = stage_cost_gradient(&x, goal, &w);
    assert!((grad[0] - (-3.7296471263333772)).abs() < 1e-12);
    assert!((grad[2] - (-9.702764655249967)).abs() < 1e-12);
    assert!((grad[4] - (-14.189705460416392)).abs() < 1e-12);
    assert_eq!(grad[1], 0.0);
    assert_eq!(grad[3], 0.0);
}

#[test]
fn stage_cost_gradient_matches_finite_differences() {
    let w = Weights { position: 1.3, heading: 27.0 };
    let goal = Vector2::new(2.5, -1.5);
    let mut rng = TestRng(77);
    for _ in 0..100 {
        let x = LipState::new(
            rng.uniform(-4.0, 4.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-4.0, 4.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-3.0, 3.0),
        );
        let (_, grad) = stage_cost_gradient(&x, goal, &w);
        let h = 1e-6;
        for idx in [0usize, 2, 4] {
            let perturb = |eps: f64| {
                let mut v = x.to_vector();
                v[idx] += eps;
                let xs = LipState { pos_x: v[0], vel_x: v[1], pos_y: v[2], vel_y: v[3], heading: v[4] };
                stage_cost(&xs, goal, &w)
            };
            let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
            assert!(
                (grad[idx] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "component {idx}: {} vs {fd}",
                grad[idx]
            );
        }
    }
}

#[test]
fn stage_cost_at_the_goal_has_no_heading_term() {
    let w = Weights::default();
    let goal = Vector2::new(1.0, 1.0);
    let x = LipState::new(1.0, 0.3, 1.0, 0.0, 2.0);
    assert_eq!(stage_cost(&x, goal, &w), 0.0);
    let (_, grad) = stage_cost_gradient(&x, goal, &w);
    assert!(grad.iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn preprocess_state_advances_to_the_boundary() {
    let params = LipParams::default();
    let x = LipState::new(0.2, 0.5, -0.1, 0.1, 0.3);
    let u = StepControl::new(0.15, -0.05, 0.1);
    let full = preprocess_state(&x, &u, params.step_duration(), &params).unwrap();
    let direct = step_dynamics(&x, &u, &params);
    assert!((full.pos_x - direct.pos_x).abs() < 1e-12);
    assert!((full.vel_y - direct.vel_y).abs() < 1e-12);
    let zero = preprocess_state(&x, &u, 0.0, &params).unwrap();
    assert_eq!(zero, x);
    assert!(preprocess_state(&x, &u, 0.5, &params).is_err());
}

fn eight_far_circles() -> Vec<Obstacle> {
    (0..8)
        .map(|i| Obstacle::circle(Vector2::new(50.0 + i as f64 * 3.0, 40.0), 0.5).unwrap())
        .collect()
}

#[test]
fn assembled_dimensions_match_the_layout() {
    // Three steps and eight obstacles: 9 controls + 24 slacks, and
    // 3 * (8 + 10) bundle rows + 24 slack bounds.
    let params = LipParams::default();
    let config = PlannerConfig::default();
    let x0 = LipState::new(0.0, 0.5, 0.0, 0.2, 0.0);
    let problem = assemble(&x0, StanceFoot::Right, &eight_far_circles(), &config, &params, None).unwrap();
    assert_eq!(problem.num_vars(), 33);
    assert_eq!(problem.num_constraints(), 78);
    assert_eq!(problem.layout().total_rows(), 54);
    assert_eq!(problem.num_slacks(), 24);
    assert_eq!(problem.initial_guess().len(), 33);
}

#[test]
fn warm_start_reuses_or_shifts_by_stance_parity() {
    let params = LipParams::default();
    let config = PlannerConfig::for_goal(Vector2::new(6.0, 0.0));
    let x0 = LipState::new(0.0, 0.5, 0.0, 0.15, 0.0);
    let problem = assemble(&x0, StanceFoot::Right, &[], &config, &params, None).unwrap();
    let solution = solve(&problem, &config);
    assert_eq!(solution.stance_first, StanceFoot::Right);

    // Same parity: the guess is the previous controls verbatim.
    let again = assemble(&x0, StanceFoot::Right, &[], &config, &params, Some(&solution)).unwrap();
    for (k, u) in solution.controls.iter().enumerate() {
        assert_eq!(again.initial_guess()[3 * k], u.foot_x);
        assert_eq!(again.initial_guess()[3 * k + 1], u.foot_y);
        assert_eq!(again.initial_guess()[3 * k + 2], u.omega);
    }

    // Opposite parity: the horizon advanced, so the guess drops the first
    // control and repeats the last.
    let shifted = assemble(&x0, StanceFoot::Left, &[], &config, &params, Some(&solution)).unwrap();
    for k in 0..config.horizon - 1 {
        assert_eq!(shifted.initial_guess()[3 * k], solution.controls[k + 1].foot_x);
    }
    let last = solution.controls.last().unwrap();
    assert_eq!(
        shifted.initial_guess()[3 * (config.horizon - 1)],
        last.foot_x
    );
}

#[test]
fn open_field_walk_is_optimal_and_consistent() {
    // Cruise start: the maneuverability row couples the turn rate to the
    // longitudinal velocity of the state a step launches from, so a walker
    // already at band speed admits a fully feasible plan.
    let params = LipParams::default();
    let config = PlannerConfig::for_goal(Vector2::new(5.0, 0.0));
    let x0 = LipState::new(0.0, 0.6, 0.0, 0.0, 0.0);
    let problem = assemble(&x0, StanceFoot::Right, &[], &config, &params, None).unwrap();
    let solution = solve(&problem, &config);
    assert_eq!(solution.status, NlpStatus::Optimal, "status {:?}", solution.status);
    assert_eq!(solution.max_slack, 0.0);
    assert!(solution.objective.is_finite());
    assert!(solution.iterations > 0);

    // Predicted states must be the exact rollout of the returned controls.
    let mut x = x0;
    for (k, u) in solution.controls.iter().enumerate() {
        x = step_dynamics(&x, u, &params);
        let s = solution.states[k];
        assert!((x.pos_x - s.pos_x).abs() < 1e-10);
        assert!((x.vel_x - s.vel_x).abs() < 1e-10);
        assert!((x.pos_y - s.pos_y).abs() < 1e-10);
        assert!((x.vel_y - s.vel_y).abs() < 1e-10);
        assert!((x.heading - s.heading).abs() < 1e-10);
    }

    // Walking toward a goal straight ahead: strictly increasing x.
    let mut prev = 0.0;
    for s in &solution.states {
        assert!(s.pos_x > prev, "stalled at {}", s.pos_x);
        prev = s.pos_x;
    }

    // The velocity band holds at every predicted state with alternating
    // stance starting from the first planned step.
    let limits = KinematicLimits::default();
    let bundle = constraint_bundle(
        &x0,
        &solution.states,
        &solution.controls,
        StanceFoot::Right,
        &[],
        &limits,
        &CbfConfig::default(),
    )
    .unwrap();
    let min_residual = bundle.residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min_residual >= -1e-6, "kinematic row violated: {min_residual}");
}

#[test]
fn blocked_approach_relaxes_the_barrier_with_slack() {
    // A wall of inflated obstacle directly ahead of a walker that cannot
    // stop: the barrier decay cannot hold, so the solver must report a
    // relaxed plan rather than pretending feasibility.
    let params = LipParams::default();
    let mut config = PlannerConfig::for_goal(Vector2::new(10.0, 0.0));
    config.cbf.inflation_margin = 0.0;
    let obstacle = Obstacle::circle(Vector2::new(1.2, 0.0), 1.0).unwrap();
    let x0 = LipState::new(0.0, 0.75, 0.0, 0.0, 0.0);
    let solution = plan(
        &x0,
        &StepControl::new(-0.01, 0.0, 0.0),
        StanceFoot::Left,
        0.0,
        &[obstacle],
        &config,
        &params,
        None,
    )
    .unwrap();
    assert_eq!(solution.status, NlpStatus::SlackRelaxed, "status {:?}", solution.status);
    assert!(solution.max_slack > 1e-6, "slack {}", solution.max_slack);
}

#[test]
fn impossible_kinematics_are_not_reported_optimal() {
    // 5 m/s cannot be brought into the velocity band within one step given
    // the reach limit, so no feasible point exists.
    let params = LipParams::default();
    let config = PlannerConfig::for_goal(Vector2::new(10.0, 0.0));
    let x0 = LipState::new(0.0, 5.0, 0.0, 0.0, 0.0);
    let problem = assemble(&x0, StanceFoot::Right, &[], &config, &params, None).unwrap();
    let solution = solve(&problem, &config);
    assert_ne!(solution.status, NlpStatus::Optimal);
    assert_ne!(solution.status, NlpStatus::SlackRelaxed);
    assert!(solution.controls.iter().all(|u| u.to_vector().iter().all(|v| v.is_finite())));
}

#[test]
fn planning_is_deterministic() {
    let params = LipParams::default();
    let config = PlannerConfig::for_goal(Vector2::new(7.0, 3.0));
    let obstacles = vec![
        Obstacle::circle(Vector2::new(3.0, 1.0), 0.6).unwrap(),
        Obstacle::ellipse(Vector2::new(5.0, 2.5), 1.0, 0.4, 0.7).unwrap(),
    ];
    let x0 = LipState::new(0.0, 0.5, 0.0, 0.2, 0.4);
    let u0 = StepControl::new(-0.05, -0.1, 0.05);
    let a = plan(&x0, &u0, StanceFoot::Right, 0.2, &obstacles, &config, &params, None).unwrap();
    let b = plan(&x0, &u0, StanceFoot::Right, 0.2, &obstacles, &config, &params, None).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    for (ua, ub) in a.controls.iter().zip(&b.controls) {
        assert_eq!(ua.foot_x.to_bits(), ub.foot_x.to_bits());
        assert_eq!(ua.foot_y.to_bits(), ub.foot_y.to_bits());
        assert_eq!(ua.omega.to_bits(), ub.omega.to_bits());
    }
}

/// Brute-force reference for single-step horizons: sweep the control box
/// at fixed resolution, keep the best point satisfying every constraint
/// without slack.
fn grid_best_objective(
    x0: &LipState,
    stance: StanceFoot,
    inflated: &[Obstacle],
    config: &PlannerConfig,
    params: &LipParams,
) -> f64 {
    let limits = &config.limits;
    let reach = limits.max_step_reach;
    let step = 1e-2;
    let mats = lip_core::step_matrices(params, params.step_duration());
    let mut best = f64::INFINITY;

    let n_xy = (2.0 * reach / step).round() as usize;
    let n_w = (2.0 * limits.max_turn_per_step / step).ceil() as usize;
    for ix in 0..=n_xy {
        let fx = x0.pos_x - reach + ix as f64 * step;
        for iy in 0..=n_xy {
            let fy = x0.pos_y - reach + iy as f64 * step;
            for iw in 0..=n_w {
                let omega = -limits.max_turn_per_step
                    + iw as f64 * (2.0 * limits.max_turn_per_step / n_w as f64);
                let u = StepControl::new(fx, fy, omega);
                let next = lip_core::LipState::from_vector(
                    &(mats.state_transition * x0.to_vector() + mats.control_input * u.to_vector()),
                );

                let feasible = safety_constraints::reachability_residuals(x0, &u, limits)
                    .iter()
                    .chain(safety_constraints::turn_rate_residuals(&u, limits).iter())
                    .chain(safety_constraints::maneuverability_residuals(x0, &u, limits).iter())
                    .chain(safety_constraints::velocity_residuals(&next, stance, limits).iter())
                    .all(|&r| r >= 0.0)
                    && inflated.iter().all(|o| {
                        safety_constraints::dcbf_residual(
                            o.barrier(next.position()),
                            o.barrier(x0.position()),
                            config.cbf.gamma,
                        ) >= 0.0
                    });
                if feasible {
                    let cost = stage_cost(&next, config.goal, &config.weights);
                    if cost < best {
                        best = cost;
                    }
                }
            }
        }
    }
    best
}

#[test]
fn single_step_solutions_match_the_grid_oracle() {
    let params = LipParams::default();
    let mut rng = TestRng(2024);
    let mut solved = 0;
    for instance in 0..10 {
        let heading = rng.uniform(-PI, PI);
        let (s, c) = heading.sin_cos();
        let speed = rng.uniform(0.45, 0.7);
        let x0 = LipState::new(
            rng.uniform(-1.0, 1.0),
            speed * c,
            rng.uniform(-1.0, 1.0),
            speed * s,
            heading,
        );
        let goal_dist = rng.uniform(3.0, 8.0);
        let goal_dir = heading + rng.uniform(-0.6, 0.6);
        let goal = Vector2::new(
            x0.pos_x + goal_dist * goal_dir.cos(),
            x0.pos_y + goal_dist * goal_dir.sin(),
        );
        let obs_dir = rng.uniform(-PI, PI);
        let obs_dist = rng.uniform(1.8, 3.0);
        let inflated = vec![Obstacle::circle(
            Vector2::new(x0.pos_x + obs_dist * obs_dir.cos(), x0.pos_y + obs_dist * obs_dir.sin()),
            rng.uniform(0.4, 0.7),
        )
        .unwrap()];

        let mut config = PlannerConfig::for_goal(goal);
        config.horizon = 1;

        let problem = assemble(&x0, StanceFoot::Right, &inflated, &config, &params, None).unwrap();
        let solution = solve(&problem, &config);
        assert_eq!(
            solution.status,
            NlpStatus::Optimal,
            "instance {instance} returned {:?}",
            solution.status
        );

        // The returned point must satisfy every constraint without slack.
        let mut eval = Evaluation::zeros(problem.num_vars(), problem.num_constraints());
        let z = problem.point_from_controls(&solution.controls);
        problem.evaluate(&z, &mut eval);
        let worst = eval.residuals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(worst >= -1e-6, "instance {instance} violates by {worst}");

        let best = grid_best_objective(&x0, StanceFoot::Right, &inflated, &config, &params);
        assert!(best.is_finite(), "instance {instance} grid found nothing feasible");
        assert!(
            solution.objective <= best + 1e-3,
            "instance {instance}: solver {} vs grid {best}",
            solution.objective
        );
        solved += 1;
    }
    assert_eq!(solved, 10);
}
