//! Random obstacle environments with seeded, reproducible generation.

use crate::rng::SplitMix64;
use crate::SimError;
use nalgebra::Vector2;
use safety_constraints::Obstacle;
use std::f64::consts::PI;

/// Extra clearance, beyond the planning margin, that the start and goal
/// keep from every obstacle. Without it an episode could begin with a
/// barrier row already active and no feasible first step.
pub const START_GOAL_CLEARANCE: f64 = 0.2;

/// Attempts to place one obstacle before generation gives up.
pub const PLACEMENT_ATTEMPTS: usize = 1000;

/// Circle radii are drawn uniformly from this range (meters).
pub const CIRCLE_RADIUS_RANGE: (f64, f64) = (0.3, 0.8);

/// Ellipse semi-axes are drawn uniformly from this range (meters).
pub const ELLIPSE_AXIS_RANGE: (f64, f64) = (0.3, 1.0);

/// Obstacle centers keep this distance from the region edge (meters).
pub const CENTER_EDGE_INSET: f64 = 1.0;

/// Axis-aligned rectangular region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Bounds {
    pub fn new(min: Vector2<f64>, max: Vector2<f64>) -> Result<Self, SimError> {
        let finite =
            min.iter().all(|v| v.is_finite()) && max.iter().all(|v| v.is_finite());
        if !finite || min.x >= max.x || min.y >= max.y {
            return Err(SimError::InvalidEnvironment(format!(
                "bounds must be a finite nonempty region, got {min:?}..{max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, point: Vector2<f64>) -> bool {
        (self.min.x..=self.max.x).contains(&point.x)
            && (self.min.y..=self.max.y).contains(&point.y)
    }

    /// Region with every edge moved inward by `inset`; empty insets are
    /// rejected by the caller via [`Bounds::new`].
    fn shrunk(&self, inset: f64) -> Result<Self, SimError> {
        Bounds::new(
            Vector2::new(self.min.x + inset, self.min.y + inset),
            Vector2::new(self.max.x - inset, self.max.y - inset),
        )
    }
}

/// One navigation scenario: true (un-inflated) obstacle geometry plus the
/// start and goal positions inside a bounded region.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub obstacles: Vec<Obstacle>,
    pub start: Vector2<f64>,
    pub goal: Vector2<f64>,
    pub bounds: Bounds,
    pub seed: u64,
}

/// Draws `n_obstacles` random obstacles, deterministically from `seed`.
///
/// Each obstacle is a circle or an ellipse with equal probability. The
/// center is uniform over the bounds shrunk by [`CENTER_EDGE_INSET`];
/// circle radii come from [`CIRCLE_RADIUS_RANGE`], ellipse semi-axes from
/// [`ELLIPSE_AXIS_RANGE`] (the larger draw becomes the major axis) with a
/// rotation uniform over `[0, pi)`. A draw whose inflation by
/// `margin + START_GOAL_CLEARANCE` would cover the start or the goal is
/// rejected and redrawn, up to [`PLACEMENT_ATTEMPTS`] times per obstacle.
///
/// The draw order per attempt is fixed (shape kind, center x, center y,
/// then shape parameters); reordering would silently change every
/// generated environment.
pub fn generate_environment(
    seed: u64,
    n_obstacles: usize,
    bounds: &Bounds,
    start: Vector2<f64>,
    goal: Vector2<f64>,
    margin: f64,
) -> Result<Environment, SimError> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(SimError::InvalidEnvironment(format!(
            "inflation margin must be nonnegative, got {margin}"
        )));
    }
    for (name, p) in [("start", start), ("goal", goal)] {
        if !bounds.contains(p) {
            return Err(SimError::InvalidEnvironment(format!(
                "{name} {p:?} lies outside the bounds"
            )));
        }
    }
    let center_region = bounds.shrunk(CENTER_EDGE_INSET)?;
    let clearance = margin + START_GOAL_CLEARANCE;

    let mut rng = SplitMix64::new(seed);
    let mut obstacles = Vec::with_capacity(n_obstacles);
    for index in 0..n_obstacles {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let candidate = draw_obstacle(&mut rng, &center_region)?;
            let grown = candidate.inflated(clearance)?;
            if grown.barrier(start) > 0.0 && grown.barrier(goal) > 0.0 {
                placed = Some(candidate);
                break;
            }
        }
        match placed {
            Some(obstacle) => obstacles.push(obstacle),
            None => {
                return Err(SimError::InvalidEnvironment(format!(
                    "could not place obstacle {index} clear of start and goal \
                     after {PLACEMENT_ATTEMPTS} attempts"
                )))
            }
        }
    }

    Ok(Environment {
        obstacles,
        start,
        goal,
        bounds: *bounds,
        seed,
    })
}

fn draw_obstacle(rng: &mut SplitMix64, region: &Bounds) -> Result<Obstacle, SimError> {
    let is_circle = rng.next_f64() < 0.5;
    let center = Vector2::new(
        rng.uniform(region.min.x, region.max.x),
        rng.uniform(region.min.y, region.max.y),
    );
    let obstacle = if is_circle {
        let radius = rng.uniform(CIRCLE_RADIUS_RANGE.0, CIRCLE_RADIUS_RANGE.1);
        Obstacle::circle(center, radius)?
    } else {
        let a = rng.uniform(ELLIPSE_AXIS_RANGE.0, ELLIPSE_AXIS_RANGE.1);
        let b = rng.uniform(ELLIPSE_AXIS_RANGE.0, ELLIPSE_AXIS_RANGE.1);
        let rotation = rng.uniform(0.0, PI);
        Obstacle::ellipse(center, a.max(b), a.min(b), rotation)?
    };
    Ok(obstacle)
}
