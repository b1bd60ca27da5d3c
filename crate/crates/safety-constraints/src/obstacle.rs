use crate::SafetyError;
use nalgebra::Vector2;
use std::f64::consts::PI;

/// Conic coefficients of an axis pair rotated by `rotation`.
///
/// Returns `(a_xx, a_xy, a_yy, size)` such that a point at offset
/// `(dx, dy)` from the ellipse center lies on the boundary exactly when
/// `a_xx dx^2 + a_xy dx dy + a_yy dy^2 = size^2`, with
/// `size = semi_major * semi_minor`. Pinning the right-hand side this way
/// makes the coefficient set unique, and it degenerates gracefully: for
/// `semi_major == semi_minor == r` the left side is `r^2 (dx^2 + dy^2)`
/// and the condition reduces to the circle equation scaled by `r^2`.
pub fn ellipse_coefficients(
    semi_major: f64,
    semi_minor: f64,
    rotation: f64,
) -> Result<(f64, f64, f64, f64), SafetyError> {
    if !(semi_major.is_finite() && semi_minor.is_finite() && rotation.is_finite()) {
        return Err(SafetyError::InvalidGeometry(
            "ellipse parameters must be finite".into(),
        ));
    }
    if semi_minor <= 0.0 || semi_major < semi_minor {
        return Err(SafetyError::InvalidGeometry(format!(
            "ellipse axes must satisfy semi_major >= semi_minor > 0, got {semi_major} and {semi_minor}"
        )));
    }
    let (s, c) = rotation.sin_cos();
    let (a2, b2) = (semi_major * semi_major, semi_minor * semi_minor);
    let a_xx = b2 * c * c + a2 * s * s;
    let a_xy = 2.0 * c * s * (b2 - a2);
    let a_yy = b2 * s * s + a2 * c * c;
    Ok((a_xx, a_xy, a_yy, semi_major * semi_minor))
}

/// Rotated ellipse, stored with both its generating axes and the derived
/// conic coefficients so either view is available without recomputation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    center: Vector2<f64>,
    semi_major: f64,
    semi_minor: f64,
    /// Major-axis direction, normalized to `[0, pi)`.
    rotation: f64,
    a_xx: f64,
    a_xy: f64,
    a_yy: f64,
    size: f64,
}

impl Ellipse {
    pub fn new(
        center: Vector2<f64>,
        semi_major: f64,
        semi_minor: f64,
        rotation: f64,
    ) -> Result<Self, SafetyError> {
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(SafetyError::InvalidGeometry(
                "ellipse center must be finite".into(),
            ));
        }
        // An ellipse is symmetric under a half-turn of its axes.
        let rotation = rotation.rem_euclid(PI);
        let (a_xx, a_xy, a_yy, size) = ellipse_coefficients(semi_major, semi_minor, rotation)?;
        Ok(Self {
            center,
            semi_major,
            semi_minor,
            rotation,
            a_xx,
            a_xy,
            a_yy,
            size,
        })
    }

    pub fn center(&self) -> Vector2<f64> {
        self.center
    }

    pub fn semi_major(&self) -> f64 {
        self.semi_major
    }

    pub fn semi_minor(&self) -> f64 {
        self.semi_minor
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    /// Conic coefficients `(a_xx, a_xy, a_yy, size)`.
    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        (self.a_xx, self.a_xy, self.a_yy, self.size)
    }

    /// Point on the boundary at parametric angle `t` (in the axis frame).
    pub fn boundary_point(&self, t: f64) -> Vector2<f64> {
        let (s, c) = self.rotation.sin_cos();
        let local = Vector2::new(self.semi_major * t.cos(), self.semi_minor * t.sin());
        self.center + Vector2::new(c * local.x - s * local.y, s * local.x + c * local.y)
    }
}

/// Planar obstacle with a quadratic barrier function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obstacle {
    Circle { center: Vector2<f64>, radius: f64 },
    Ellipse(Ellipse),
}

impl Obstacle {
    pub fn circle(center: Vector2<f64>, radius: f64) -> Result<Self, SafetyError> {
        if !(center.x.is_finite() && center.y.is_finite() && radius.is_finite()) || radius <= 0.0 {
            return Err(SafetyError::InvalidGeometry(format!(
                "circle requires finite center and radius > 0, got radius {radius}"
            )));
        }
        Ok(Obstacle::Circle { center, radius })
    }

    pub fn ellipse(
        center: Vector2<f64>,
        semi_major: f64,
        semi_minor: f64,
        rotation: f64,
    ) -> Result<Self, SafetyError> {
        Ok(Obstacle::Ellipse(Ellipse::new(
            center, semi_major, semi_minor, rotation,
        )?))
    }

    pub fn center(&self) -> Vector2<f64> {
        match self {
            Obstacle::Circle { center, .. } => *center,
            Obstacle::Ellipse(e) => e.center(),
        }
    }

    /// Barrier value at `point`: positive outside, zero on the boundary,
    /// negative inside.
    ///
    /// Circles use `|d|^2 - r^2`; ellipses use the conic form with the size
    /// term pinned to the product of the semi-axes.
    pub fn barrier(&self, point: Vector2<f64>) -> f64 {
        match self {
            Obstacle::Circle { center, radius } => {
                let d = point - center;
                d.x * d.x + d.y * d.y - radius * radius
            }
            Obstacle::Ellipse(e) => {
                let d = point - e.center;
                e.a_xx * d.x * d.x + e.a_xy * d.x * d.y + e.a_yy * d.y * d.y - e.size * e.size
            }
        }
    }

    /// Gradient of [`Obstacle::barrier`] with respect to the point.
    pub fn barrier_gradient(&self, point: Vector2<f64>) -> Vector2<f64> {
        match self {
            Obstacle::Circle { center, .. } => 2.0 * (point - center),
            Obstacle::Ellipse(e) => {
                let d = point - e.center;
                Vector2::new(
                    2.0 * e.a_xx * d.x + e.a_xy * d.y,
                    e.a_xy * d.x + 2.0 * e.a_yy * d.y,
                )
            }
        }
    }

    /// Grows the obstacle by `margin` on every side: the radius of a circle
    /// and both semi-axes of an ellipse increase by `margin`, leaving the
    /// center and orientation untouched.
    pub fn inflated(&self, margin: f64) -> Result<Self, SafetyError> {
        if !margin.is_finite() || margin < 0.0 {
            return Err(SafetyError::InvalidConfig(format!(
                "inflation margin must be nonnegative, got {margin}"
            )));
        }
        match self {
            Obstacle::Circle { center, radius } => Obstacle::circle(*center, radius + margin),
            Obstacle::Ellipse(e) => Obstacle::ellipse(
                e.center,
                e.semi_major + margin,
                e.semi_minor + margin,
                e.rotation,
            ),
        }
    }
}
