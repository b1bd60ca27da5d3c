use crate::SafetyError;
use std::f64::consts::PI;

/// Per-step kinematic envelope of the walker.
///
/// Velocity bands are expressed in the body frame: longitudinal along the
/// heading, lateral across it. The lateral band `[vel_lat_min, vel_lat_max]`
/// describes motion *away from the stance leg*; its sign is resolved per
/// step from the stance parity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicLimits {
    pub vel_long_min: f64,
    pub vel_long_max: f64,
    pub vel_lat_min: f64,
    pub vel_lat_max: f64,
    /// Farthest the next foothold may land from the mass at step start, m.
    pub max_step_reach: f64,
    /// Largest heading change a single step may command, rad.
    pub max_turn_per_step: f64,
    /// Weight tying turn rate into the speed band: turning fast eats into
    /// the allowed forward speed.
    pub turn_speed_coupling: f64,
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<(), SafetyError> {
        let fields = [
            self.vel_long_min,
            self.vel_long_max,
            self.vel_lat_min,
            self.vel_lat_max,
            self.max_step_reach,
            self.max_turn_per_step,
            self.turn_speed_coupling,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(SafetyError::InvalidConfig(
                "kinematic limits must be finite".into(),
            ));
        }
        if self.vel_long_min > self.vel_long_max {
            return Err(SafetyError::InvalidConfig(format!(
                "longitudinal band is empty: [{}, {}]",
                self.vel_long_min, self.vel_long_max
            )));
        }
        if self.vel_lat_min < 0.0 || self.vel_lat_min > self.vel_lat_max {
            return Err(SafetyError::InvalidConfig(format!(
                "lateral band must satisfy 0 <= min <= max, got [{}, {}]",
                self.vel_lat_min, self.vel_lat_max
            )));
        }
        if self.max_step_reach <= 0.0 || self.max_turn_per_step <= 0.0 {
            return Err(SafetyError::InvalidConfig(
                "step reach and turn limits must be positive".into(),
            ));
        }
        if self.turn_speed_coupling < 0.0 {
            return Err(SafetyError::InvalidConfig(
                "turn-speed coupling must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for KinematicLimits {
    /// Walking envelope of the reference biped.
    fn default() -> Self {
        Self {
            vel_long_min: 0.4,
            vel_long_max: 0.8,
            vel_lat_min: 0.15,
            vel_lat_max: 0.35,
            max_step_reach: 0.3,
            max_turn_per_step: PI / 16.0,
            turn_speed_coupling: 3.6,
        }
    }
}

/// Parameters of the discrete-time barrier condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfConfig {
    /// Decay rate in `(0, 1]`: the fraction of the barrier value that may
    /// be consumed in a single step. Larger values allow faster approach.
    pub gamma: f64,
    /// Margin added to every obstacle before planning, m.
    pub inflation_margin: f64,
}

impl CbfConfig {
    pub fn validate(&self) -> Result<(), SafetyError> {
        if !(self.gamma.is_finite() && self.inflation_margin.is_finite()) {
            return Err(SafetyError::InvalidConfig(
                "barrier configuration must be finite".into(),
            ));
        }
        if self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(SafetyError::InvalidConfig(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.inflation_margin < 0.0 {
            return Err(SafetyError::InvalidConfig(format!(
                "inflation margin must be nonnegative, got {}",
                self.inflation_margin
            )));
        }
        Ok(())
    }
}

impl Default for CbfConfig {
    fn default() -> Self {
        Self {
            gamma: 0.3,
            inflation_margin: 0.4,
        }
    }
}
