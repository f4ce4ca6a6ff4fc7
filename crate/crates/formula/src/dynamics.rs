//! Unicycle-with-speed robot model.
//!
//! The state is `x = [px, py, theta, v]`: planar position, heading, and
//! forward speed. The input is `u = [a, omega]`: longitudinal acceleration
//! and heading rate. The model is control-affine,
//!
//! ```text
//! xdot = f(x) + g(x) u,   f(x) = [v cos(theta), v sin(theta), 0, 0],
//! ```
//!
//! with a constant actuation matrix `g` that routes `omega` into the heading
//! and `a` into the speed. Integration is explicit forward Euler with the
//! speed clamped to its physical range after every step. Heading is stored
//! unwrapped; angle differences are wrapped where they are consumed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

/// Dimension of the robot state vector.
pub const STATE_DIM: usize = 4;
/// Dimension of the input vector.
pub const INPUT_DIM: usize = 2;
/// Default integration step in seconds, shared by simulation and control.
pub const DEFAULT_DT: f64 = 0.05;

/// Errors surfaced by the model primitives.
#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in state or input")]
    NonFinite,
    #[error("integration step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("limits are inconsistent: {0}")]
    InvalidLimits(&'static str),
}

/// Robot state: position, heading (radians, unwrapped), forward speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub px: f64,
    pub py: f64,
    pub theta: f64,
    pub v: f64,
}

impl RobotState {
    pub fn new(px: f64, py: f64, theta: f64, v: f64) -> Self {
        Self { px, py, theta, v }
    }

    /// State as `[px, py, theta, v]`.
    pub fn as_array(&self) -> [f64; STATE_DIM] {
        [self.px, self.py, self.theta, self.v]
    }

    pub fn from_array(x: [f64; STATE_DIM]) -> Self {
        Self { px: x[0], py: x[1], theta: x[2], v: x[3] }
    }

    /// Planar position `[px, py]`.
    pub fn position(&self) -> [f64; 2] {
        [self.px, self.py]
    }

    /// Planar velocity `v * [cos(theta), sin(theta)]`.
    pub fn planar_velocity(&self) -> [f64; 2] {
        [self.v * self.theta.cos(), self.v * self.theta.sin()]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|c| c.is_finite())
    }
}

/// Control input: longitudinal acceleration and heading rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: f64,
    pub omega: f64,
}

impl ControlInput {
    pub const ZERO: Self = Self { a: 0.0, omega: 0.0 };

    pub fn new(a: f64, omega: f64) -> Self {
        Self { a, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.omega.is_finite()
    }

    /// Input clamped to the actuator box.
    pub fn clamped(&self, limits: &Limits) -> Self {
        Self {
            a: math::clamp(self.a, limits.a_min, limits.a_max),
            omega: math::clamp(self.omega, limits.omega_min, limits.omega_max),
        }
    }
}

/// Actuator and speed bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub a_min: f64,
    pub a_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for Limits {
    /// Bounds for a small differential-drive platform: `a` in [-2, 2] m/s^2,
    /// `omega` in [-2, 2] rad/s, `v` in [0, 1.5] m/s (no reversing).
    fn default() -> Self {
        Self {
            a_min: -2.0,
            a_max: 2.0,
            omega_min: -2.0,
            omega_max: 2.0,
            v_min: 0.0,
            v_max: 1.5,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let vals = [self.a_min, self.a_max, self.omega_min, self.omega_max, self.v_min, self.v_max];
        if vals.iter().any(|c| !c.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        if self.a_min > self.a_max {
            return Err(DynamicsError::InvalidLimits("a_min > a_max"));
        }
        if self.omega_min > self.omega_max {
            return Err(DynamicsError::InvalidLimits("omega_min > omega_max"));
        }
        if self.v_min > self.v_max {
            return Err(DynamicsError::InvalidLimits("v_min > v_max"));
        }
        Ok(())
    }

    /// Speed clamped to `[v_min, v_max]`.
    pub fn clamp_speed(&self, v: f64) -> f64 {
        math::clamp(v, self.v_min, self.v_max)
    }
}

/// Drift term `f(x) = [v cos(theta), v sin(theta), 0, 0]`.
pub fn drift(x: &RobotState) -> [f64; STATE_DIM] {
    [x.v * x.theta.cos(), x.v * x.theta.sin(), 0.0, 0.0]
}

/// Constant actuation matrix `g` (4x2, row-major): `g u = [0, 0, omega, a]`.
pub fn actuation() -> [[f64; INPUT_DIM]; STATE_DIM] {
    [[0.0, 0.0], [0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]
}

/// The contribution `g u` of an input to the state derivative.
pub fn control_effect(u: &ControlInput) -> [f64; STATE_DIM] {
    [0.0, 0.0, u.omega, u.a]
}

/// One forward-Euler step of the model.
///
/// The input is clamped to the actuator box before integrating, and the
/// resulting speed is clamped to `[v_min, v_max]`. Heading is left
/// unwrapped. Errors on non-finite state/input or a non-positive `dt`.
pub fn step(
    x: &RobotState,
    u: &ControlInput,
    dt: f64,
    limits: &Limits,
) -> Result<RobotState, DynamicsError> {
    if !x.is_finite() || !u.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let u = u.clamped(limits);
    let f = drift(x);
    let gu = control_effect(&u);
    Ok(RobotState {
        px: x.px + dt * (f[0] + gu[0]),
        py: x.py + dt * (f[1] + gu[1]),
        theta: x.theta + dt * (f[2] + gu[2]),
        v: limits.clamp_speed(x.v + dt * (f[3] + gu[3])),
    })
}
