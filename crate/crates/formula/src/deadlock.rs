//! Event-triggered deadlock detection and resolution.
//!
//! A follower is deadlocked when three things hold at once: its tracking
//! cost is positive (it still wants to move), the safety filter is fully
//! absorbing the motion the tracker asked for, and the robot is (nearly)
//! stationary. The detector folds these into one sign-based indicator
//!
//! `E = sign(|J - L| + |v|) - sign(J)`
//!
//! with `sign(0) = 0`: `E` only reaches `-1` when `J > 0` while both the
//! cost conflict `|J - L|` and the speed are zero. `L` is the conflict
//! cost — the portion of `J` the filter refuses to realise — so `|J - L|`
//! vanishes exactly when the filter vetoes everything.
//!
//! Floating-point quantities are never exactly zero, so each term is
//! quantised before the sign is taken: speeds below `speed_eps` count as
//! stationary, costs below `cost_eps` count as satisfied, and a conflict
//! within a relative `conflict_eps` of `J` counts as total.
//!
//! Resolution perturbs the follower's consensus target for one control
//! tick: the positional error is rotated by a fixed angle (heading and
//! speed targets pass through), which breaks the symmetry that produces
//! mutual blocking, and the tracker is re-solved against the rotated
//! target in the same tick. A cooldown suppresses re-counting the same
//! sustained event while leaving the perturbation itself active.

use crate::dynamics::{ControlInput, RobotState};
use crate::math::rotate2;

/// Detector thresholds and perturbation geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlockConfig {
    /// Speeds with magnitude below this count as stationary (m/s).
    pub speed_eps: f64,
    /// Costs below this count as zero.
    pub cost_eps: f64,
    /// Conflicts within this *relative* fraction of `J` count as total.
    pub conflict_eps: f64,
    /// Rotation applied to the positional target error (rad).
    pub rotation: f64,
    /// Scale applied to the rotated positional error.
    pub scale: f64,
    /// Ticks after a trigger during which new triggers are not counted.
    pub cooldown_steps: usize,
}

impl Default for DeadlockConfig {
    fn default() -> Self {
        Self {
            speed_eps: 0.05,
            cost_eps: 1e-4,
            conflict_eps: 0.05,
            rotation: std::f64::consts::FRAC_PI_4,
            scale: 1.0,
            cooldown_steps: 20,
        }
    }
}

/// Outcome of one detector evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlockReport {
    /// The indicator `E` after quantisation; `-1.0` signals deadlock.
    pub indicator: f64,
    pub deadlock: bool,
}

/// Portion of the tracking cost the safety filter refused to realise.
///
/// Scales `J` by the squared relative deviation between the nominal and
/// filtered inputs, capped at one: untouched inputs give `0`, a fully
/// vetoed input gives `J` itself. A zero nominal input carries no motion
/// request, so any deviation there counts as total only if it is nonzero.
pub fn filter_conflict_cost(
    j_clf: f64,
    u_nominal: ControlInput,
    u_filtered: ControlInput,
) -> f64 {
    let da = u_filtered.a - u_nominal.a;
    let dw = u_filtered.omega - u_nominal.omega;
    let dev = da * da + dw * dw;
    let mag = u_nominal.a * u_nominal.a + u_nominal.omega * u_nominal.omega;
    if mag <= 1e-12 {
        if dev <= 1e-12 {
            0.0
        } else {
            j_clf
        }
    } else {
        j_clf * (dev / mag).min(1.0)
    }
}

fn sign0(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Stateful resolver: pure detection via [`Resolver::evaluate`], cooldown
/// bookkeeping via [`Resolver::advance`].
#[derive(Debug, Clone)]
pub struct Resolver {
    cfg: DeadlockConfig,
    cooldown: usize,
}

impl Resolver {
    pub fn new(cfg: DeadlockConfig) -> Self {
        Self { cfg, cooldown: 0 }
    }

    pub fn config(&self) -> &DeadlockConfig {
        &self.cfg
    }

    /// Quantise the inputs and evaluate the indicator. Pure: no state is
    /// touched, so the same inputs always give the same report.
    pub fn evaluate(&self, j_clf: f64, conflict_cost: f64, speed: f64) -> DeadlockReport {
        let j = if j_clf.abs() <= self.cfg.cost_eps { 0.0 } else { j_clf };
        let mut conflict = (j_clf - conflict_cost).abs();
        // Snap on either scale: relative to J for genuine vetoes, absolute
        // below cost_eps so a satisfied tracker's residual never registers.
        if conflict <= self.cfg.conflict_eps * j_clf.abs() || conflict <= self.cfg.cost_eps {
            conflict = 0.0;
        }
        let v = if speed.abs() <= self.cfg.speed_eps { 0.0 } else { speed.abs() };
        let indicator = sign0(conflict + v) - sign0(j);
        DeadlockReport { indicator, deadlock: indicator < 0.0 }
    }

    /// Advance one tick. Returns `true` when `deadlock` should be counted
    /// as a fresh trigger (i.e. the cooldown has expired); the caller
    /// applies the perturbation on every deadlocked tick regardless.
    pub fn advance(&mut self, deadlock: bool) -> bool {
        if self.cooldown > 0 {
            self.cooldown -= 1;
            return false;
        }
        if deadlock {
            self.cooldown = self.cfg.cooldown_steps;
            true
        } else {
            false
        }
    }

    /// Rotate the positional part of the target error about the robot;
    /// heading and speed targets pass through unchanged.
    pub fn perturbed_target(&self, x: &RobotState, target: &RobotState) -> RobotState {
        let err = [target.px - x.px, target.py - x.py];
        let rotated = rotate2(err, self.cfg.rotation);
        RobotState {
            px: x.px + self.cfg.scale * rotated[0],
            py: x.py + self.cfg.scale * rotated[1],
            theta: target.theta,
            v: target.v,
        }
    }
}
