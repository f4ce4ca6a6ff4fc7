//! Receding-horizon tracking controller with a Lyapunov decrease constraint.
//!
//! At each tick the controller minimises the input effort
//! `sum_k |u_k|^2 dt` over an `N`-step forward-Euler prediction, subject to
//! the control-Lyapunov condition `Vdot_k + beta V_k <= 0` at every
//! predicted stage, with `V` the quadratic tracking Lyapunov function from
//! [`crate::formation`]. The nominal state is propagated across the horizon
//! by holding its current rate constant.
//!
//! The stage conditions are softened into a quadratic penalty: writing
//! `viol_k(u) = max(0, Vdot_k + beta V_k)`, the solved objective is
//!
//! ```text
//! Phi(u) = sum_k |u_k|^2 dt + rho * sum_k viol_k(u)^2.
//! ```
//!
//! Penalising every violating stage (rather than only the worst one) keeps
//! `Phi` continuously differentiable, which first-order descent needs: a
//! max-of-stages penalty is kinked wherever two stages tie for the maximum
//! and reliably stalls the line search exactly there. Gradients flow through
//! the rollout by a hand-derived adjoint pass (including the speed-clamp
//! mask), so the projected-gradient solver sees exact derivatives almost
//! everywhere. The reported cost excludes the penalty term; the *worst*
//! residual stage violation is reported separately as `slack`.

use thiserror::Error;

use crate::dynamics::{
    control_effect, drift, step, ControlInput, DynamicsError, Limits, RobotState, DEFAULT_DT,
};
use crate::formation::{lyapunov, lyapunov_rate, tracking_error};
use crate::math;
use crate::solver::{minimize_box, DescentConfig};

/// Constraint violations at or below this level are attributed to the soft
/// penalty's finite stiffness; larger residuals mean the decrease condition
/// was genuinely unattainable and the solution is flagged infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-2;

#[derive(Debug, Error, PartialEq)]
pub enum ClfMpcError {
    #[error("non-finite state or nominal input to the tracking controller")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Horizon, discretisation, and penalty parameters of the tracking MPC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfMpcConfig {
    /// Prediction horizon in steps.
    pub horizon: usize,
    /// Discretisation step, matching the simulation step.
    pub dt: f64,
    /// Exponential decrease rate demanded of the Lyapunov function.
    pub clf_rate: f64,
    /// Weight of the squared stage violations in the solved objective.
    pub slack_weight: f64,
    pub limits: Limits,
    pub solver: DescentConfig,
}

impl Default for ClfMpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: DEFAULT_DT,
            clf_rate: 1.0,
            slack_weight: 1e3,
            limits: Limits::default(),
            solver: DescentConfig::default(),
        }
    }
}

impl ClfMpcConfig {
    pub fn validate(&self) -> Result<(), ClfMpcError> {
        if self.horizon == 0 {
            return Err(ClfMpcError::InvalidConfig("horizon must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ClfMpcError::InvalidConfig("dt must be positive"));
        }
        if !(self.clf_rate > 0.0) {
            return Err(ClfMpcError::InvalidConfig("clf_rate must be positive"));
        }
        if !(self.slack_weight > 0.0) {
            return Err(ClfMpcError::InvalidConfig("slack_weight must be positive"));
        }
        self.limits.validate()?;
        Ok(())
    }
}

/// Result of one horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// Planned inputs for the whole horizon.
    pub sequence: Vec<ControlInput>,
    /// The input to apply this tick (`sequence[0]`).
    pub first: ControlInput,
    /// Tracking effort `sum_k |u_k|^2 dt`, excluding the slack penalty.
    pub cost: f64,
    /// Residual violation of the decrease condition at the solution.
    pub slack: f64,
    /// True when the residual violation is small enough to attribute to the
    /// penalty stiffness (see [`FEASIBILITY_TOL`]).
    pub feasible: bool,
    pub iterations: usize,
}

/// One tracking-control instance: current state, nominal state, and the
/// (held-constant) nominal rate.
#[derive(Debug, Clone, Copy)]
struct Instance {
    x0: RobotState,
    xhat0: RobotState,
    xhat_dot: [f64; 4],
}

/// `Jf(x)^T y` for the model's drift Jacobian; only heading and speed rows
/// of the transpose are non-zero.
pub(crate) fn drift_jacobian_transpose_times(x: &RobotState, y: [f64; 4]) -> [f64; 4] {
    let (s, c) = x.theta.sin_cos();
    [0.0, 0.0, x.v * (-s * y[0] + c * y[1]), c * y[0] + s * y[1]]
}

/// Penalty objective and (optionally) its gradient for a flattened input
/// sequence `[a_0, w_0, a_1, w_1, ...]`. Returns infinity for iterates the
/// rollout rejects, which the line search treats as "do not accept".
fn objective(cfg: &ClfMpcConfig, inst: &Instance, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let n = cfg.horizon;
    let dt = cfg.dt;
    debug_assert_eq!(u.len(), 2 * n);

    let mut states = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    let mut viols = vec![0.0; n];
    // clamp_free[k] records whether the speed survived the transition into
    // stage k without hitting a bound (stage 0 is the given state).
    let mut clamp_free = vec![true; n];
    let mut x = inst.x0;
    let mut effort = 0.0;

    for k in 0..n {
        let uk = ControlInput::new(u[2 * k], u[2 * k + 1]);
        let xhat_k = RobotState::from_array(math::add4(
            inst.xhat0.as_array(),
            math::scale4(k as f64 * dt, inst.xhat_dot),
        ));
        let e = tracking_error(&x, &xhat_k);
        let gk = lyapunov_rate(&x, &uk, &e, &inst.xhat_dot) + cfg.clf_rate * lyapunov(&e);
        viols[k] = gk.max(0.0);
        effort += (uk.a * uk.a + uk.omega * uk.omega) * dt;
        states.push(x);
        errors.push(e);

        if k + 1 < n {
            let pre_clamp_v = x.v + dt * uk.a;
            // Inclusive bounds: exactly on a speed limit the useful one-sided
            // derivative points back into the interior, so the stage still
            // counts as clamp-free. Overshoot into the clamped side is caught
            // by the line search re-evaluating the true objective.
            clamp_free[k + 1] =
                pre_clamp_v >= cfg.limits.v_min && pre_clamp_v <= cfg.limits.v_max;
            x = match step(&x, &uk, dt, &cfg.limits) {
                Ok(next) => next,
                Err(_) => return f64::INFINITY,
            };
        }
    }

    let penalty: f64 = viols.iter().map(|v| v * v).sum();
    let value = effort + cfg.slack_weight * penalty;

    if let Some(grad) = grad {
        for (k, g) in grad.chunks_exact_mut(2).enumerate() {
            g[0] = 2.0 * dt * u[2 * k];
            g[1] = 2.0 * dt * u[2 * k + 1];
        }
        // Direct stage terms and adjoint seeds d g_k / d x_k, one per
        // violating stage.
        let mut x_grad = vec![[0.0; 4]; n];
        for k in 0..n {
            if viols[k] > 0.0 {
                let w = 2.0 * cfg.slack_weight * viols[k];
                let e_k = errors[k].as_array();
                grad[2 * k] += w * 2.0 * e_k[3];
                grad[2 * k + 1] += w * 2.0 * e_k[2];

                let x_k = &states[k];
                let u_k = ControlInput::new(u[2 * k], u[2 * k + 1]);
                let xdot = math::add4(drift(x_k), control_effect(&u_k));
                let diff = math::sub4(xdot, inst.xhat_dot);
                let jt_e = drift_jacobian_transpose_times(x_k, e_k);
                for c in 0..4 {
                    x_grad[k][c] +=
                        w * (2.0 * diff[c] + 2.0 * jt_e[c] + 2.0 * cfg.clf_rate * e_k[c]);
                }
            }
        }

        // Walk the transitions backwards: u_k influences every later stage
        // through x_{k+1}, with the speed clamp masking its row when active.
        let mut lambda = x_grad[n - 1];
        for k in (0..n - 1).rev() {
            if !clamp_free[k + 1] {
                lambda[3] = 0.0;
            }
            grad[2 * k] += dt * lambda[3];
            grad[2 * k + 1] += dt * lambda[2];
            let jt_l = drift_jacobian_transpose_times(&states[k], lambda);
            lambda = math::add4(lambda, math::scale4(dt, jt_l));
            lambda = math::add4(lambda, x_grad[k]);
        }
    }

    value
}

/// Effort cost and worst residual stage violation at a given input sequence.
fn objective_parts(cfg: &ClfMpcConfig, inst: &Instance, u: &[f64]) -> (f64, f64) {
    let n = cfg.horizon;
    let dt = cfg.dt;
    let mut x = inst.x0;
    let mut effort = 0.0;
    let mut worst = 0.0f64;
    for k in 0..n {
        let uk = ControlInput::new(u[2 * k], u[2 * k + 1]);
        let xhat_k = RobotState::from_array(math::add4(
            inst.xhat0.as_array(),
            math::scale4(k as f64 * dt, inst.xhat_dot),
        ));
        let e = tracking_error(&x, &xhat_k);
        let gk = lyapunov_rate(&x, &uk, &e, &inst.xhat_dot) + cfg.clf_rate * lyapunov(&e);
        worst = worst.max(gk);
        effort += (uk.a * uk.a + uk.omega * uk.omega) * dt;
        if k + 1 < n {
            x = match step(&x, &uk, dt, &cfg.limits) {
                Ok(next) => next,
                Err(_) => return (f64::INFINITY, f64::INFINITY),
            };
        }
    }
    (effort, worst.max(0.0))
}

/// The tracking controller with its persistent warm start.
///
/// Successive calls shift the previous solution by one stage (zero-filling
/// the tail), which matches the receding-horizon usage pattern of one solve
/// per control tick.
#[derive(Debug, Clone)]
pub struct ClfMpc {
    cfg: ClfMpcConfig,
    warm: Vec<f64>,
}

impl ClfMpc {
    pub fn new(cfg: ClfMpcConfig) -> Result<Self, ClfMpcError> {
        cfg.validate()?;
        let warm = vec![0.0; 2 * cfg.horizon];
        Ok(Self { cfg, warm })
    }

    pub fn config(&self) -> &ClfMpcConfig {
        &self.cfg
    }

    /// Clears the warm start (for example when the tracked reference jumps).
    pub fn reset(&mut self) {
        self.warm.fill(0.0);
    }

    /// Solves one tracking instance and advances the warm start.
    pub fn solve(
        &mut self,
        x0: &RobotState,
        xhat0: &RobotState,
        xhat_dot: &[f64; 4],
    ) -> Result<MpcSolution, ClfMpcError> {
        if !x0.is_finite() || !xhat0.is_finite() || xhat_dot.iter().any(|c| !c.is_finite()) {
            return Err(ClfMpcError::NonFinite);
        }
        let inst = Instance { x0: *x0, xhat0: *xhat0, xhat_dot: *xhat_dot };
        let n = self.cfg.horizon;
        let mut u = self.warm.clone();
        let mut lower = Vec::with_capacity(2 * n);
        let mut upper = Vec::with_capacity(2 * n);
        for _ in 0..n {
            lower.push(self.cfg.limits.a_min);
            lower.push(self.cfg.limits.omega_min);
            upper.push(self.cfg.limits.a_max);
            upper.push(self.cfg.limits.omega_max);
        }
        let cfg = self.cfg;
        let res = minimize_box(&mut u, &lower, &upper, &cfg.solver, |u, grad| {
            objective(&cfg, &inst, u, grad)
        });
        let (cost, slack) = objective_parts(&cfg, &inst, &u);

        // Shift the solution one stage forward for the next tick.
        self.warm[..2 * (n - 1)].copy_from_slice(&u[2..]);
        self.warm[2 * (n - 1)] = 0.0;
        self.warm[2 * n - 1] = 0.0;

        let sequence: Vec<ControlInput> =
            u.chunks_exact(2).map(|p| ControlInput::new(p[0], p[1])).collect();
        let first = sequence[0];
        Ok(MpcSolution {
            first,
            cost,
            slack,
            feasible: slack <= FEASIBILITY_TOL,
            iterations: res.iterations,
            sequence,
        })
    }
}
