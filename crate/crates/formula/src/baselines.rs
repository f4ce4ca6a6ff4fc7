//! Reference controllers the proposed stack is benchmarked against.
//!
//! * [`Apf`] — artificial potential fields in the classical form: an
//!   attractive pull toward the target plus short-range repulsive pushes
//!   from obstacles, summed into a desired planar velocity and mapped to
//!   actuator commands by the shared velocity back-map.
//! * [`MpcCbf`] — a tracking MPC over the same horizon as the proposed
//!   tracker, but with quadratic state/input weights and the discrete
//!   barrier inequality `h_{k+1} >= (1 - alpha dt) h_k` folded into the
//!   objective as one quadratic penalty per obstacle per stage.
//!
//! The third baseline, CLF-CBF-QP, is deliberately *not* a separate
//! implementation: it is the proposed tracker run at horizon 1 followed by
//! the analytic-barrier projection, composed from the same [`crate::clf_mpc`]
//! and [`crate::safety_filter`] code paths by the simulation harness. That
//! keeps the comparison about structure (myopic vs. receding-horizon,
//! analytic vs. learned barrier), not implementation quality.

use thiserror::Error;

use crate::barrier::{self, BarrierConfig, Obstacle};
use crate::clf_mpc::{drift_jacobian_transpose_times, MpcSolution, FEASIBILITY_TOL};
use crate::dynamics::{step, ControlInput, Limits, RobotState};
use crate::formation::tracking_error;
use crate::math;
use crate::safety_filter::velocity_to_input;
use crate::solver::{minimize_box, DescentConfig};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("invalid baseline configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite input to baseline controller")]
    NonFinite,
}

/// Gains of the potential-field controller. Defaults make the attraction
/// alone saturate the speed limit at 1.5 m of positional error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApfConfig {
    pub k_att: f64,
    pub k_rep: f64,
    /// Influence range of the repulsive field, measured from the obstacle
    /// centre (m).
    pub rho0: f64,
    /// Gain mapping net force to desired velocity.
    pub v_gain: f64,
}

impl Default for ApfConfig {
    fn default() -> Self {
        Self { k_att: 1.0, k_rep: 0.5, rho0: 1.0, v_gain: 1.0 }
    }
}

/// Artificial potential fields: gradient descent on an attractive bowl plus
/// repulsive barriers, expressed directly as a desired velocity.
#[derive(Debug, Clone, Copy)]
pub struct Apf {
    cfg: ApfConfig,
}

impl Apf {
    pub fn new(cfg: ApfConfig) -> Self {
        Self { cfg }
    }

    /// Net field force at `p`: `k_att (target - p)` plus, for each obstacle
    /// whose centre is closer than `rho0`, the classical point-charge
    /// repulsion `k_rep (1/rho - 1/rho0) / rho^2` directed away from it.
    ///
    /// `rho` is the *centre* distance: the potential does not know the
    /// obstacle's extent, so against wide pulls the balance point can sit at
    /// the obstacle surface or inside it — scraping passes and occasional
    /// contact are this baseline's characteristic failure, alongside
    /// head-on local minima.
    pub fn force(&self, p: [f64; 2], target: [f64; 2], obstacles: &[Obstacle]) -> [f64; 2] {
        let mut f = math::scale2(self.cfg.k_att, math::sub2(target, p));
        for obs in obstacles {
            let away = math::sub2(p, obs.center());
            let dist = math::norm2(away);
            if dist <= 1e-9 {
                // Dead centre: no defined direction, skip rather than NaN.
                continue;
            }
            // Floored to keep the 1/rho^2 factor finite at the centre.
            let rho = dist.max(1e-3);
            if rho < self.cfg.rho0 {
                let mag = self.cfg.k_rep * (1.0 / rho - 1.0 / self.cfg.rho0) / (rho * rho);
                f = math::add2(f, math::scale2(mag / dist, away));
            }
        }
        f
    }

    /// Full control step: force, velocity, actuator back-map.
    pub fn control(
        &self,
        x: &RobotState,
        target: [f64; 2],
        obstacles: &[Obstacle],
        limits: &Limits,
        dt: f64,
    ) -> ControlInput {
        let f = self.force(x.position(), target, obstacles);
        let w = math::scale2(self.cfg.v_gain, f);
        velocity_to_input(w, x, limits, dt)
    }
}

/// Weights and horizon of the barrier-penalised tracking MPC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcCbfConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal state weights on `[px, py, theta, v]` tracking error.
    pub q: [f64; 4],
    /// Diagonal input weights on `[a, omega]`.
    pub r: [f64; 2],
    /// Rate of the discrete barrier inequality.
    pub cbf_alpha: f64,
    /// Penalty stiffness on barrier violations.
    pub penalty_weight: f64,
    pub barrier: BarrierConfig,
    pub limits: Limits,
    pub solver: DescentConfig,
}

impl MpcCbfConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            horizon: 10,
            dt,
            q: [10.0, 10.0, 1.0, 1.0],
            r: [1.0, 1.0],
            cbf_alpha: 1.0,
            penalty_weight: 1e3,
            barrier: BarrierConfig::default(),
            limits: Limits::default(),
            solver: DescentConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.horizon == 0 {
            return Err(BaselineError::InvalidConfig("horizon must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(BaselineError::InvalidConfig("dt must be positive"));
        }
        if self.q.iter().chain(self.r.iter()).any(|w| *w < 0.0) {
            return Err(BaselineError::InvalidConfig("weights must be non-negative"));
        }
        if !(self.penalty_weight > 0.0) {
            return Err(BaselineError::InvalidConfig("penalty_weight must be positive"));
        }
        if !(self.cbf_alpha > 0.0) {
            return Err(BaselineError::InvalidConfig("cbf_alpha must be positive"));
        }
        self.limits.validate().map_err(|_| BaselineError::InvalidConfig("invalid limits"))?;
        Ok(())
    }
}

struct MpcCbfInstance<'a> {
    x0: RobotState,
    xhat0: RobotState,
    xhat_dot: [f64; 4],
    obstacles: &'a [Obstacle],
}

/// Penalty objective and optional exact gradient for the flattened input
/// sequence `[a_0, w_0, a_1, w_1, ...]`.
fn mpc_cbf_objective(
    cfg: &MpcCbfConfig,
    inst: &MpcCbfInstance<'_>,
    u: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = cfg.horizon;
    let dt = cfg.dt;
    debug_assert_eq!(u.len(), 2 * n);

    // Roll out x_0 .. x_n; clamp_free[k] records whether the speed entered
    // stage k without saturating.
    let mut states = Vec::with_capacity(n + 1);
    let mut clamp_free = vec![true; n + 1];
    states.push(inst.x0);
    for k in 0..n {
        let uk = ControlInput::new(u[2 * k], u[2 * k + 1]);
        let x = states[k];
        let pre_clamp_v = x.v + dt * uk.a;
        // Inclusive bounds: exactly on a speed limit the clamp is inactive
        // for moves back into the interior, and that one-sided derivative is
        // the useful one (a robot cruising at v_max must still see the
        // braking gradient). Overestimates into the clamped side are caught
        // by the line search re-evaluating the true objective.
        clamp_free[k + 1] = pre_clamp_v >= cfg.limits.v_min && pre_clamp_v <= cfg.limits.v_max;
        match step(&x, &uk, dt, &cfg.limits) {
            Ok(next) => states.push(next),
            Err(_) => return f64::INFINITY,
        }
    }

    // Direct cost and d(cost)/d(x_k) for k = 1..n.
    let mut value = 0.0;
    let mut x_grad = vec![[0.0; 4]; n + 1];
    for k in 1..=n {
        let xhat_k = RobotState::from_array(math::add4(
            inst.xhat0.as_array(),
            math::scale4(k as f64 * dt, inst.xhat_dot),
        ));
        let e = tracking_error(&states[k], &xhat_k).0;
        for c in 0..4 {
            value += cfg.q[c] * e[c] * e[c] * dt;
            x_grad[k][c] += 2.0 * cfg.q[c] * e[c] * dt;
        }
    }
    for k in 0..n {
        value += (cfg.r[0] * u[2 * k] * u[2 * k] + cfg.r[1] * u[2 * k + 1] * u[2 * k + 1]) * dt;
    }

    // Barrier penalties couple consecutive states. The penalty is linear in
    // the violation (an exact penalty): with the weight far above the
    // constraint multipliers, minimisers satisfy the inequalities exactly
    // rather than trading a small steady penetration against tracking cost.
    let decay = 1.0 - cfg.cbf_alpha * dt;
    for k in 0..n {
        for obs in inst.obstacles {
            let hk = barrier::value(states[k].position(), obs, &cfg.barrier);
            let hk1 = barrier::value(states[k + 1].position(), obs, &cfg.barrier);
            let viol = decay * hk - hk1;
            if viol > 0.0 {
                value += cfg.penalty_weight * viol;
                let w = cfg.penalty_weight;
                if k > 0 {
                    let g = barrier::gradient(states[k].position(), obs);
                    x_grad[k][0] += w * decay * g[0];
                    x_grad[k][1] += w * decay * g[1];
                }
                let g1 = barrier::gradient(states[k + 1].position(), obs);
                x_grad[k + 1][0] -= w * g1[0];
                x_grad[k + 1][1] -= w * g1[1];
            }
        }
    }

    if let Some(grad) = grad {
        for (k, g) in grad.chunks_exact_mut(2).enumerate() {
            g[0] = 2.0 * cfg.r[0] * dt * u[2 * k];
            g[1] = 2.0 * cfg.r[1] * dt * u[2 * k + 1];
        }
        // Adjoint sweep: lambda_k = dJ/dx_k accumulated backwards through
        // x_{k+1} = x_k + dt (f(x_k) + B u_k), with the speed row masked
        // where the clamp was active.
        let mut lambda = x_grad[n];
        for k in (0..n).rev() {
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

/// Tracking cost (excluding penalties) and worst discrete-barrier violation
/// at a given input sequence.
fn mpc_cbf_parts(cfg: &MpcCbfConfig, inst: &MpcCbfInstance<'_>, u: &[f64]) -> (f64, f64) {
    let n = cfg.horizon;
    let dt = cfg.dt;
    let mut states = Vec::with_capacity(n + 1);
    states.push(inst.x0);
    for k in 0..n {
        let uk = ControlInput::new(u[2 * k], u[2 * k + 1]);
        match step(&states[k], &uk, dt, &cfg.limits) {
            Ok(next) => states.push(next),
            Err(_) => return (f64::INFINITY, f64::INFINITY),
        }
    }
    let mut cost = 0.0;
    for k in 1..=n {
        let xhat_k = RobotState::from_array(math::add4(
            inst.xhat0.as_array(),
            math::scale4(k as f64 * dt, inst.xhat_dot),
        ));
        let e = tracking_error(&states[k], &xhat_k).0;
        for c in 0..4 {
            cost += cfg.q[c] * e[c] * e[c] * dt;
        }
    }
    for k in 0..n {
        cost += (cfg.r[0] * u[2 * k] * u[2 * k] + cfg.r[1] * u[2 * k + 1] * u[2 * k + 1]) * dt;
    }
    let decay = 1.0 - cfg.cbf_alpha * dt;
    let mut worst = 0.0f64;
    for k in 0..n {
        for obs in inst.obstacles {
            let hk = barrier::value(states[k].position(), obs, &cfg.barrier);
            let hk1 = barrier::value(states[k + 1].position(), obs, &cfg.barrier);
            worst = worst.max(decay * hk - hk1);
        }
    }
    (cost, worst)
}

/// The barrier-penalised tracking MPC with its persistent warm start.
#[derive(Debug, Clone)]
pub struct MpcCbf {
    cfg: MpcCbfConfig,
    warm: Vec<f64>,
}

impl MpcCbf {
    pub fn new(cfg: MpcCbfConfig) -> Result<Self, BaselineError> {
        cfg.validate()?;
        let warm = vec![0.0; 2 * cfg.horizon];
        Ok(Self { cfg, warm })
    }

    pub fn config(&self) -> &MpcCbfConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.warm.fill(0.0);
    }

    /// Solves one instance and advances the warm start. In the returned
    /// solution, `cost` is the tracking cost without penalties and `slack`
    /// is the worst violation of the discrete barrier inequality.
    ///
    /// The penalised landscape is nonconvex, and at `v = 0` the position is
    /// second-order in the turn rate, so a single descent from the warm
    /// start can wedge against an obstacle with no first-order escape.
    /// With obstacles in range the solve therefore restarts from two fixed
    /// arc probes (gentle acceleration with a constant left or right turn)
    /// and keeps the best minimiser.
    pub fn solve(
        &mut self,
        x0: &RobotState,
        xhat0: &RobotState,
        xhat_dot: &[f64; 4],
        obstacles: &[Obstacle],
    ) -> Result<MpcSolution, BaselineError> {
        if !x0.is_finite() || !xhat0.is_finite() || xhat_dot.iter().any(|c| !c.is_finite()) {
            return Err(BaselineError::NonFinite);
        }
        let inst = MpcCbfInstance { x0: *x0, xhat0: *xhat0, xhat_dot: *xhat_dot, obstacles };
        let n = self.cfg.horizon;
        let mut lower = Vec::with_capacity(2 * n);
        let mut upper = Vec::with_capacity(2 * n);
        for _ in 0..n {
            lower.push(self.cfg.limits.a_min);
            lower.push(self.cfg.limits.omega_min);
            upper.push(self.cfg.limits.a_max);
            upper.push(self.cfg.limits.omega_max);
        }
        let cfg = self.cfg;

        let mut starts: Vec<Vec<f64>> = vec![self.warm.clone()];
        if !obstacles.is_empty() {
            for turn in [1.0, -1.0] {
                let mut arc = Vec::with_capacity(2 * n);
                for _ in 0..n {
                    arc.push(0.5 * cfg.limits.a_max);
                    arc.push(turn);
                }
                starts.push(arc);
            }
        }

        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut iterations = 0;
        for mut u in starts {
            let res = minimize_box(&mut u, &lower, &upper, &cfg.solver, |u, grad| {
                mpc_cbf_objective(&cfg, &inst, u, grad)
            });
            iterations += res.iterations;
            let value = mpc_cbf_objective(&cfg, &inst, &u, None);
            if best.as_ref().is_none_or(|b| value < b.0) {
                best = Some((value, u));
            }
        }
        let (_, u) = best.expect("at least the warm start is solved");
        let (cost, worst) = mpc_cbf_parts(&cfg, &inst, &u);

        self.warm[..2 * (n - 1)].copy_from_slice(&u[2..]);
        self.warm[2 * (n - 1)] = 0.0;
        self.warm[2 * n - 1] = 0.0;

        let sequence: Vec<ControlInput> =
            u.chunks_exact(2).map(|p| ControlInput::new(p[0], p[1])).collect();
        let first = sequence[0];
        Ok(MpcSolution {
            first,
            cost,
            slack: worst,
            feasible: worst <= FEASIBILITY_TOL,
            iterations,
            sequence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn apf() -> Apf {
        Apf::new(ApfConfig::default())
    }

    #[test]
    fn apf_pure_attraction_points_at_target() {
        let f = apf().force([0.0, 0.0], [2.0, 0.0], &[]);
        assert!((f[0] - 2.0).abs() < 1e-12);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn apf_attraction_saturates_speed_at_default_gains() {
        // 1.5 m of error maps exactly to the 1.5 m/s speed cap.
        let x = RobotState::new(0.0, 0.0, 0.0, 1.5);
        let limits = Limits::default();
        let u = apf().control(&x, [1.5, 0.0], &[], &limits, 0.05);
        assert!((u.a).abs() < 1e-9, "speed already at cap: {u:?}");
        assert_eq!(u.omega, 0.0);
    }

    #[test]
    fn apf_repulsion_pushes_away_inside_influence_range() {
        let obs = Obstacle::new(1.0, 0.0, 0.3);
        // Robot between target and obstacle: net x-force weaker than pure
        // attraction, and strictly repulsive from the obstacle.
        let f_free = apf().force([0.2, 0.0], [3.0, 0.0], &[]);
        let f = apf().force([0.2, 0.0], [3.0, 0.0], &[obs]);
        assert!(f[0] < f_free[0]);
        // Off-axis robot gets a lateral push away from the obstacle line.
        let f_side = apf().force([0.7, 0.1], [3.0, 0.1], &[obs]);
        assert!(f_side[1] > 0.0);
    }

    #[test]
    fn apf_repulsion_vanishes_outside_influence_range() {
        let obs = Obstacle::new(10.0, 0.0, 0.3);
        let with = apf().force([0.0, 0.0], [2.0, 0.0], &[obs]);
        let without = apf().force([0.0, 0.0], [2.0, 0.0], &[]);
        assert_eq!(with, without);
    }

    #[test]
    fn apf_is_translation_equivariant() {
        let obs = Obstacle::new(0.9, 0.4, 0.3);
        let shift = [3.7, -1.2];
        let f0 = apf().force([0.2, -0.1], [2.0, 0.4], &[obs]);
        let obs_shifted = Obstacle::new(obs.cx + shift[0], obs.cy + shift[1], obs.radius);
        let f1 = apf().force(
            math::add2([0.2, -0.1], shift),
            math::add2([2.0, 0.4], shift),
            &[obs_shifted],
        );
        assert!((f0[0] - f1[0]).abs() < 1e-12);
        assert!((f0[1] - f1[1]).abs() < 1e-12);
    }

    #[test]
    fn apf_survives_contact_without_nan() {
        let obs = Obstacle::new(0.5, 0.0, 0.3);
        // A hair off the centre, and exactly at the centre.
        let f = apf().force([0.49, 0.0], [3.0, 0.0], &[obs]);
        assert!(f[0].is_finite() && f[1].is_finite());
        let f_centre = apf().force([0.5, 0.0], [3.0, 0.0], &[obs]);
        assert!(f_centre[0].is_finite() && f_centre[1].is_finite());
    }

    fn mpc_cfg() -> MpcCbfConfig {
        MpcCbfConfig::new(0.05)
    }

    #[test]
    fn mpc_cbf_zero_state_weight_gives_zero_input() {
        let mut cfg = mpc_cfg();
        cfg.q = [0.0; 4];
        let mut mpc = MpcCbf::new(cfg).unwrap();
        let x = RobotState::new(0.0, 0.0, 0.0, 1.0);
        let xhat = RobotState::new(5.0, 5.0, 0.0, 0.0);
        let sol = mpc.solve(&x, &xhat, &[0.0; 4], &[]).unwrap();
        assert!(sol.first.a.abs() < 1e-4, "a = {}", sol.first.a);
        assert!(sol.first.omega.abs() < 1e-4, "omega = {}", sol.first.omega);
    }

    #[test]
    fn mpc_cbf_tracks_a_reachable_reference() {
        let mut mpc = MpcCbf::new(mpc_cfg()).unwrap();
        // Reference directly ahead moving at the robot's own speed: the
        // planned inputs should stay small and the cost low.
        let x = RobotState::new(0.0, 0.0, 0.0, 0.5);
        let xhat = RobotState::new(0.0, 0.0, 0.0, 0.5);
        let xhat_dot = [0.5, 0.0, 0.0, 0.0];
        let sol = mpc.solve(&x, &xhat, &xhat_dot, &[]).unwrap();
        assert!(sol.cost < 1e-6, "cost = {}", sol.cost);
        assert!(sol.feasible);
    }

    #[test]
    fn mpc_cbf_brakes_for_an_obstacle_on_the_path() {
        let mut mpc = MpcCbf::new(mpc_cfg()).unwrap();
        // Obstacle dead ahead within the rollout's reach; the reference
        // asks the robot to drive straight through it.
        let x = RobotState::new(0.0, 0.0, 0.0, 1.5);
        let xhat = RobotState::new(0.5, 0.0, 0.0, 1.5);
        let xhat_dot = [1.5, 0.0, 0.0, 0.0];
        let obs = [Obstacle::new(1.2, 0.0, 0.3)];
        let sol_free = {
            let mut m = MpcCbf::new(mpc_cfg()).unwrap();
            m.solve(&x, &xhat, &xhat_dot, &[]).unwrap()
        };
        let sol = mpc.solve(&x, &xhat, &xhat_dot, &obs).unwrap();
        assert!(
            sol.first.a < sol_free.first.a - 0.1,
            "no evasive braking: {} vs {}",
            sol.first.a,
            sol_free.first.a
        );
    }

    #[test]
    fn mpc_cbf_gradient_matches_finite_difference() {
        let cfg = mpc_cfg();
        let obstacles = [Obstacle::new(0.8, 0.2, 0.3), Obstacle::new(-0.5, -0.6, 0.25)];
        let inst = MpcCbfInstance {
            x0: RobotState::new(0.0, 0.0, 0.3, 0.8),
            xhat0: RobotState::new(0.6, -0.2, 0.0, 0.6),
            xhat_dot: [0.5, 0.1, 0.0, 0.0],
            obstacles: &obstacles,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        for _ in 0..120 {
            let u: Vec<f64> =
                (0..2 * cfg.horizon).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Skip iterates near the speed clamp or a penalty kink, where
            // the objective is legitimately non-smooth.
            let mut x = inst.x0;
            let mut smooth = true;
            for k in 0..cfg.horizon {
                let uk = ControlInput::new(u[2 * k], u[2 * k + 1]);
                let pre = x.v + cfg.dt * uk.a;
                if (pre - cfg.limits.v_min).abs() < 1e-3 || (pre - cfg.limits.v_max).abs() < 1e-3
                {
                    smooth = false;
                    break;
                }
                x = step(&x, &uk, cfg.dt, &cfg.limits).unwrap();
            }
            if !smooth {
                continue;
            }
            let (_, worst) = mpc_cbf_parts(&cfg, &inst, &u);
            if worst.abs() < 1e-4 {
                continue;
            }
            let mut grad = vec![0.0; 2 * cfg.horizon];
            mpc_cbf_objective(&cfg, &inst, &u, Some(&mut grad));
            let h = 1e-6;
            for i in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (mpc_cbf_objective(&cfg, &inst, &up, None)
                    - mpc_cbf_objective(&cfg, &inst, &dn, None))
                    / (2.0 * h);
                let denom = 1.0 + fd.abs().max(grad[i].abs());
                assert!(
                    (grad[i] - fd).abs() / denom < 1e-4,
                    "component {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
            checked += 1;
            if checked >= 25 {
                break;
            }
        }
        assert!(checked >= 10, "too few smooth probes: {checked}");
    }

    #[test]
    fn mpc_cbf_is_deterministic() {
        let x = RobotState::new(0.0, 0.1, 0.2, 0.7);
        let xhat = RobotState::new(1.0, 0.0, 0.0, 0.5);
        let obs = [Obstacle::new(0.9, 0.1, 0.3)];
        let mut a = MpcCbf::new(mpc_cfg()).unwrap();
        let mut b = MpcCbf::new(mpc_cfg()).unwrap();
        let sa = a.solve(&x, &xhat, &[0.5, 0.0, 0.0, 0.0], &obs).unwrap();
        let sb = b.solve(&x, &xhat, &[0.5, 0.0, 0.0, 0.0], &obs).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn mpc_cbf_rejects_bad_configs() {
        let mut cfg = mpc_cfg();
        cfg.horizon = 0;
        assert!(MpcCbf::new(cfg).is_err());
        let mut cfg = mpc_cfg();
        cfg.q[0] = -1.0;
        assert!(MpcCbf::new(cfg).is_err());
        let mut mpc = MpcCbf::new(mpc_cfg()).unwrap();
        let bad = RobotState::new(f64::NAN, 0.0, 0.0, 0.0);
        assert_eq!(
            mpc.solve(&bad, &RobotState::new(0.0, 0.0, 0.0, 0.0), &[0.0; 4], &[]),
            Err(BaselineError::NonFinite)
        );
    }
}
