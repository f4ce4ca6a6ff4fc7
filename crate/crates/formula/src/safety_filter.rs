//! Minimally invasive safety filter in planar velocity space.
//!
//! The filter turns a nominal input into a *nominal planar velocity* by
//! one-step prediction, projects that velocity onto the intersection of the
//! barrier halfspaces and the speed disc,
//!
//! ```text
//! w* = argmin |w - w_nom|^2   s.t.  a_i . w >= b_i,  |w| <= v_max,
//! ```
//!
//! and maps the result back to acceleration and heading-rate commands. The
//! projection problem lives in two dimensions, so it is solved *exactly* by
//! enumerating every candidate active set (interior, one line, line pairs,
//! the disc, disc-line intersections) rather than iterating: each candidate
//! is closed-form, and the best feasible one is the global optimum.
//!
//! Constraints come from the analytic barrier or from a learned barrier
//! network; both reduce to `a = grad_h(p)`, `b = -alpha h(p)` per sensed
//! entity.

use crate::barrier::{self, BarrierConfig, Obstacle};
use crate::dynamics::{ControlInput, Limits, RobotState};
use crate::math;
use crate::nn_cbf::MlpParams;

/// Default sensing radius: entities with surface distance beyond this are
/// invisible to the filter.
pub const DEFAULT_SENSING_RADIUS: f64 = 3.0;

/// A planar halfspace constraint `normal . w >= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfspaceConstraint {
    pub normal: [f64; 2],
    pub offset: f64,
}

/// Which barrier supplies the constraint geometry.
#[derive(Debug, Clone, Copy)]
pub enum BarrierModel<'a> {
    /// Squared-distance barrier evaluated in closed form.
    Analytic,
    /// Learned barrier network evaluated through its exact gradients.
    Learned(&'a MlpParams),
}

/// Outcome of one filtering step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    /// The command to apply.
    pub u_checked: ControlInput,
    /// Nominal planar velocity derived from the unfiltered command.
    pub w_nominal: [f64; 2],
    /// Projected planar velocity (zero when infeasible).
    pub w_star: [f64; 2],
    /// False when the constraint set was empty and the filter braked.
    pub feasible: bool,
    /// Indices of constraints tight at the solution.
    pub active: Vec<usize>,
}

/// One barrier constraint per entity within sensing range.
pub fn build_constraints(
    x: &RobotState,
    entities: &[Obstacle],
    model: &BarrierModel<'_>,
    cfg: &BarrierConfig,
    sensing_radius: f64,
) -> Vec<HalfspaceConstraint> {
    let p = x.position();
    entities
        .iter()
        .filter(|obs| obs.surface_distance(p, cfg.r_rob) <= sensing_radius)
        .map(|obs| {
            let (normal, offset) = match model {
                BarrierModel::Analytic => barrier::velocity_constraint(p, obs, cfg),
                BarrierModel::Learned(params) => {
                    let h = crate::nn_cbf::forward(params, p, obs);
                    let g = crate::nn_cbf::input_gradient(params, p, obs);
                    (g, -cfg.alpha * h)
                }
            };
            HalfspaceConstraint { normal, offset }
        })
        .collect()
}

/// Constraint satisfaction slack used both for candidate screening and for
/// the reported active set.
const FEAS_TOL: f64 = 1e-9;

/// Exact minimum-distance projection onto the halfspace intersection within
/// the speed disc. Returns `None` when the feasible set is empty.
pub fn qp_solve(
    w_nom: [f64; 2],
    constraints: &[HalfspaceConstraint],
    v_max: f64,
) -> Option<[f64; 2]> {
    // Degenerate (zero-normal) constraints are either vacuous or make the
    // whole problem infeasible on their own.
    let mut lines: Vec<&HalfspaceConstraint> = Vec::with_capacity(constraints.len());
    for c in constraints {
        if math::norm2_sq(c.normal) < 1e-24 {
            if c.offset > FEAS_TOL {
                return None;
            }
            continue;
        }
        lines.push(c);
    }

    let feasible = |w: [f64; 2]| -> bool {
        math::norm2(w) <= v_max + FEAS_TOL
            && lines.iter().all(|c| math::dot2(c.normal, w) >= c.offset - FEAS_TOL)
    };

    let mut best: Option<([f64; 2], f64)> = None;
    let mut consider = |w: [f64; 2]| {
        if !w[0].is_finite() || !w[1].is_finite() || !feasible(w) {
            return;
        }
        let d = math::norm2_sq(math::sub2(w, w_nom));
        // Strict comparison keeps the first-found candidate on ties, making
        // the solve order-deterministic.
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((w, d));
        }
    };

    // Interior optimum.
    consider(w_nom);

    // One active line: orthogonal projection onto each constraint boundary.
    for c in &lines {
        let n2 = math::norm2_sq(c.normal);
        let t = (c.offset - math::dot2(c.normal, w_nom)) / n2;
        consider(math::add2(w_nom, math::scale2(t, c.normal)));
    }

    // Two active lines: pairwise boundary intersections.
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let (a, b) = (lines[i], lines[j]);
            let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
            let scale = math::norm2(a.normal) * math::norm2(b.normal);
            if det.abs() < 1e-12 * scale.max(1e-12) {
                continue;
            }
            consider([
                (a.offset * b.normal[1] - b.offset * a.normal[1]) / det,
                (a.normal[0] * b.offset - b.normal[0] * a.offset) / det,
            ]);
        }
    }

    // Active disc: radial projection of the nominal velocity.
    let nom_norm = math::norm2(w_nom);
    if nom_norm > 1e-12 {
        consider(math::scale2(v_max / nom_norm, w_nom));
    }

    // Active disc and one line: chord endpoints.
    for c in &lines {
        let n2 = math::norm2_sq(c.normal);
        let foot = math::scale2(c.offset / n2, c.normal);
        let reach_sq = v_max * v_max - math::norm2_sq(foot);
        if reach_sq < 0.0 {
            continue;
        }
        let half = reach_sq.sqrt();
        let tangent = math::scale2(1.0 / n2.sqrt(), [-c.normal[1], c.normal[0]]);
        consider(math::add2(foot, math::scale2(half, tangent)));
        consider(math::add2(foot, math::scale2(-half, tangent)));
    }

    best.map(|(w, _)| w)
}

/// Maps a desired planar velocity to actuator commands: speed error over one
/// step gives the acceleration, wrapped heading error over one step gives the
/// turn rate, both clamped. Velocities too small to define a direction brake
/// along the current heading instead.
pub fn velocity_to_input(w: [f64; 2], x: &RobotState, limits: &Limits, dt: f64) -> ControlInput {
    let speed = math::norm2(w);
    if speed < 1e-6 {
        return ControlInput::new(math::clamp(-x.v / dt, limits.a_min, limits.a_max), 0.0);
    }
    let v_target = limits.clamp_speed(speed);
    let a = math::clamp((v_target - x.v) / dt, limits.a_min, limits.a_max);
    let heading = w[1].atan2(w[0]);
    let omega = math::clamp(
        math::wrap_angle(heading - x.theta) / dt,
        limits.omega_min,
        limits.omega_max,
    );
    ControlInput::new(a, omega)
}

/// Filters a nominal command: predicts the planar velocity it would produce
/// one step ahead, projects that velocity onto the constraints, and maps the
/// projection back to the actuators. An empty feasible set degrades to a
/// straight-line brake with `feasible = false`.
pub fn project(
    u_nominal: &ControlInput,
    x: &RobotState,
    constraints: &[HalfspaceConstraint],
    limits: &Limits,
    dt: f64,
) -> FilterResult {
    let u = u_nominal.clamped(limits);
    let v_next = limits.clamp_speed(x.v + dt * u.a);
    let theta_next = x.theta + dt * u.omega;
    let w_nominal = [v_next * theta_next.cos(), v_next * theta_next.sin()];

    match qp_solve(w_nominal, constraints, limits.v_max) {
        None => FilterResult {
            u_checked: velocity_to_input([0.0, 0.0], x, limits, dt),
            w_nominal,
            w_star: [0.0, 0.0],
            feasible: false,
            active: Vec::new(),
        },
        Some(w_star) => {
            let mut u_checked = velocity_to_input(w_star, x, limits, dt);
            // A (near-)zero planar velocity cannot express rotation in
            // place, which moves no position mass within a tick and so
            // cannot violate the position-based barriers: let the nominal
            // turn rate through instead of freezing the heading. Without
            // this, a stopped robot whose tracker asks for a pure turn
            // (for example after overshooting a goal it cannot reverse to)
            // stays frozen forever.
            if math::norm2(w_star) < 1e-6 {
                u_checked.omega = u.omega;
            }
            let active = constraints
                .iter()
                .enumerate()
                .filter(|(_, c)| {
                    math::norm2_sq(c.normal) >= 1e-24
                        && (math::dot2(c.normal, w_star) - c.offset).abs()
                            <= 1e-7 * (1.0 + c.offset.abs())
                })
                .map(|(i, _)| i)
                .collect();
            FilterResult { u_checked, w_nominal, w_star, feasible: true, active }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-9;

    fn hc(nx: f64, ny: f64, b: f64) -> HalfspaceConstraint {
        HalfspaceConstraint { normal: [nx, ny], offset: b }
    }

    #[test]
    fn qp_passthrough_when_unconstrained() {
        let w = qp_solve([0.4, -0.3], &[], 1.5).unwrap();
        assert_eq!(w, [0.4, -0.3]);
        // Satisfied constraints leave the nominal untouched too.
        let w = qp_solve([0.4, 0.3], &[hc(1.0, 0.0, -1.0)], 1.5).unwrap();
        assert_eq!(w, [0.4, 0.3]);
    }

    #[test]
    fn qp_single_halfspace_projection() {
        // Require w_y >= 0.5 from the nominal (1, 0): the projection moves
        // only along the constraint normal.
        let w = qp_solve([1.0, 0.0], &[hc(0.0, 1.0, 0.5)], 1.5).unwrap();
        assert!((w[0] - 1.0).abs() < EPS);
        assert!((w[1] - 0.5).abs() < EPS);
    }

    #[test]
    fn qp_disc_cap() {
        let w = qp_solve([2.0, 0.0], &[], 1.5).unwrap();
        assert!((w[0] - 1.5).abs() < EPS);
        assert!(w[1].abs() < EPS);
    }

    #[test]
    fn qp_vertex_solution() {
        // w_x >= 0.5 and w_y >= 0.5 from the origin: the optimum is the
        // constraint-boundary vertex.
        let w = qp_solve([0.0, 0.0], &[hc(1.0, 0.0, 0.5), hc(0.0, 1.0, 0.5)], 1.5).unwrap();
        assert!((w[0] - 0.5).abs() < EPS);
        assert!((w[1] - 0.5).abs() < EPS);
    }

    #[test]
    fn qp_disc_line_intersection() {
        // w_y >= 1.2 within the 1.5 disc, nominal (2, 0): the line
        // projection leaves the disc and the radial point violates the
        // line, so the optimum is the chord endpoint (0.9, 1.2).
        let w = qp_solve([2.0, 0.0], &[hc(0.0, 1.0, 1.2)], 1.5).unwrap();
        assert!((w[0] - 0.9).abs() < EPS, "w = {w:?}");
        assert!((w[1] - 1.2).abs() < EPS);
    }

    #[test]
    fn qp_infeasible_cases() {
        // Line beyond the disc.
        assert!(qp_solve([0.0, 0.0], &[hc(0.0, 1.0, 2.0)], 1.5).is_none());
        // Contradictory halfspaces.
        assert!(qp_solve(
            [0.3, 0.3],
            &[hc(0.0, 1.0, 1.0), hc(0.0, -1.0, 0.0)],
            1.5
        )
        .is_none());
    }

    #[test]
    fn qp_degenerate_normals() {
        // Zero normal with non-positive offset is vacuous.
        let w = qp_solve([0.5, 0.0], &[hc(0.0, 0.0, -1.0)], 1.5).unwrap();
        assert_eq!(w, [0.5, 0.0]);
        // Zero normal demanding positive value is unsatisfiable.
        assert!(qp_solve([0.5, 0.0], &[hc(0.0, 0.0, 1.0)], 1.5).is_none());
    }

    #[test]
    fn qp_beats_every_feasible_grid_point() {
        // Random instances: the exact solve may never be worse than any
        // strictly feasible point of a brute-force grid over the disc.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let v_max = 1.5;
        for trial in 0..120 {
            let n_cons = rng.random_range(0..=6);
            let constraints: Vec<_> = (0..n_cons)
                .map(|_| {
                    hc(
                        rng.random_range(-4.0..4.0),
                        rng.random_range(-4.0..4.0),
                        rng.random_range(-3.0..2.0),
                    )
                })
                .collect();
            let w_nom = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let solved = qp_solve(w_nom, &constraints, v_max);

            let mut best_grid: Option<f64> = None;
            let steps = 140;
            for ix in 0..=steps {
                for iy in 0..=steps {
                    let w = [
                        -v_max + 2.0 * v_max * ix as f64 / steps as f64,
                        -v_max + 2.0 * v_max * iy as f64 / steps as f64,
                    ];
                    let ok = math::norm2(w) <= v_max
                        && constraints.iter().all(|c| math::dot2(c.normal, w) >= c.offset);
                    if ok {
                        let d = math::norm2_sq(math::sub2(w, w_nom));
                        best_grid = Some(best_grid.map_or(d, |b: f64| b.min(d)));
                    }
                }
            }

            match (solved, best_grid) {
                (Some(w), Some(grid)) => {
                    let d = math::norm2_sq(math::sub2(w, w_nom));
                    assert!(
                        d <= grid + 1e-7,
                        "trial {trial}: qp {d} worse than grid {grid}"
                    );
                    for c in &constraints {
                        assert!(
                            math::dot2(c.normal, w) >= c.offset - 1e-8,
                            "trial {trial}: constraint violated"
                        );
                    }
                }
                (Some(w), None) => {
                    // Feasible set too thin for the grid: verify directly.
                    for c in &constraints {
                        assert!(math::dot2(c.normal, w) >= c.offset - 1e-8);
                    }
                    assert!(math::norm2(w) <= v_max + 1e-8);
                }
                (None, Some(_)) => {
                    panic!("trial {trial}: solver reported infeasible but grid found a point")
                }
                (None, None) => {}
            }
        }
    }

    #[test]
    fn project_brakes_on_blocked_velocity() {
        // Constraint caps forward velocity at 0.5 while the robot cruises at
        // 1.0 towards +x: the filter must brake hard.
        let x = RobotState::new(0.0, 0.0, 0.0, 1.0);
        let limits = Limits::default();
        let cons = [hc(-1.0, 0.0, -0.5)]; // -w_x >= -0.5, i.e. w_x <= 0.5
        let res = project(&ControlInput::ZERO, &x, &cons, &limits, 0.05);
        assert!(res.feasible);
        assert!((res.w_star[0] - 0.5).abs() < EPS);
        assert!((res.u_checked.a - limits.a_min).abs() < EPS); // (0.5-1.0)/0.05 clamps
        assert_eq!(res.u_checked.omega, 0.0);
        assert_eq!(res.active, vec![0]);
    }

    #[test]
    fn project_preserves_rotation_in_place() {
        // A stopped robot asking for a pure turn must keep its turn rate:
        // heading motion is invisible to the position barriers.
        let x = RobotState::new(0.0, 0.0, 0.0, 0.0);
        let limits = Limits::default();
        let res = project(&ControlInput::new(0.0, 1.5), &x, &[], &limits, 0.05);
        assert!(res.feasible);
        assert_eq!(res.u_checked.omega, 1.5);
        assert_eq!(res.u_checked.a, 0.0);
    }

    #[test]
    fn project_holds_heading_when_stopped() {
        // Constraints pin the velocity to the origin: heading must hold and
        // the robot brakes to rest.
        let x = RobotState::new(0.0, 0.0, 0.3, 0.8);
        let limits = Limits::default();
        let cons = [hc(-1.0, 0.0, 0.0), hc(1.0, 0.0, 0.0), hc(0.0, 1.0, 0.0), hc(0.0, -1.0, 0.0)];
        let res = project(&ControlInput::new(2.0, 0.0), &x, &cons, &limits, 0.05);
        assert!(res.feasible);
        assert!(math::norm2(res.w_star) < 1e-9);
        assert_eq!(res.u_checked.omega, 0.0);
        assert!((res.u_checked.a - limits.a_min).abs() < EPS);
    }

    #[test]
    fn project_infeasible_degrades_to_brake() {
        let x = RobotState::new(0.0, 0.0, 0.0, 1.2);
        let limits = Limits::default();
        let cons = [hc(0.0, 1.0, 2.0)];
        let res = project(&ControlInput::ZERO, &x, &cons, &limits, 0.05);
        assert!(!res.feasible);
        assert_eq!(res.w_star, [0.0, 0.0]);
        assert_eq!(res.u_checked.omega, 0.0);
        assert!((res.u_checked.a - limits.a_min).abs() < EPS);
        assert!(res.active.is_empty());
    }

    #[test]
    fn project_passes_safe_commands_through() {
        // No nearby constraints: the filtered command reproduces the
        // nominal planar velocity (up to the actuator clamps).
        let x = RobotState::new(0.0, 0.0, 0.2, 0.9);
        let limits = Limits::default();
        let u_nom = ControlInput::new(0.6, -0.4);
        let res = project(&u_nom, &x, &[], &limits, 0.05);
        assert!(res.feasible);
        assert_eq!(res.w_star, res.w_nominal);
        // Back-mapping recovers the same one-step velocity target.
        assert!((res.u_checked.a - u_nom.a).abs() < 1e-9);
        assert!((res.u_checked.omega - u_nom.omega).abs() < 1e-9);
    }

    #[test]
    fn project_is_deterministic() {
        let x = RobotState::new(0.1, -0.2, 0.5, 0.7);
        let limits = Limits::default();
        let cons = [hc(1.0, 0.4, 0.2), hc(-0.3, 1.0, -0.1)];
        let a = project(&ControlInput::new(0.5, 0.1), &x, &cons, &limits, 0.05);
        let b = project(&ControlInput::new(0.5, 0.1), &x, &cons, &limits, 0.05);
        assert_eq!(a, b);
    }

    #[test]
    fn build_constraints_respects_sensing_radius() {
        let cfg = BarrierConfig::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 1.0);
        let near = Obstacle::new(2.0, 0.0, 0.4);
        let far = Obstacle::new(9.0, 0.0, 0.4);
        let cons = build_constraints(
            &x,
            &[near, far],
            &BarrierModel::Analytic,
            &cfg,
            DEFAULT_SENSING_RADIUS,
        );
        assert_eq!(cons.len(), 1);
        let (a, b) = barrier::velocity_constraint([0.0, 0.0], &near, &cfg);
        assert_eq!(cons[0].normal, a);
        assert_eq!(cons[0].offset, b);
    }
}
