//! Analytic distance barrier for circular obstacles.
//!
//! For a robot of radius `r_rob` at position `p` and a circular entity of
//! radius `r_obs` centred at `c`, the barrier value is
//!
//! ```text
//! h(p) = |p - c|^2 - (r_rob + r_obs + s)^2
//! ```
//!
//! where `s` is a safety margin added on top of the physical radii. The safe
//! set is `h >= 0`. Working with the squared distance keeps the gradient
//! `2 (p - c)` linear and well defined everywhere except the centre itself.
//!
//! At the velocity level, keeping `hdot >= -alpha h` with `hdot = grad_h . w`
//! for a planar velocity `w` yields one linear constraint per entity; these
//! feed the safety filter. Other robots enter the same machinery as circular
//! entities of radius `r_rob`.

use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::math;

/// A static circular obstacle (or another robot treated as one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        Self { cx, cy, radius }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.cx, self.cy]
    }

    /// Signed surface distance from a disc robot at `p`: positive means
    /// clearance between the two boundaries.
    pub fn surface_distance(&self, p: [f64; 2], r_rob: f64) -> f64 {
        math::norm2(math::sub2(p, self.center())) - self.radius - r_rob
    }
}

/// Radii, margin, and constraint-shaping gains shared by barrier evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierConfig {
    /// Robot body radius in metres.
    pub r_rob: f64,
    /// Extra safety margin added to the combined radii.
    pub margin: f64,
    /// Class-K gain: the filter allows `hdot >= -alpha * h`.
    pub alpha: f64,
    /// Reserved gain for acceleration-level (second-order) constraint
    /// shaping; the velocity-level pipeline in this crate does not use it.
    pub lambda1: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self { r_rob: 0.2, margin: 0.3, alpha: 1.0, lambda1: 1.0 }
    }
}

impl BarrierConfig {
    /// Combined keep-out radius `r_rob + r_obs + margin` for an entity.
    pub fn inflated_radius(&self, obs: &Obstacle) -> f64 {
        self.r_rob + obs.radius + self.margin
    }
}

/// Barrier value `h = |p - c|^2 - (r_rob + r_obs + margin)^2`.
pub fn value(p: [f64; 2], obs: &Obstacle, cfg: &BarrierConfig) -> f64 {
    let r = cfg.inflated_radius(obs);
    math::norm2_sq(math::sub2(p, obs.center())) - r * r
}

/// Spatial gradient `dh/dp = 2 (p - c)`.
pub fn gradient(p: [f64; 2], obs: &Obstacle) -> [f64; 2] {
    math::scale2(2.0, math::sub2(p, obs.center()))
}

/// The linear velocity constraint induced by one entity:
/// `a . w >= b` with `a = grad_h(p)` and `b = -alpha * h(p)`.
pub fn velocity_constraint(
    p: [f64; 2],
    obs: &Obstacle,
    cfg: &BarrierConfig,
) -> ([f64; 2], f64) {
    (gradient(p, obs), -cfg.alpha * value(p, obs, cfg))
}

/// Another robot viewed as a circular entity for pairwise avoidance.
pub fn robot_as_obstacle(other: &RobotState, cfg: &BarrierConfig) -> Obstacle {
    Obstacle::new(other.px, other.py, cfg.r_rob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-12;

    #[test]
    fn value_zero_on_inflated_boundary() {
        let cfg = BarrierConfig::default();
        let obs = Obstacle::new(0.0, 0.0, 0.5);
        let r = cfg.inflated_radius(&obs); // 0.2 + 0.5 + 0.3 = 1.0
        assert!((r - 1.0).abs() < EPS);
        assert!(value([1.0, 0.0], &obs, &cfg).abs() < EPS);
        assert!(value([0.0, -1.0], &obs, &cfg).abs() < EPS);
    }

    #[test]
    fn value_sign_tracks_clearance() {
        let cfg = BarrierConfig::default();
        let obs = Obstacle::new(1.0, -2.0, 0.4);
        // Far away: strongly positive. d=5 from centre, keep-out 0.9.
        let far = value([1.0, 3.0], &obs, &cfg);
        assert!((far - (25.0 - 0.81)).abs() < 1e-9);
        // At the centre: -(keep-out)^2.
        assert!((value([1.0, -2.0], &obs, &cfg) + 0.81).abs() < 1e-9);
        assert!(value([1.3, -2.0], &obs, &cfg) < 0.0);
    }

    #[test]
    fn gradient_points_away_from_center() {
        let obs = Obstacle::new(1.0, 1.0, 0.3);
        let g = gradient([3.0, 1.0], &obs);
        assert_eq!(g, [4.0, 0.0]);
        // Gradient at the centre vanishes (the single degenerate point).
        assert_eq!(gradient([1.0, 1.0], &obs), [0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let cfg = BarrierConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..200 {
            let obs = Obstacle::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.2..0.6),
            );
            let p = [rng.random_range(-4.0..4.0), rng.random_range(-3.0..3.0)];
            let g = gradient(p, &obs);
            let fdx =
                (value([p[0] + h, p[1]], &obs, &cfg) - value([p[0] - h, p[1]], &obs, &cfg))
                    / (2.0 * h);
            let fdy =
                (value([p[0], p[1] + h], &obs, &cfg) - value([p[0], p[1] - h], &obs, &cfg))
                    / (2.0 * h);
            assert!((g[0] - fdx).abs() < 1e-6);
            assert!((g[1] - fdy).abs() < 1e-6);
        }
    }

    #[test]
    fn velocity_constraint_allows_tangent_motion_on_boundary() {
        let cfg = BarrierConfig::default();
        let obs = Obstacle::new(0.0, 0.0, 0.5);
        let (a, b) = velocity_constraint([1.0, 0.0], &obs, &cfg);
        // On the boundary h=0 so b=0: any velocity with a . w >= 0 is
        // admissible — tangential motion sits exactly on the constraint.
        assert!(b.abs() < 1e-9);
        assert!((math::dot2(a, [0.0, 1.0])).abs() < 1e-9);
        assert!(math::dot2(a, [1.0, 0.0]) > 0.0); // outward ok
        assert!(math::dot2(a, [-1.0, 0.0]) < 0.0); // inward forbidden
    }

    #[test]
    fn velocity_constraint_relaxes_with_distance() {
        let cfg = BarrierConfig::default();
        let obs = Obstacle::new(0.0, 0.0, 0.5);
        let (a_near, b_near) = velocity_constraint([1.2, 0.0], &obs, &cfg);
        let (a_far, b_far) = velocity_constraint([3.0, 0.0], &obs, &cfg);
        // Inward speed allowed before violating a . w >= b: |b| / |a|.
        let allowance_near = -b_near / math::norm2(a_near);
        let allowance_far = -b_far / math::norm2(a_far);
        assert!(allowance_far > allowance_near);
        assert!(allowance_near > 0.0);
    }

    #[test]
    fn forward_invariance_single_integrator() {
        // A point robot driven straight at the obstacle, with its velocity
        // projected onto the single barrier constraint each step, must keep
        // h above a small negative discretisation floor for the whole run.
        let cfg = BarrierConfig::default();
        let obs = Obstacle::new(0.0, 0.0, 0.5);
        let dt = 0.01;
        let mut p = [-3.0, 0.02];
        let mut h_min = f64::INFINITY;
        for _ in 0..1000 {
            let w_des = math::scale2(1.2, {
                let d = math::sub2(obs.center(), p);
                math::scale2(1.0 / math::norm2(d).max(1e-9), d)
            });
            let (a, b) = velocity_constraint(p, &obs, &cfg);
            // One-constraint exact projection.
            let slack = b - math::dot2(a, w_des);
            let w = if slack > 0.0 {
                math::add2(w_des, math::scale2(slack / math::norm2_sq(a), a))
            } else {
                w_des
            };
            p = math::add2(p, math::scale2(dt, w));
            h_min = h_min.min(value(p, &obs, &cfg));
        }
        assert!(h_min > -1e-3, "h_min = {h_min}");
        // The robot actually got near the boundary, so the test exercised
        // the constraint rather than sailing past.
        assert!(h_min < 0.5, "h_min = {h_min}");
    }

    #[test]
    fn robot_as_obstacle_uses_body_radius() {
        let cfg = BarrierConfig::default();
        let other = RobotState::new(1.0, 2.0, 0.3, 0.5);
        let obs = robot_as_obstacle(&other, &cfg);
        assert_eq!(obs.center(), [1.0, 2.0]);
        assert_eq!(obs.radius, cfg.r_rob);
        // Combined keep-out distance for two robots: 2*r_rob + margin = 0.7.
        assert!((cfg.inflated_radius(&obs) - 0.7).abs() < EPS);
    }

    #[test]
    fn surface_distance_subtracts_both_radii() {
        let obs = Obstacle::new(0.0, 0.0, 0.5);
        assert!((obs.surface_distance([2.0, 0.0], 0.2) - 1.3).abs() < EPS);
        assert!(obs.surface_distance([0.6, 0.0], 0.2) < 0.0);
    }
}
