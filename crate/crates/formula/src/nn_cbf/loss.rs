//! Training losses for the barrier network.
//!
//! The batch loss combines four terms:
//!
//! * safe hinge `max(0, margin - h)` — safe samples must sit above zero;
//! * unsafe hinge `max(0, margin + h)` — unsafe samples below zero;
//! * gradient hinge `max(0, margin - (grad_p h . u_ref + alpha h))` — at
//!   sampled safe states with a sampled reference velocity, the barrier's
//!   own constraint should be satisfiable;
//! * an optional squared-regression term against a teacher value, averaged
//!   over the samples that carry a target (warm-start stage only).
//!
//! A separate filter-deviation term measures how far the one-constraint
//! safety projection would move a reference velocity under the *learned*
//! constraint: with `phi = grad_p h . u_ref + alpha h` and `g = grad_p h`,
//! the squared correction is `phi^2 / |g|^2` when `phi < 0` and zero
//! otherwise. Its parameter gradient needs derivatives *of the gradient
//! field*, which the dual adjoint pass in [`super::mlp`] provides exactly.

use crate::barrier::Obstacle;

use super::mlp::{
    accumulate_dual_gradient, accumulate_param_gradient, forward_scratch, input_gradient_scratch,
    scale_direction, scale_input, tangent_scratch, MlpParams, Scratch, OUTPUT_SCALE, PARAM_COUNT,
};

/// Role of a sample in the classification/alignment hinges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Safe,
    Unsafe,
    /// Safe-region sample that additionally constrains the gradient field
    /// through its reference velocity.
    Dynamics,
}

/// One training sample: a robot/obstacle pair plus optional extras.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfSample {
    pub p: [f64; 2],
    pub obs: Obstacle,
    pub kind: SampleKind,
    /// Reference planar velocity; required for `Dynamics` samples.
    pub u_ref: Option<[f64; 2]>,
    /// Teacher value for the regression term, when present.
    pub target: Option<f64>,
}

impl CbfSample {
    pub fn safe(p: [f64; 2], obs: Obstacle) -> Self {
        Self { p, obs, kind: SampleKind::Safe, u_ref: None, target: None }
    }

    pub fn unsafe_at(p: [f64; 2], obs: Obstacle) -> Self {
        Self { p, obs, kind: SampleKind::Unsafe, u_ref: None, target: None }
    }

    pub fn dynamics(p: [f64; 2], obs: Obstacle, u_ref: [f64; 2]) -> Self {
        Self { p, obs, kind: SampleKind::Dynamics, u_ref: Some(u_ref), target: None }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }
}

/// Hinge margin, class-K gain, and regression weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfLossConfig {
    /// Hinge margin applied to every hinge term.
    pub margin: f64,
    /// Class-K gain in the gradient hinge and the filter-deviation term.
    pub alpha: f64,
    /// Weight of the mean-squared regression term.
    pub regression_weight: f64,
}

impl Default for CbfLossConfig {
    fn default() -> Self {
        Self { margin: 1e-3, alpha: 1.0, regression_weight: 1.0 }
    }
}

/// Shared implementation: loss value, optionally accumulating the gradient.
fn loss_impl(
    params: &MlpParams,
    batch: &[CbfSample],
    cfg: &CbfLossConfig,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let n_targets = batch.iter().filter(|s| s.target.is_some()).count();
    let mut scratch = Scratch::default();
    let mut total = 0.0;

    for sample in batch {
        let z = scale_input(sample.p, &sample.obs);
        let h = OUTPUT_SCALE * forward_scratch(params, &z, &mut scratch);
        let mut seed_h = 0.0;
        let mut seed_hdot = 0.0;
        let mut has_tangent = false;

        match sample.kind {
            SampleKind::Safe => {
                if h < cfg.margin {
                    total += cfg.margin - h;
                    seed_h -= 1.0;
                }
            }
            SampleKind::Unsafe => {
                if h > -cfg.margin {
                    total += cfg.margin + h;
                    seed_h += 1.0;
                }
            }
            SampleKind::Dynamics => {
                let u = sample.u_ref.expect("dynamics sample requires u_ref");
                let zdot = scale_direction(u);
                let hdot = OUTPUT_SCALE * tangent_scratch(params, &zdot, &mut scratch);
                has_tangent = true;
                let phi = hdot + cfg.alpha * h;
                if phi < cfg.margin {
                    total += cfg.margin - phi;
                    seed_h -= cfg.alpha;
                    seed_hdot -= 1.0;
                }
            }
        }

        if let Some(target) = sample.target {
            let r = h - target;
            total += cfg.regression_weight * r * r / n_targets as f64;
            seed_h += cfg.regression_weight * 2.0 * r / n_targets as f64;
        }

        if let Some(g) = grad.as_deref_mut() {
            if seed_hdot != 0.0 {
                debug_assert!(has_tangent);
                accumulate_dual_gradient(params, &mut scratch, seed_h, seed_hdot, g);
            } else if seed_h != 0.0 {
                accumulate_param_gradient(params, &mut scratch, seed_h, g);
            }
        }
    }
    total
}

/// Batch loss without gradients.
pub fn batch_loss(params: &MlpParams, batch: &[CbfSample], cfg: &CbfLossConfig) -> f64 {
    loss_impl(params, batch, cfg, None)
}

/// Batch loss and its exact parameter gradient.
pub fn param_gradient(
    params: &MlpParams,
    batch: &[CbfSample],
    cfg: &CbfLossConfig,
) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; PARAM_COUNT];
    let loss = loss_impl(params, batch, cfg, Some(&mut grad));
    (grad, loss)
}

/// Filter-deviation value for one sample: squared distance between a
/// reference velocity and its projection onto the learned constraint.
pub fn control_reg_loss(
    params: &MlpParams,
    p: [f64; 2],
    obs: &Obstacle,
    u_ref: [f64; 2],
    alpha: f64,
) -> f64 {
    let mut s = Scratch::default();
    let z = scale_input(p, obs);
    let h = OUTPUT_SCALE * forward_scratch(params, &z, &mut s);
    let g = input_gradient_scratch(params, &mut s);
    let gn2 = g[0] * g[0] + g[1] * g[1];
    if gn2 < 1e-9 {
        return 0.0;
    }
    let phi = g[0] * u_ref[0] + g[1] * u_ref[1] + alpha * h;
    if phi >= 0.0 {
        0.0
    } else {
        phi * phi / gn2
    }
}

/// Accumulates `weight * filter-deviation` and its gradient for every
/// dynamics sample in the batch; returns the summed weighted loss.
pub(super) fn add_control_reg_terms(
    params: &MlpParams,
    batch: &[CbfSample],
    alpha: f64,
    weight: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut scratch = Scratch::default();
    let mut total = 0.0;
    for sample in batch {
        let u_ref = match (sample.kind, sample.u_ref) {
            (SampleKind::Dynamics, Some(u)) => u,
            _ => continue,
        };
        let z = scale_input(sample.p, &sample.obs);
        let h = OUTPUT_SCALE * forward_scratch(params, &z, &mut scratch);
        let g = input_gradient_scratch(params, &mut scratch);
        let gn2 = g[0] * g[0] + g[1] * g[1];
        if gn2 < 1e-9 {
            continue;
        }
        let zdot = scale_direction(u_ref);
        let hdot = OUTPUT_SCALE * tangent_scratch(params, &zdot, &mut scratch);
        let phi = hdot + alpha * h;
        if phi >= 0.0 {
            continue;
        }
        total += weight * phi * phi / gn2;

        if let Some(gr) = grad.as_deref_mut() {
            // d/dtheta [ w phi^2 / |g|^2 ]
            //   = (2 w phi / |g|^2) d(phi)/dtheta
            //   - (2 w phi^2 / |g|^4) d(|g|^2)/dtheta / 2 * 2
            // First part: phi = hdot(u_ref) + alpha h, via the dual pass on
            // the already-computed tangent.
            let c1 = 2.0 * weight * phi / gn2;
            accumulate_dual_gradient(params, &mut scratch, c1 * alpha, c1, gr);
            // Second part: d|g|^2/dtheta = 2 d/dtheta (g . c) with c = g
            // frozen; re-run the tangent in direction g.
            let zg = scale_direction(g);
            tangent_scratch(params, &zg, &mut scratch);
            let c2 = -2.0 * weight * phi * phi / (gn2 * gn2);
            accumulate_dual_gradient(params, &mut scratch, 0.0, c2, gr);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_params(seed: u64) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpParams::random(&mut rng)
    }

    fn random_sample(rng: &mut ChaCha8Rng) -> ([f64; 2], Obstacle) {
        let p = [rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0)];
        let obs = Obstacle::new(
            rng.random_range(-4.0..4.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.25..0.45),
        );
        (p, obs)
    }

    /// Builds a mixed batch whose hinge arguments all sit safely away from
    /// their kinks, so finite differences of the loss are trustworthy.
    fn smooth_batch(params: &MlpParams, cfg: &CbfLossConfig, n: usize, seed: u64) -> Vec<CbfSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch = Vec::new();
        while batch.len() < n {
            let (p, obs) = random_sample(&mut rng);
            let h = super::super::mlp::forward(params, p, &obs);
            let candidate = match batch.len() % 3 {
                0 => CbfSample::safe(p, obs),
                1 => CbfSample::unsafe_at(p, obs),
                _ => {
                    let u = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
                    CbfSample::dynamics(p, obs, u)
                }
            };
            // Keep only samples whose hinge argument is far from the kink.
            let margin_dist = match candidate.kind {
                SampleKind::Safe => (h - cfg.margin).abs(),
                SampleKind::Unsafe => (h + cfg.margin).abs(),
                SampleKind::Dynamics => {
                    let u = candidate.u_ref.unwrap();
                    let phi = super::super::mlp::directional_derivative(params, p, &obs, u)
                        + cfg.alpha * h;
                    (phi - cfg.margin).abs()
                }
            };
            if margin_dist > 1e-2 {
                batch.push(candidate.with_target(rng.random_range(-5.0..5.0)));
            }
        }
        batch
    }

    #[test]
    fn inactive_hinges_contribute_nothing() {
        let params = test_params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = CbfLossConfig::default();
        // Pick a sample and assign it the kind whose hinge is inactive.
        for _ in 0..20 {
            let (p, obs) = random_sample(&mut rng);
            let h = super::super::mlp::forward(&params, p, &obs);
            if h.abs() < 2.0 * cfg.margin {
                continue;
            }
            let sample =
                if h > 0.0 { CbfSample::safe(p, obs) } else { CbfSample::unsafe_at(p, obs) };
            let (grad, loss) = param_gradient(&params, &[sample], &cfg);
            assert_eq!(loss, 0.0);
            assert!(grad.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn loss_assembles_from_manual_pieces() {
        let params = test_params(4);
        let cfg = CbfLossConfig { margin: 0.05, alpha: 1.0, regression_weight: 0.7 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p1, o1) = random_sample(&mut rng);
        let (p2, o2) = random_sample(&mut rng);
        let (p3, o3) = random_sample(&mut rng);
        let u = [0.4, -0.2];
        let batch = [
            CbfSample::safe(p1, o1).with_target(1.0),
            CbfSample::unsafe_at(p2, o2),
            CbfSample::dynamics(p3, o3, u).with_target(-2.0),
        ];
        let h1 = super::super::mlp::forward(&params, p1, &o1);
        let h2 = super::super::mlp::forward(&params, p2, &o2);
        let h3 = super::super::mlp::forward(&params, p3, &o3);
        let hdot3 = super::super::mlp::directional_derivative(&params, p3, &o3, u);
        let expected = (cfg.margin - h1).max(0.0)
            + (cfg.margin + h2).max(0.0)
            + (cfg.margin - (hdot3 + cfg.alpha * h3)).max(0.0)
            + cfg.regression_weight * ((h1 - 1.0).powi(2) + (h3 + 2.0).powi(2)) / 2.0;
        let got = batch_loss(&params, &batch, &cfg);
        assert!((got - expected).abs() < 1e-9 * (1.0 + expected.abs()), "{got} vs {expected}");
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        let params = test_params(6);
        let cfg = CbfLossConfig { margin: 0.01, alpha: 1.0, regression_weight: 0.5 };
        let batch = smooth_batch(&params, &cfg, 12, 9);
        let (grad, _) = param_gradient(&params, &batch, &cfg);

        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let idx = rng.random_range(0..PARAM_COUNT);
            let mut up = params.clone();
            let mut dn = params.clone();
            up.as_flat_mut()[idx] += h;
            dn.as_flat_mut()[idx] -= h;
            let fd =
                (batch_loss(&up, &batch, &cfg) - batch_loss(&dn, &batch, &cfg)) / (2.0 * h);
            let denom = 1.0 + grad[idx].abs().max(fd.abs());
            assert!(
                (grad[idx] - fd).abs() / denom < 1e-4,
                "idx {idx}: {} vs {}",
                grad[idx],
                fd
            );
        }
    }

    #[test]
    fn control_reg_inactive_when_constraint_satisfied() {
        // Point the reference velocity along the learned gradient: phi > 0
        // whenever h >= 0, so the deviation term vanishes.
        let params = test_params(7);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut checked = 0;
        for _ in 0..100 {
            let (p, obs) = random_sample(&mut rng);
            let h = super::super::mlp::forward(&params, p, &obs);
            let g = super::super::mlp::input_gradient(&params, p, &obs);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if h < 0.0 || gn < 1e-3 {
                continue;
            }
            let u = [g[0] / gn, g[1] / gn];
            assert_eq!(control_reg_loss(&params, p, &obs, u, 1.0), 0.0);
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn control_reg_value_matches_projection_distance() {
        let params = test_params(8);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut checked = 0;
        for _ in 0..200 {
            let (p, obs) = random_sample(&mut rng);
            let u = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let h = super::super::mlp::forward(&params, p, &obs);
            let g = super::super::mlp::input_gradient(&params, p, &obs);
            let gn2 = g[0] * g[0] + g[1] * g[1];
            if gn2 < 1e-3 {
                continue;
            }
            let phi = g[0] * u[0] + g[1] * u[1] + h;
            if phi >= -1e-3 {
                continue;
            }
            // Projection of u onto {g . w >= -h}: moves along g by -phi/|g|^2.
            let corrected = [u[0] - phi * g[0] / gn2, u[1] - phi * g[1] / gn2];
            let dist2 = (corrected[0] - u[0]).powi(2) + (corrected[1] - u[1]).powi(2);
            let got = control_reg_loss(&params, p, &obs, u, 1.0);
            assert!((got - dist2).abs() < 1e-9 * (1.0 + dist2), "{got} vs {dist2}");
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn control_reg_gradient_matches_finite_differences() {
        let params = test_params(9);
        let alpha = 1.0;
        let weight = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        // Collect dynamics samples with the deviation active and away from
        // its kink.
        let mut batch = Vec::new();
        while batch.len() < 6 {
            let (p, obs) = random_sample(&mut rng);
            let u = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let h = super::super::mlp::forward(&params, p, &obs);
            let g = super::super::mlp::input_gradient(&params, p, &obs);
            let phi = g[0] * u[0] + g[1] * u[1] + alpha * h;
            if phi < -0.05 {
                batch.push(CbfSample::dynamics(p, obs, u));
            }
        }
        let mut grad = vec![0.0; PARAM_COUNT];
        let loss = add_control_reg_terms(&params, &batch, alpha, weight, Some(&mut grad));
        assert!(loss > 0.0);

        let eval = |pp: &MlpParams| {
            batch
                .iter()
                .map(|s| weight * control_reg_loss(pp, s.p, &s.obs, s.u_ref.unwrap(), alpha))
                .sum::<f64>()
        };
        assert!((eval(&params) - loss).abs() < 1e-9 * (1.0 + loss));

        let h = 1e-5;
        for _ in 0..80 {
            let idx = rng.random_range(0..PARAM_COUNT);
            let mut up = params.clone();
            let mut dn = params.clone();
            up.as_flat_mut()[idx] += h;
            dn.as_flat_mut()[idx] -= h;
            let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
            let denom = 1.0 + grad[idx].abs().max(fd.abs());
            assert!(
                (grad[idx] - fd).abs() / denom < 1e-4,
                "idx {idx}: {} vs {}",
                grad[idx],
                fd
            );
        }
    }
}
