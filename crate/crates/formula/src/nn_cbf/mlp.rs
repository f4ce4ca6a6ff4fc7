//! The barrier network and its exact derivatives.
//!
//! Architecture: `5 -> 64 -> 64 -> 1` with SiLU hidden activations and a
//! linear output. The five inputs are the robot position and the obstacle
//! parameters `[px, py, cx, cy, r]`. Inputs are divided by fixed
//! per-coordinate scales and the output is multiplied by a fixed scale;
//! both are architectural constants (not trained), chosen so the network
//! operates near unit magnitude while the barrier value spans the squared
//! distances of the workspace.
//!
//! Three derivative paths are implemented by hand:
//!
//! 1. reverse mode for `dh/dtheta` (parameter gradients of the value);
//! 2. reverse mode for `dh/dinput` (the spatial gradient used as the
//!    constraint normal);
//! 3. forward-over-reverse for `d/dtheta [ grad_p h . w ]`: a forward
//!    tangent pass carries the directional derivative, and a second adjoint
//!    stream backpropagates through it. This is what lets the training loss
//!    penalise the *gradient field*, not just the value.

use rand::Rng;

use crate::barrier::Obstacle;

/// Hidden width of both layers.
pub const HIDDEN_DIM: usize = 64;
/// Network input dimension: `[px, py, cx, cy, r]`.
pub const NN_INPUT_DIM: usize = 5;

const H: usize = HIDDEN_DIM;
const IN: usize = NN_INPUT_DIM;

/// Flat layout offsets (row-major matrices).
const W1_OFF: usize = 0;
const B1_OFF: usize = W1_OFF + H * IN;
const W2_OFF: usize = B1_OFF + H;
const B2_OFF: usize = W2_OFF + H * H;
const W3_OFF: usize = B2_OFF + H;
const B3_OFF: usize = W3_OFF + H;
/// Total number of trainable parameters.
pub const PARAM_COUNT: usize = B3_OFF + 1;

/// Fixed per-input scales: positions and centres span roughly ±5 m, radii
/// roughly 0.5 m.
pub(super) const INPUT_SCALE: [f64; IN] = [5.0, 5.0, 5.0, 5.0, 0.5];
/// Fixed output scale: squared workspace distances reach ~100 m^2.
pub(super) const OUTPUT_SCALE: f64 = 25.0;

/// Network parameters in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros() -> Self {
        Self { data: vec![0.0; PARAM_COUNT] }
    }

    /// Uniform Glorot-style initialisation; biases start at zero.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut p = Self::zeros();
        let lim1 = (6.0 / (IN + H) as f64).sqrt();
        let lim2 = (6.0 / (H + H) as f64).sqrt();
        let lim3 = (6.0 / (H + 1) as f64).sqrt();
        for i in W1_OFF..B1_OFF {
            p.data[i] = rng.random_range(-lim1..lim1);
        }
        for i in W2_OFF..B2_OFF {
            p.data[i] = rng.random_range(-lim2..lim2);
        }
        for i in W3_OFF..B3_OFF {
            p.data[i] = rng.random_range(-lim3..lim3);
        }
        p
    }

    pub fn from_flat(data: Vec<f64>) -> Option<Self> {
        (data.len() == PARAM_COUNT).then_some(Self { data })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn w1(&self) -> &[f64] {
        &self.data[W1_OFF..B1_OFF]
    }
    fn b1(&self) -> &[f64] {
        &self.data[B1_OFF..W2_OFF]
    }
    fn w2(&self) -> &[f64] {
        &self.data[W2_OFF..B2_OFF]
    }
    fn b2(&self) -> &[f64] {
        &self.data[B2_OFF..W3_OFF]
    }
    fn w3(&self) -> &[f64] {
        &self.data[W3_OFF..B3_OFF]
    }
    fn b3(&self) -> f64 {
        self.data[B3_OFF]
    }
}

/// SiLU `s(t) = t * sigmoid(t)` with first and second derivatives.
fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub(super) fn silu(t: f64) -> f64 {
    t * sigmoid(t)
}

pub(super) fn silu_prime(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 + t * (1.0 - s))
}

pub(super) fn silu_second(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 - s) * (2.0 + t * (1.0 - 2.0 * s))
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for j in 0..cols {
            acc += row[j] * x[j];
        }
        y[i] = acc;
    }
}

fn matvec_transpose(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    y[..cols].fill(0.0);
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let xi = x[i];
        for j in 0..cols {
            y[j] += row[j] * xi;
        }
    }
}

fn outer_accumulate(gw: &mut [f64], rows: usize, cols: usize, a: &[f64], b: &[f64]) {
    for i in 0..rows {
        let row = &mut gw[i * cols..(i + 1) * cols];
        let ai = a[i];
        if ai == 0.0 {
            continue;
        }
        for j in 0..cols {
            row[j] += ai * b[j];
        }
    }
}

/// Per-evaluation activation storage, reused across a batch to avoid
/// allocation in the training hot loop.
pub(super) struct Scratch {
    pub z: [f64; IN],
    pub a1: [f64; H],
    pub h1: [f64; H],
    pub d1: [f64; H],
    pub a2: [f64; H],
    pub h2: [f64; H],
    pub d2: [f64; H],
    // Forward tangent stream.
    pub zdot: [f64; IN],
    pub ta1: [f64; H],
    pub th1: [f64; H],
    pub ta2: [f64; H],
    pub th2: [f64; H],
    // Work vectors for the adjoint passes.
    buf_a: [f64; H],
    buf_b: [f64; H],
    buf_c: [f64; H],
    buf_d: [f64; H],
}

impl Default for Scratch {
    fn default() -> Self {
        Self {
            z: [0.0; IN],
            a1: [0.0; H],
            h1: [0.0; H],
            d1: [0.0; H],
            a2: [0.0; H],
            h2: [0.0; H],
            d2: [0.0; H],
            zdot: [0.0; IN],
            ta1: [0.0; H],
            th1: [0.0; H],
            ta2: [0.0; H],
            th2: [0.0; H],
            buf_a: [0.0; H],
            buf_b: [0.0; H],
            buf_c: [0.0; H],
            buf_d: [0.0; H],
        }
    }
}

/// Raw (scaled-space) network input for a robot/obstacle pair.
pub(super) fn scale_input(p: [f64; 2], obs: &Obstacle) -> [f64; IN] {
    let raw = [p[0], p[1], obs.cx, obs.cy, obs.radius];
    let mut z = [0.0; IN];
    for d in 0..IN {
        z[d] = raw[d] / INPUT_SCALE[d];
    }
    z
}

/// Scaled-space tangent direction corresponding to a planar velocity.
pub(super) fn scale_direction(w: [f64; 2]) -> [f64; IN] {
    [w[0] / INPUT_SCALE[0], w[1] / INPUT_SCALE[1], 0.0, 0.0, 0.0]
}

/// Forward pass in scaled space; fills activations and returns the *raw*
/// (unscaled) output.
pub(super) fn forward_scratch(params: &MlpParams, z: &[f64; IN], s: &mut Scratch) -> f64 {
    s.z = *z;
    matvec(params.w1(), H, IN, z, &mut s.a1);
    for i in 0..H {
        s.a1[i] += params.b1()[i];
        s.h1[i] = silu(s.a1[i]);
        s.d1[i] = silu_prime(s.a1[i]);
    }
    matvec(params.w2(), H, H, &s.h1, &mut s.a2);
    for i in 0..H {
        s.a2[i] += params.b2()[i];
        s.h2[i] = silu(s.a2[i]);
        s.d2[i] = silu_prime(s.a2[i]);
    }
    let mut y = params.b3();
    let w3 = params.w3();
    for i in 0..H {
        y += w3[i] * s.h2[i];
    }
    y
}

/// Forward tangent pass for a scaled direction; requires a completed
/// [`forward_scratch`] in `s`. Returns the raw directional derivative.
pub(super) fn tangent_scratch(params: &MlpParams, zdot: &[f64; IN], s: &mut Scratch) -> f64 {
    s.zdot = *zdot;
    matvec(params.w1(), H, IN, zdot, &mut s.ta1);
    for i in 0..H {
        s.th1[i] = s.d1[i] * s.ta1[i];
    }
    matvec(params.w2(), H, H, &s.th1, &mut s.ta2);
    for i in 0..H {
        s.th2[i] = s.d2[i] * s.ta2[i];
    }
    let w3 = params.w3();
    let mut ydot = 0.0;
    for i in 0..H {
        ydot += w3[i] * s.th2[i];
    }
    ydot
}

/// Reverse pass accumulating `seed_h * dh/dtheta` into `grad` (true units);
/// requires a completed forward pass in `s`.
pub(super) fn accumulate_param_gradient(
    params: &MlpParams,
    s: &mut Scratch,
    seed_h: f64,
    grad: &mut [f64],
) {
    debug_assert_eq!(grad.len(), PARAM_COUNT);
    let ly = seed_h * OUTPUT_SCALE;
    // Output layer.
    grad[B3_OFF] += ly;
    for i in 0..H {
        grad[W3_OFF + i] += ly * s.h2[i];
    }
    // lambda_a2 = d2 * (W3^T ly)
    let w3 = params.w3();
    for i in 0..H {
        s.buf_a[i] = s.d2[i] * w3[i] * ly;
    }
    for i in 0..H {
        grad[B2_OFF + i] += s.buf_a[i];
    }
    outer_accumulate(&mut grad[W2_OFF..B2_OFF], H, H, &s.buf_a, &s.h1);
    // lambda_a1 = d1 * (W2^T lambda_a2)
    matvec_transpose(params.w2(), H, H, &s.buf_a, &mut s.buf_b);
    for i in 0..H {
        s.buf_b[i] *= s.d1[i];
    }
    for i in 0..H {
        grad[B1_OFF + i] += s.buf_b[i];
    }
    outer_accumulate(&mut grad[W1_OFF..B1_OFF], H, IN, &s.buf_b, &s.z);
}

/// Dual reverse pass accumulating
/// `seed_h * dh/dtheta + seed_hdot * d(hdot)/dtheta` into `grad`, where
/// `hdot` is the directional derivative prepared by [`tangent_scratch`].
/// Requires completed forward *and* tangent passes in `s`.
pub(super) fn accumulate_dual_gradient(
    params: &MlpParams,
    s: &mut Scratch,
    seed_h: f64,
    seed_hdot: f64,
    grad: &mut [f64],
) {
    debug_assert_eq!(grad.len(), PARAM_COUNT);
    let ly = seed_h * OUTPUT_SCALE;
    let my = seed_hdot * OUTPUT_SCALE;

    // y = W3 h2 + b3 ; ydot = W3 th2.
    grad[B3_OFF] += ly;
    for i in 0..H {
        grad[W3_OFF + i] += ly * s.h2[i] + my * s.th2[i];
    }
    let w3 = params.w3();
    // lambda_h2 = W3^T ly ; mu_th2 = W3^T my  (componentwise since W3 is 1xH).
    // h2 = silu(a2) ; th2 = silu'(a2) * ta2.
    for i in 0..H {
        let lh2 = w3[i] * ly;
        let mh2 = w3[i] * my;
        s.buf_a[i] = s.d2[i] * lh2 + silu_second(s.a2[i]) * s.ta2[i] * mh2; // lambda_a2
        s.buf_b[i] = s.d2[i] * mh2; // mu_ta2
    }
    for i in 0..H {
        grad[B2_OFF + i] += s.buf_a[i];
    }
    // a2 = W2 h1 + b2 ; ta2 = W2 th1.
    outer_accumulate(&mut grad[W2_OFF..B2_OFF], H, H, &s.buf_a, &s.h1);
    outer_accumulate(&mut grad[W2_OFF..B2_OFF], H, H, &s.buf_b, &s.th1);
    // lambda_h1 = W2^T lambda_a2 ; mu_th1 = W2^T mu_ta2.
    matvec_transpose(params.w2(), H, H, &s.buf_a, &mut s.buf_c);
    matvec_transpose(params.w2(), H, H, &s.buf_b, &mut s.buf_d);
    // h1 = silu(a1) ; th1 = silu'(a1) * ta1.
    for i in 0..H {
        let la1 = s.d1[i] * s.buf_c[i] + silu_second(s.a1[i]) * s.ta1[i] * s.buf_d[i];
        let ma1 = s.d1[i] * s.buf_d[i];
        s.buf_c[i] = la1;
        s.buf_d[i] = ma1;
    }
    for i in 0..H {
        grad[B1_OFF + i] += s.buf_c[i];
    }
    // a1 = W1 z + b1 ; ta1 = W1 zdot.
    outer_accumulate(&mut grad[W1_OFF..B1_OFF], H, IN, &s.buf_c, &s.z);
    outer_accumulate(&mut grad[W1_OFF..B1_OFF], H, IN, &s.buf_d, &s.zdot);
}

/// Barrier value `h(p, obs)` in true units.
pub fn forward(params: &MlpParams, p: [f64; 2], obs: &Obstacle) -> f64 {
    let mut s = Scratch::default();
    let z = scale_input(p, obs);
    OUTPUT_SCALE * forward_scratch(params, &z, &mut s)
}

/// Reverse-to-input pass on a completed forward scratch; returns `dh/dp` in
/// true units.
pub(super) fn input_gradient_scratch(params: &MlpParams, s: &mut Scratch) -> [f64; 2] {
    // delta2 = d2 * W3, delta1 = d1 * (W2^T delta2), gz = W1^T delta1.
    let w3 = params.w3();
    for i in 0..H {
        s.buf_a[i] = s.d2[i] * w3[i];
    }
    matvec_transpose(params.w2(), H, H, &s.buf_a, &mut s.buf_b);
    for i in 0..H {
        s.buf_b[i] *= s.d1[i];
    }
    let mut gz = [0.0; IN];
    matvec_transpose(params.w1(), H, IN, &s.buf_b, &mut gz);
    [
        gz[0] * OUTPUT_SCALE / INPUT_SCALE[0],
        gz[1] * OUTPUT_SCALE / INPUT_SCALE[1],
    ]
}

/// Spatial gradient `dh/dp` in true units.
pub fn input_gradient(params: &MlpParams, p: [f64; 2], obs: &Obstacle) -> [f64; 2] {
    let mut s = Scratch::default();
    let z = scale_input(p, obs);
    forward_scratch(params, &z, &mut s);
    input_gradient_scratch(params, &mut s)
}

/// Directional derivative `grad_p h . w` in true units.
pub fn directional_derivative(
    params: &MlpParams,
    p: [f64; 2],
    obs: &Obstacle,
    w: [f64; 2],
) -> f64 {
    let mut s = Scratch::default();
    let z = scale_input(p, obs);
    forward_scratch(params, &z, &mut s);
    let zdot = scale_direction(w);
    OUTPUT_SCALE * tangent_scratch(params, &zdot, &mut s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_params(seed: u64) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpParams::random(&mut rng)
    }

    fn test_case(seed: u64) -> ([f64; 2], Obstacle) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let p = [rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0)];
        let obs = Obstacle::new(
            rng.random_range(-4.0..4.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.2..0.5),
        );
        (p, obs)
    }

    #[test]
    fn parameter_layout_covers_expected_count() {
        // 64*5 + 64 + 64*64 + 64 + 64 + 1 = 4609.
        assert_eq!(PARAM_COUNT, 4609);
        assert_eq!(MlpParams::zeros().as_flat().len(), PARAM_COUNT);
        assert!(MlpParams::from_flat(vec![0.0; 12]).is_none());
    }

    #[test]
    fn silu_derivatives_match_finite_differences() {
        let h = 1e-6;
        let mut t = -6.0;
        while t <= 6.0 {
            let fd1 = (silu(t + h) - silu(t - h)) / (2.0 * h);
            let fd2 = (silu_prime(t + h) - silu_prime(t - h)) / (2.0 * h);
            assert!((silu_prime(t) - fd1).abs() < 1e-6, "t={t}");
            assert!((silu_second(t) - fd2).abs() < 1e-6, "t={t}");
            t += 0.37;
        }
    }

    #[test]
    fn forward_is_finite_and_deterministic() {
        let params = test_params(1);
        let (p, obs) = test_case(1);
        let a = forward(&params, p, &obs);
        let b = forward(&params, p, &obs);
        assert!(a.is_finite());
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let params = MlpParams::zeros();
        let (p, obs) = test_case(2);
        assert_eq!(forward(&params, p, &obs), 0.0);
        assert_eq!(input_gradient(&params, p, &obs), [0.0, 0.0]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let params = test_params(3);
        let h = 1e-5;
        for trial in 0..100 {
            let (p, obs) = test_case(100 + trial);
            let g = input_gradient(&params, p, &obs);
            for d in 0..2 {
                let mut up = p;
                let mut dn = p;
                up[d] += h;
                dn[d] -= h;
                let fd = (forward(&params, up, &obs) - forward(&params, dn, &obs)) / (2.0 * h);
                let denom = 1.0 + g[d].abs().max(fd.abs());
                assert!(
                    (g[d] - fd).abs() / denom < 1e-6,
                    "trial {trial} dim {d}: {} vs {}",
                    g[d],
                    fd
                );
            }
        }
    }

    #[test]
    fn directional_derivative_matches_gradient_dot() {
        let params = test_params(4);
        for trial in 0..50 {
            let (p, obs) = test_case(500 + trial);
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let w = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let g = input_gradient(&params, p, &obs);
            let dd = directional_derivative(&params, p, &obs, w);
            let dot = g[0] * w[0] + g[1] * w[1];
            assert!((dd - dot).abs() < 1e-9 * (1.0 + dd.abs()), "{dd} vs {dot}");
        }
    }

    #[test]
    fn param_gradient_of_value_matches_finite_differences() {
        let params = test_params(5);
        let (p, obs) = test_case(7);
        let z = scale_input(p, &obs);
        let mut s = Scratch::default();
        forward_scratch(&params, &z, &mut s);
        let mut grad = vec![0.0; PARAM_COUNT];
        accumulate_param_gradient(&params, &mut s, 1.0, &mut grad);

        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..120 {
            let idx = rng.random_range(0..PARAM_COUNT);
            let mut up = params.clone();
            let mut dn = params.clone();
            up.as_flat_mut()[idx] += h;
            dn.as_flat_mut()[idx] -= h;
            let fd = (forward(&up, p, &obs) - forward(&dn, p, &obs)) / (2.0 * h);
            let denom = 1.0 + grad[idx].abs().max(fd.abs());
            assert!(
                (grad[idx] - fd).abs() / denom < 1e-5,
                "idx {idx}: {} vs {}",
                grad[idx],
                fd
            );
        }
    }

    #[test]
    fn dual_gradient_matches_finite_differences() {
        // d/dtheta [ B h + C (grad_p h . w) ] probed parameter-wise. This is
        // the second-order path: FD sees the combined value, the code path
        // the dual adjoint streams.
        let params = test_params(6);
        let (p, obs) = test_case(9);
        let w = [0.7, -1.1];
        let seed_h = 0.6;
        let seed_hdot = -1.3;

        let z = scale_input(p, &obs);
        let zdot = scale_direction(w);
        let mut s = Scratch::default();
        forward_scratch(&params, &z, &mut s);
        tangent_scratch(&params, &zdot, &mut s);
        let mut grad = vec![0.0; PARAM_COUNT];
        accumulate_dual_gradient(&params, &mut s, seed_h, seed_hdot, &mut grad);

        let combined = |pp: &MlpParams| {
            seed_h * forward(pp, p, &obs) + seed_hdot * directional_derivative(pp, p, &obs, w)
        };
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..150 {
            let idx = rng.random_range(0..PARAM_COUNT);
            let mut up = params.clone();
            let mut dn = params.clone();
            up.as_flat_mut()[idx] += h;
            dn.as_flat_mut()[idx] -= h;
            let fd = (combined(&up) - combined(&dn)) / (2.0 * h);
            let denom = 1.0 + grad[idx].abs().max(fd.abs());
            assert!(
                (grad[idx] - fd).abs() / denom < 1e-5,
                "idx {idx}: {} vs {}",
                grad[idx],
                fd
            );
        }
    }

    #[test]
    fn random_init_is_seed_deterministic() {
        let a = test_params(12);
        let b = test_params(12);
        let c = test_params(13);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.is_finite());
    }
}
