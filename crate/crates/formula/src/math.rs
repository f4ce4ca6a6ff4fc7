//! Small fixed-size vector helpers shared across the crate.
//!
//! Everything operates on plain `[f64; N]` arrays; the problem sizes here
//! (planar positions, four-dimensional robot states) are far too small to
//! justify a linear-algebra dependency.

use std::f64::consts::PI;

/// Wraps an angle to the half-open interval `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Euclidean norm of a planar vector.
pub fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Squared Euclidean norm of a planar vector.
pub fn norm2_sq(v: [f64; 2]) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

/// Planar dot product.
pub fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Planar `a - b`.
pub fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Planar `a + b`.
pub fn add2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// Planar `s * v`.
pub fn scale2(s: f64, v: [f64; 2]) -> [f64; 2] {
    [s * v[0], s * v[1]]
}

/// Rotates a planar vector by `theta` radians counter-clockwise.
pub fn rotate2(v: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Dot product of two four-vectors.
pub fn dot4(a: [f64; 4], b: [f64; 4]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Four-vector `a - b`.
pub fn sub4(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

/// Four-vector `a + b`.
pub fn add4(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

/// Four-vector `s * v`.
pub fn scale4(s: f64, v: [f64; 4]) -> [f64; 4] {
    [s * v[0], s * v[1], s * v[2], s * v[3]]
}

/// Euclidean norm of a four-vector.
pub fn norm4(v: [f64; 4]) -> f64 {
    dot4(v, v).sqrt()
}

/// Clamps `x` to `[lo, hi]`.
pub fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    x.max(lo).min(hi)
}

/// Distance from point `p` to the closed segment `[a, b]`.
///
/// Degenerate segments (`a == b`) fall back to the point distance.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub2(b, a);
    let len_sq = norm2_sq(ab);
    if len_sq <= 1e-18 {
        return norm2(sub2(p, a));
    }
    let t = clamp(dot2(sub2(p, a), ab) / len_sq, 0.0, 1.0);
    norm2(sub2(p, add2(a, scale2(t, ab))))
}
