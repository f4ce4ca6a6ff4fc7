//! Formation graph, nominal-state consensus, and tracking Lyapunov function.
//!
//! Each follower `i` fuses the states of its graph neighbours (shifted by
//! per-edge offsets) and, when it has access, the leader state (shifted by a
//! per-robot offset) into a single *nominal state* — the state robot `i`
//! should currently occupy:
//!
//! ```text
//! xhat_i = [ sum_j c_ij (x_j + d_ij) + s_i (x_r + d_ir) ] / (sum_j c_ij + s_i)
//! ```
//!
//! Positions and speeds average linearly; headings average circularly through
//! the summed sine/cosine of each contribution, so contributions near the
//! `+pi/-pi` seam do not cancel. The tracking error `e = x - xhat` (heading
//! component wrapped) induces the Lyapunov function `V = e . e` whose decay
//! the tracking controller enforces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{control_effect, drift, ControlInput, RobotState};
use crate::math;

/// Errors raised by formation-graph construction and evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum FormationSpecError {
    #[error("adjacency matrix must be {n}x{n}, got row {row} of length {len}")]
    ShapeMismatch { n: usize, row: usize, len: usize },
    #[error("robot {0} lists itself as a neighbour")]
    SelfLoop(usize),
    #[error("robot {0} has no neighbours and no leader access")]
    EmptyNeighbourhood(usize),
    #[error("robot index {index} out of range for {n} robots")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("robot {0} has leader access but no leader state was provided")]
    MissingLeader(usize),
    #[error("state and input slices must have length {n}, got {len}")]
    WrongSliceLength { n: usize, len: usize },
    #[error("non-finite offset for robot {0}")]
    NonFiniteOffset(usize),
}

/// Static description of the information topology and desired geometry.
///
/// `adjacency[i][j]` is true when robot `i` listens to robot `j`;
/// `neighbor_offsets[i][j]` is the desired state difference `x_i - x_j`, and
/// `leader_offsets[i]` the desired `x_i - x_r`. Offsets are expressed in the
/// world frame unless the caller asks for body-frame interpretation, in
/// which case the positional part is rotated by the leader heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    n: usize,
    adjacency: Vec<Vec<bool>>,
    leader_access: Vec<bool>,
    neighbor_offsets: Vec<Vec<[f64; 4]>>,
    leader_offsets: Vec<[f64; 4]>,
}

impl FormationSpec {
    /// Builds and validates a specification from explicit parts.
    pub fn from_parts(
        adjacency: Vec<Vec<bool>>,
        leader_access: Vec<bool>,
        neighbor_offsets: Vec<Vec<[f64; 4]>>,
        leader_offsets: Vec<[f64; 4]>,
    ) -> Result<Self, FormationSpecError> {
        let n = adjacency.len();
        let spec = Self { n, adjacency, leader_access, neighbor_offsets, leader_offsets };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a formation from per-robot positional offsets relative to the
    /// leader. Edges listed in `edges` become bidirectional neighbour links
    /// whose offsets are derived consistently as differences of the leader
    /// offsets; `leader_access[i]` controls which robots hear the leader
    /// directly.
    pub fn from_leader_offsets(
        offsets: &[[f64; 2]],
        edges: &[(usize, usize)],
        leader_access: &[bool],
    ) -> Result<Self, FormationSpecError> {
        let n = offsets.len();
        if leader_access.len() != n {
            return Err(FormationSpecError::WrongSliceLength { n, len: leader_access.len() });
        }
        let mut adjacency = vec![vec![false; n]; n];
        let mut neighbor_offsets = vec![vec![[0.0; 4]; n]; n];
        for &(i, j) in edges {
            for &k in &[i, j] {
                if k >= n {
                    return Err(FormationSpecError::IndexOutOfRange { index: k, n });
                }
            }
            if i == j {
                return Err(FormationSpecError::SelfLoop(i));
            }
            adjacency[i][j] = true;
            adjacency[j][i] = true;
            let d = math::sub2(offsets[i], offsets[j]);
            neighbor_offsets[i][j] = [d[0], d[1], 0.0, 0.0];
            neighbor_offsets[j][i] = [-d[0], -d[1], 0.0, 0.0];
        }
        let leader_offsets =
            offsets.iter().map(|o| [o[0], o[1], 0.0, 0.0]).collect::<Vec<_>>();
        Self::from_parts(adjacency, leader_access.to_vec(), neighbor_offsets, leader_offsets)
    }

    /// A degenerate formation of `n` independent robots that each track only
    /// their own reference (no inter-robot coupling, zero offsets).
    pub fn independent(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![vec![false; n]; n],
            leader_access: vec![true; n],
            neighbor_offsets: vec![vec![[0.0; 4]; n]; n],
            leader_offsets: vec![[0.0; 4]; n],
        }
    }

    pub fn validate(&self) -> Result<(), FormationSpecError> {
        let n = self.n;
        for (row, r) in self.adjacency.iter().enumerate() {
            if r.len() != n {
                return Err(FormationSpecError::ShapeMismatch { n, row, len: r.len() });
            }
        }
        if self.leader_access.len() != n {
            return Err(FormationSpecError::WrongSliceLength { n, len: self.leader_access.len() });
        }
        if self.neighbor_offsets.len() != n || self.leader_offsets.len() != n {
            return Err(FormationSpecError::WrongSliceLength {
                n,
                len: self.neighbor_offsets.len().min(self.leader_offsets.len()),
            });
        }
        for (row, r) in self.neighbor_offsets.iter().enumerate() {
            if r.len() != n {
                return Err(FormationSpecError::ShapeMismatch { n, row, len: r.len() });
            }
        }
        for i in 0..n {
            if self.adjacency[i][i] {
                return Err(FormationSpecError::SelfLoop(i));
            }
            if self.degree(i) == 0 && !self.leader_access[i] {
                return Err(FormationSpecError::EmptyNeighbourhood(i));
            }
            let finite = self.leader_offsets[i].iter().all(|c| c.is_finite())
                && self.neighbor_offsets[i].iter().flatten().all(|c| c.is_finite());
            if !finite {
                return Err(FormationSpecError::NonFiniteOffset(i));
            }
        }
        Ok(())
    }

    pub fn n_robots(&self) -> usize {
        self.n
    }

    /// Number of neighbours robot `i` listens to.
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].iter().filter(|&&c| c).count()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().enumerate().filter(|(_, &c)| c).map(|(j, _)| j)
    }

    pub fn has_leader_access(&self, i: usize) -> bool {
        self.leader_access[i]
    }

    pub fn neighbor_offset(&self, i: usize, j: usize) -> [f64; 4] {
        self.neighbor_offsets[i][j]
    }

    pub fn leader_offset(&self, i: usize) -> [f64; 4] {
        self.leader_offsets[i]
    }
}

/// Tracking error `e = x - xhat` with the heading component wrapped to
/// `(-pi, pi]`. A control quantity, not a failure type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingError(pub [f64; 4]);

impl TrackingError {
    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    /// Full-state Euclidean norm.
    pub fn norm(&self) -> f64 {
        math::norm4(self.0)
    }

    /// Norm of the positional components only.
    pub fn position_norm(&self) -> f64 {
        math::norm2([self.0[0], self.0[1]])
    }
}

/// Rotates the positional part of an offset by the leader heading when the
/// formation is interpreted in the leader body frame.
fn oriented_offset(offset: [f64; 4], heading: f64, body_frame: bool) -> [f64; 4] {
    if body_frame {
        let p = math::rotate2([offset[0], offset[1]], heading);
        [p[0], p[1], offset[2], offset[3]]
    } else {
        offset
    }
}

struct Accumulator {
    weight: f64,
    pos: [f64; 2],
    sin: f64,
    cos: f64,
    speed: f64,
}

impl Accumulator {
    fn new() -> Self {
        Self { weight: 0.0, pos: [0.0; 2], sin: 0.0, cos: 0.0, speed: 0.0 }
    }

    fn push(&mut self, state: &RobotState, offset: [f64; 4]) {
        self.weight += 1.0;
        self.pos[0] += state.px + offset[0];
        self.pos[1] += state.py + offset[1];
        let theta = state.theta + offset[2];
        self.sin += theta.sin();
        self.cos += theta.cos();
        self.speed += state.v + offset[3];
    }
}

/// Nominal state of robot `i` given the current team and leader states.
///
/// `leader` carries the reference this robot averages in when it has leader
/// access; it may be the shared leader or a per-robot virtual reference.
/// In `body_frame` mode positional offsets are rotated by the heading of the
/// state they attach to. Headings average circularly.
pub fn nominal_state(
    i: usize,
    followers: &[RobotState],
    leader: Option<&RobotState>,
    spec: &FormationSpec,
    body_frame: bool,
) -> Result<RobotState, FormationSpecError> {
    let n = spec.n_robots();
    if i >= n {
        return Err(FormationSpecError::IndexOutOfRange { index: i, n });
    }
    if followers.len() != n {
        return Err(FormationSpecError::WrongSliceLength { n, len: followers.len() });
    }
    let mut acc = Accumulator::new();
    for j in spec.neighbors(i) {
        let off = oriented_offset(spec.neighbor_offset(i, j), followers[j].theta, body_frame);
        acc.push(&followers[j], off);
    }
    if spec.has_leader_access(i) {
        let r = leader.ok_or(FormationSpecError::MissingLeader(i))?;
        let off = oriented_offset(spec.leader_offset(i), r.theta, body_frame);
        acc.push(r, off);
    }
    if acc.weight == 0.0 {
        return Err(FormationSpecError::EmptyNeighbourhood(i));
    }
    let theta = if acc.sin.abs() < 1e-300 && acc.cos.abs() < 1e-300 {
        0.0
    } else {
        acc.sin.atan2(acc.cos)
    };
    Ok(RobotState {
        px: acc.pos[0] / acc.weight,
        py: acc.pos[1] / acc.weight,
        theta,
        v: acc.speed / acc.weight,
    })
}

/// Time derivative of [`nominal_state`] given the inputs currently applied
/// by the contributing robots.
///
/// Positions differentiate to planar velocities, speeds to accelerations,
/// and the circular heading mean to its exact quotient-rule derivative. In
/// `body_frame` mode the rotation of positional offsets contributes an
/// additional `omega x offset` term.
pub fn nominal_state_rate(
    i: usize,
    followers: &[RobotState],
    inputs: &[ControlInput],
    leader: Option<(&RobotState, &ControlInput)>,
    spec: &FormationSpec,
    body_frame: bool,
) -> Result<[f64; 4], FormationSpecError> {
    let n = spec.n_robots();
    if i >= n {
        return Err(FormationSpecError::IndexOutOfRange { index: i, n });
    }
    if followers.len() != n {
        return Err(FormationSpecError::WrongSliceLength { n, len: followers.len() });
    }
    if inputs.len() != n {
        return Err(FormationSpecError::WrongSliceLength { n, len: inputs.len() });
    }

    let mut weight = 0.0;
    let mut pos_rate = [0.0; 2];
    let mut sin = 0.0;
    let mut cos = 0.0;
    let mut sin_rate = 0.0;
    let mut cos_rate = 0.0;
    let mut accel = 0.0;

    let mut push = |state: &RobotState, input: &ControlInput, offset: [f64; 4]| {
        weight += 1.0;
        let vel = state.planar_velocity();
        pos_rate[0] += vel[0];
        pos_rate[1] += vel[1];
        if body_frame {
            // d/dt R(theta) d = omega * R(theta + pi/2) d on the positional part.
            let spun = math::rotate2(
                [offset[0], offset[1]],
                state.theta + std::f64::consts::FRAC_PI_2,
            );
            pos_rate[0] += input.omega * spun[0];
            pos_rate[1] += input.omega * spun[1];
        }
        let theta = state.theta + offset[2];
        sin += theta.sin();
        cos += theta.cos();
        sin_rate += theta.cos() * input.omega;
        cos_rate -= theta.sin() * input.omega;
        accel += input.a;
    };

    for j in spec.neighbors(i) {
        push(&followers[j], &inputs[j], spec.neighbor_offset(i, j));
    }
    if spec.has_leader_access(i) {
        let (r, ur) = leader.ok_or(FormationSpecError::MissingLeader(i))?;
        push(r, ur, spec.leader_offset(i));
    }
    if weight == 0.0 {
        return Err(FormationSpecError::EmptyNeighbourhood(i));
    }

    let mag_sq = sin * sin + cos * cos;
    let theta_rate =
        if mag_sq < 1e-300 { 0.0 } else { (sin_rate * cos - cos_rate * sin) / mag_sq };

    Ok([pos_rate[0] / weight, pos_rate[1] / weight, theta_rate, accel / weight])
}

/// Tracking error `e = x - xhat`, heading wrapped to `(-pi, pi]`.
pub fn tracking_error(x: &RobotState, nominal: &RobotState) -> TrackingError {
    TrackingError([
        x.px - nominal.px,
        x.py - nominal.py,
        math::wrap_angle(x.theta - nominal.theta),
        x.v - nominal.v,
    ])
}

/// Quadratic Lyapunov function `V = e . e`.
pub fn lyapunov(e: &TrackingError) -> f64 {
    math::dot4(e.0, e.0)
}

/// Time derivative of `V` along the model under input `u`, given the rate of
/// the nominal state: `Vdot = 2 e . (f(x) + g u - xhat_dot)`.
pub fn lyapunov_rate(
    x: &RobotState,
    u: &ControlInput,
    e: &TrackingError,
    nominal_rate: &[f64; 4],
) -> f64 {
    let xdot = math::add4(drift(x), control_effect(u));
    2.0 * math::dot4(e.0, math::sub4(xdot, *nominal_rate))
}
