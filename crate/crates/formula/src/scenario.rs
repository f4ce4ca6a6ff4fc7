//! Named benchmark scenarios and their seeded generation.
//!
//! Every scenario is deterministic given its seed: obstacle layouts come
//! from rejection sampling driven by a counter-based generator, with
//! clearance rules that keep every start and goal reachable, keep the
//! leader's open-loop lane passable, and force genuine detours (pairwise
//! obstacle gaps stay too narrow for a robot plus its safety margin, so
//! paths must go around, not between).
//!
//! The library covers the benchmark grid: a 2-follower triangle, 4- and
//! 8-follower clutter runs, a leaderless 4-robot intersection whose paths
//! cross near the origin, and an obstacle-free corridor used to measure
//! pure formation convergence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::Obstacle;
use crate::dynamics::RobotState;
use crate::formation::{FormationSpec, FormationSpecError};
use crate::math;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario {name:?}; available: {available}")]
    UnknownName { name: String, available: String },
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error("invalid formation: {0}")]
    Formation(#[from] FormationSpecError),
    #[error("could not place {count} obstacles for scenario {name:?} with seed {seed}")]
    PlacementFailed { name: String, count: usize, seed: u64 },
}

/// Axis-aligned rectangular workspace centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: f64,
    pub height: f64,
}

impl Workspace {
    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    pub fn half_height(&self) -> f64 {
        self.height / 2.0
    }

    /// True when `p` lies inside the rectangle shrunk by `inset` on all sides.
    pub fn contains(&self, p: [f64; 2], inset: f64) -> bool {
        p[0].abs() <= self.half_width() - inset && p[1].abs() <= self.half_height() - inset
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Self { width: 10.0, height: 4.5 }
    }
}

/// Straight-line reference path for the leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderPath {
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Nominal cruise speed along the path (m/s).
    pub speed: f64,
}

impl LeaderPath {
    pub fn heading(&self) -> f64 {
        let d = math::sub2(self.goal, self.start);
        d[1].atan2(d[0])
    }

    pub fn length(&self) -> f64 {
        math::norm2(math::sub2(self.goal, self.start))
    }
}

/// What the team is asked to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mission {
    /// A leader tracks its path while the followers hold formation.
    LeaderFormation(LeaderPath),
    /// No leader: each robot independently heads to its own goal.
    IndependentGoals { goals: Vec<[f64; 2]>, speed: f64 },
}

/// A fully specified benchmark instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub workspace: Workspace,
    pub obstacles: Vec<Obstacle>,
    pub formation: FormationSpec,
    /// Initial follower states, one per formation slot.
    pub follower_starts: Vec<RobotState>,
    pub mission: Mission,
    /// Offsets are interpreted in the carrier's body frame when true.
    pub body_frame: bool,
    /// Surface-distance margin used when counting safety violations (m).
    pub safety_s: f64,
    /// Simulated duration cap (s).
    pub duration: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn n_followers(&self) -> usize {
        self.formation.n_robots()
    }

    pub fn has_leader(&self) -> bool {
        matches!(self.mission, Mission::LeaderFormation(_))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.formation.validate()?;
        if self.follower_starts.len() != self.formation.n_robots() {
            return Err(ScenarioError::Invalid("one start state per formation slot required"));
        }
        // Zero duration is allowed: it produces a log with the initial row only.
        if !(self.duration >= 0.0) {
            return Err(ScenarioError::Invalid("duration must be non-negative"));
        }
        if !(self.safety_s > 0.0) {
            return Err(ScenarioError::Invalid("safety_s must be positive"));
        }
        if self.follower_starts.iter().any(|s| !s.is_finite()) {
            return Err(ScenarioError::Invalid("start states must be finite"));
        }
        for obs in &self.obstacles {
            if !(obs.radius > 0.0) || !obs.cx.is_finite() || !obs.cy.is_finite() {
                return Err(ScenarioError::Invalid("obstacles must be finite with positive radius"));
            }
            if !self.workspace.contains(obs.center(), obs.radius) {
                return Err(ScenarioError::Invalid("obstacles must lie inside the workspace"));
            }
        }
        match &self.mission {
            Mission::LeaderFormation(path) => {
                if math::norm2(math::sub2(path.goal, path.start)) < 1e-9 {
                    return Err(ScenarioError::Invalid("leader start and goal must differ"));
                }
                if !(path.speed > 0.0) {
                    return Err(ScenarioError::Invalid("leader speed must be positive"));
                }
            }
            Mission::IndependentGoals { goals, speed } => {
                if goals.len() != self.formation.n_robots() {
                    return Err(ScenarioError::Invalid("one goal per robot required"));
                }
                if !(*speed > 0.0) {
                    return Err(ScenarioError::Invalid("cruise speed must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Positions obstacle placement must keep clear: every start plus every
    /// goal slot (leader goal offset by the formation for followers).
    pub fn protected_points(&self) -> Vec<[f64; 2]> {
        let mut pts: Vec<[f64; 2]> =
            self.follower_starts.iter().map(|s| s.position()).collect();
        match &self.mission {
            Mission::LeaderFormation(path) => {
                pts.push(path.start);
                pts.push(path.goal);
                for i in 0..self.formation.n_robots() {
                    let off = self.formation.leader_offset(i);
                    pts.push(math::add2(path.goal, [off[0], off[1]]));
                }
            }
            Mission::IndependentGoals { goals, .. } => pts.extend(goals.iter().copied()),
        }
        pts
    }

    /// Stable content fingerprint for log headers.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("validated scenarios serialise");
        crate::nn_cbf::sha256_hex(json.as_bytes())
    }
}

/// Minimum surface clearance between an obstacle and any protected point.
/// Spawning or parking requires robot radius plus barrier margin (0.5 m);
/// the extra 0.2 m leaves the initial barrier comfortably positive.
const POINT_CLEARANCE: f64 = 0.7;
/// Minimum surface gap between two obstacles. Anything below twice the
/// robot radius plus margin (1.0 m) is impassable, so this keeps gaps
/// closed to traffic while still packing obstacles densely.
const PAIR_GAP: f64 = 0.5;
/// Minimum surface clearance between an obstacle and the leader's reference
/// segment. The leader tracks its line open-loop, so its own clearance
/// (this value minus the robot radius, 0.45 m) must stay above every
/// reported safety margin — otherwise the leader's fixed trajectory would
/// dominate the safety rate identically for every follower controller.
/// Followers hold slots offset from the lane, so they still meet obstacles.
const LANE_CLEARANCE: f64 = 0.65;
const PLACEMENT_ATTEMPTS: usize = 5000;

fn place_obstacles(
    name: &str,
    count: usize,
    workspace: &Workspace,
    protected: &[[f64; 2]],
    lane: Option<[[f64; 2]; 2]>,
    seed: u64,
) -> Result<Vec<Obstacle>, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<Obstacle> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let radius = rng.random_range(0.25..0.45);
            let cx = rng.random_range(-(workspace.half_width() - radius)
                ..workspace.half_width() - radius);
            let cy = rng.random_range(-(workspace.half_height() - radius)
                ..workspace.half_height() - radius);
            let cand = Obstacle::new(cx, cy, radius);
            let clear_points = protected.iter().all(|p| {
                math::norm2(math::sub2(*p, cand.center())) - cand.radius >= POINT_CLEARANCE
            });
            let clear_lane = lane.is_none_or(|[a, b]| {
                math::point_segment_distance(cand.center(), a, b) - cand.radius
                    >= LANE_CLEARANCE
            });
            let clear_pairs = placed.iter().all(|o| {
                math::norm2(math::sub2(o.center(), cand.center())) - o.radius - cand.radius
                    >= PAIR_GAP
            });
            if clear_points && clear_lane && clear_pairs {
                placed.push(cand);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(ScenarioError::PlacementFailed { name: name.to_string(), count, seed });
        }
    }
    Ok(placed)
}

fn follower_starts_for(path: &LeaderPath, offsets: &[[f64; 2]]) -> Vec<RobotState> {
    let heading = path.heading();
    offsets
        .iter()
        .map(|off| RobotState::new(path.start[0] + off[0], path.start[1] + off[1], heading, 0.0))
        .collect()
}

fn formation_scenario(
    name: &str,
    path: LeaderPath,
    offsets: &[[f64; 2]],
    edges: &[(usize, usize)],
    leader_access: &[bool],
    n_obstacles: usize,
    duration: f64,
    safety_s: f64,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    let formation = FormationSpec::from_leader_offsets(offsets, edges, leader_access)?;
    let follower_starts = follower_starts_for(&path, offsets);
    let mut scenario = Scenario {
        name: name.to_string(),
        workspace: Workspace::default(),
        obstacles: Vec::new(),
        formation,
        follower_starts,
        mission: Mission::LeaderFormation(path),
        body_frame: false,
        safety_s,
        duration,
        seed,
    };
    scenario.obstacles = place_obstacles(
        name,
        n_obstacles,
        &scenario.workspace,
        &scenario.protected_points(),
        Some([path.start, path.goal]),
        seed,
    )?;
    scenario.validate()?;
    Ok(scenario)
}

/// The built-in scenario names, in documentation order.
pub fn available() -> &'static [&'static str] {
    &["triangle-2f", "clutter-4f", "clutter-8f", "intersection-4", "corridor-2f"]
}

/// Builds a named scenario for a seed. Unknown names report the catalogue.
pub fn by_name(name: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    match name {
        "triangle-2f" => formation_scenario(
            name,
            LeaderPath { start: [-4.0, 0.0], goal: [4.0, 0.0], speed: 0.75 },
            &[[-0.8, 0.5], [-0.8, -0.5]],
            &[(0, 1)],
            &[true, true],
            7,
            16.0,
            0.25,
            seed,
        ),
        "clutter-4f" => formation_scenario(
            name,
            LeaderPath { start: [-3.2, 0.0], goal: [4.0, 0.0], speed: 0.75 },
            &[[-0.8, 0.6], [-0.8, -0.6], [-1.6, 1.2], [-1.6, -1.2]],
            &[(0, 1), (0, 2), (1, 3), (2, 3)],
            &[true, true, false, false],
            9,
            15.0,
            0.25,
            seed,
        ),
        "clutter-8f" => formation_scenario(
            name,
            LeaderPath { start: [-1.8, 0.0], goal: [4.2, 0.0], speed: 0.75 },
            &[
                [-0.7, 0.55],
                [-0.7, -0.55],
                [-1.4, 0.55],
                [-1.4, -0.55],
                [-2.1, 0.55],
                [-2.1, -0.55],
                [-2.8, 0.55],
                [-2.8, -0.55],
            ],
            &[
                (0, 1),
                (2, 3),
                (4, 5),
                (6, 7),
                (0, 2),
                (1, 3),
                (2, 4),
                (3, 5),
                (4, 6),
                (5, 7),
            ],
            &[true, true, false, false, false, false, false, false],
            12,
            13.0,
            0.25,
            seed,
        ),
        "intersection-4" => {
            let starts = vec![
                RobotState::new(2.0, 0.0, std::f64::consts::PI, 0.0),
                RobotState::new(-2.0, 0.0, 0.0, 0.0),
                RobotState::new(0.0, 1.8, -std::f64::consts::FRAC_PI_2, 0.0),
                RobotState::new(0.0, -1.8, std::f64::consts::FRAC_PI_2, 0.0),
            ];
            let goals = vec![[-2.0, 0.0], [2.0, 0.0], [0.0, -1.8], [0.0, 1.8]];
            let scenario = Scenario {
                name: name.to_string(),
                workspace: Workspace::default(),
                obstacles: Vec::new(),
                formation: FormationSpec::independent(4),
                follower_starts: starts,
                mission: Mission::IndependentGoals { goals, speed: 0.5 },
                body_frame: false,
                safety_s: 0.25,
                duration: 60.0,
                seed,
            };
            scenario.validate()?;
            Ok(scenario)
        }
        "corridor-2f" => {
            let path = LeaderPath { start: [-4.0, 0.0], goal: [4.0, 0.0], speed: 0.5 };
            let offsets = [[-0.8, 0.5], [-0.8, -0.5]];
            let formation =
                FormationSpec::from_leader_offsets(&offsets, &[(0, 1)], &[true, true])?;
            let scenario = Scenario {
                name: name.to_string(),
                workspace: Workspace::default(),
                obstacles: Vec::new(),
                formation,
                follower_starts: follower_starts_for(&path, &offsets),
                mission: Mission::LeaderFormation(path),
                body_frame: false,
                safety_s: 0.25,
                duration: 40.0,
                seed,
            };
            scenario.validate()?;
            Ok(scenario)
        }
        other => Err(ScenarioError::UnknownName {
            name: other.to_string(),
            available: available().join(", "),
        }),
    }
}

/// The clutter scenario matching a follower count, if the benchmark grid
/// defines one.
pub fn clutter_for_size(n_followers: usize) -> Option<&'static str> {
    match n_followers {
        2 => Some("triangle-2f"),
        4 => Some("clutter-4f"),
        8 => Some("clutter-8f"),
        _ => None,
    }
}
