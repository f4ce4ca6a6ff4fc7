//! Synchronized multi-robot rollout loop, logging, and metrics.
//!
//! One tick works in two phases. In the read phase every controller sees
//! the same state snapshot: consensus targets are computed from current
//! states plus the inputs applied on the previous tick, each follower's
//! controller produces a candidate command, and the leader (when present)
//! runs pure pursuit toward its goal. In the write phase all robots step
//! simultaneously. This keeps the loop deterministic and order-independent
//! in effect, while each controller still only receives the information the
//! communication graph grants it: its own state, neighbour states, the
//! leader state when it has access, and entities within sensing range.
//!
//! Controller failures at a tick are logged and replaced by a zero command
//! for that robot on that tick; the rollout continues.
//!
//! The leader is filtered through the analytic-barrier projection under
//! every controller so that follower-side differences, not leader luck,
//! drive the comparison.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::barrier::{self, BarrierConfig, Obstacle};
use crate::baselines::{Apf, ApfConfig, BaselineError, MpcCbf, MpcCbfConfig};
use crate::clf_mpc::{ClfMpc, ClfMpcConfig, ClfMpcError};
use crate::deadlock::{filter_conflict_cost, DeadlockConfig, Resolver};
use crate::dynamics::{step, ControlInput, DynamicsError, Limits, RobotState, DEFAULT_DT};
use crate::formation::{nominal_state, nominal_state_rate, tracking_error, FormationSpecError};
use crate::math;
use crate::nn_cbf::{HarvestSample, MlpParams};
use crate::safety_filter::{
    build_constraints, project, velocity_to_input, BarrierModel, DEFAULT_SENSING_RADIUS,
};
use crate::scenario::{Mission, Scenario, ScenarioError};

/// Positional tolerance for counting a goal as reached (m).
pub const GOAL_TOL: f64 = 0.1;
/// How long the completion condition must hold continuously (s).
pub const HOLD_SECONDS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Formation(#[from] FormationSpecError),
    #[error("tracking controller setup failed: {0}")]
    Mpc(#[from] ClfMpcError),
    #[error("baseline controller setup failed: {0}")]
    Baseline(#[from] BaselineError),
    #[error("dynamics failure: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("the proposed controller requires a trained barrier model")]
    MissingModel,
    #[error("malformed rollout log: {0}")]
    MalformedLog(&'static str),
    #[error("unknown controller {0:?}; available: proposed, apf, mpc-cbf, clf-cbf-qp")]
    UnknownController(String),
}

/// Which follower controller the rollout uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Receding-horizon tracker, learned barrier filter, deadlock resolver.
    Proposed,
    /// Artificial potential fields.
    Apf,
    /// Tracking MPC with discrete barrier penalties.
    MpcCbf,
    /// Horizon-1 tracker plus analytic barrier filter (shared code paths).
    ClfCbfQp,
}

impl ControllerKind {
    pub fn all() -> [ControllerKind; 4] {
        [Self::Proposed, Self::Apf, Self::MpcCbf, Self::ClfCbfQp]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Apf => "apf",
            Self::MpcCbf => "mpc-cbf",
            Self::ClfCbfQp => "clf-cbf-qp",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "apf" => Ok(Self::Apf),
            "mpc-cbf" => Ok(Self::MpcCbf),
            "clf-cbf-qp" => Ok(Self::ClfCbfQp),
            other => Err(SimError::UnknownController(other.to_string())),
        }
    }
}

/// Harness-level knobs shared by all controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub limits: Limits,
    pub barrier: BarrierConfig,
    pub sensing_radius: f64,
    /// Distance over which goal references taper their speed (m).
    pub slow_radius: f64,
    /// Enables the deadlock resolver for the proposed controller.
    pub resolver_enabled: bool,
    pub deadlock: DeadlockConfig,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            limits: Limits::default(),
            barrier: BarrierConfig::default(),
            sensing_radius: DEFAULT_SENSING_RADIUS,
            slow_radius: 0.5,
            resolver_enabled: true,
            deadlock: DeadlockConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Follower,
    Leader,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Follower => "follower",
            Self::Leader => "leader",
        }
    }
}

/// One CSV row: the state of one robot at one step plus the command applied
/// there and the per-robot diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub time: f64,
    pub robot: usize,
    pub role: Role,
    pub state: RobotState,
    pub input: ControlInput,
    /// Minimum analytic barrier value over all obstacles and other robots.
    pub h_min: f64,
    /// Full-state tracking error norm against the robot's (unperturbed)
    /// reference.
    pub e_norm: f64,
    /// Tracking cost reported by the robot's solver this tick (zero for
    /// controllers without one).
    pub j_clf: f64,
    /// True when the deadlock resolver counted a fresh trigger this tick.
    pub deadlock: bool,
}

/// Complete record of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutLog {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub controller: String,
    pub seed: u64,
    pub dt: f64,
    /// Robot body radius used for surface distances (m).
    pub r_rob: f64,
    /// Rows ordered by step, then robot id; the leader (when present) is
    /// robot `n_followers` and comes last within each step.
    pub rows: Vec<LogRow>,
    pub n_followers: usize,
    pub has_leader: bool,
    pub completed: bool,
    pub deadlock_triggers: usize,
    /// Controller failures, as "step/robot: message" strings.
    pub errors: Vec<String>,
    /// Wall-clock seconds for the loop; reported in sidecars, never in CSV.
    pub wall_time: f64,
}

/// The fixed CSV column order (documented in the README; stable).
pub const CSV_HEADER: &str = "step,time,robot,role,px,py,theta,v,a,omega,h_min,e_norm,j_clf,deadlock";

impl RolloutLog {
    pub fn n_robots(&self) -> usize {
        self.n_followers + usize::from(self.has_leader)
    }

    /// Renders the rows in the fixed column order. Numbers use the shortest
    /// round-trip decimal form, so equal logs render to identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let s = &r.state;
            let u = &r.input;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.step,
                r.time,
                r.robot,
                r.role.as_str(),
                s.px,
                s.py,
                s.theta,
                s.v,
                u.a,
                u.omega,
                r.h_min,
                r.e_norm,
                r.j_clf,
                u8::from(r.deadlock),
            ));
        }
        out
    }

    /// Longest continuous stretch (seconds) during which the robot's speed
    /// stayed below `speed_eps`.
    pub fn longest_stall(&self, robot: usize, speed_eps: f64) -> f64 {
        let mut best = 0usize;
        let mut run = 0usize;
        for row in self.rows.iter().filter(|r| r.robot == robot) {
            if row.state.v.abs() < speed_eps {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best as f64 * self.dt
    }
}

/// Aggregate rollout quality measures.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    /// Fraction of steps at which every surface distance met the margin.
    pub safety_rate: f64,
    /// Mean positional tracking error over followers and steps (m).
    pub avg_formation_error: f64,
    /// Time-averaged minimum surface distance (m).
    pub avg_min_distance: f64,
    pub completion: bool,
    pub wall_time: f64,
}

/// Reference state for a robot heading to a fixed goal: positioned at the
/// goal, facing it from the robot's side, with speed tapering linearly to
/// zero inside `slow_radius`. Paired with a zero reference rate.
///
/// The speed reference is additionally scaled by the heading alignment
/// `max(0, cos(theta_err))`: a robot that has overshot its goal is told to
/// stop and turn rather than keep cruising, which would otherwise settle
/// into a stable orbit around the goal (the reference heading spins as the
/// robot circles, and outside `slow_radius` nothing ever lowers the speed).
pub fn goal_reference(x: &RobotState, goal: [f64; 2], cruise: f64, slow_radius: f64) -> RobotState {
    let to_goal = math::sub2(goal, x.position());
    let dist = math::norm2(to_goal);
    let theta = if dist > 1e-9 { to_goal[1].atan2(to_goal[0]) } else { x.theta };
    let align = math::wrap_angle(theta - x.theta).cos().max(0.0);
    let v = cruise * (dist / slow_radius).min(1.0) * align;
    RobotState { px: goal[0], py: goal[1], theta, v }
}

/// Per-follower controller instance.
enum FollowerCtl {
    Proposed { mpc: ClfMpc, resolver: Resolver },
    ClfCbfQp { mpc: ClfMpc },
    MpcCbf(MpcCbf),
    Apf(Apf),
}

/// What one follower's read phase produced.
struct TickOutput {
    input: ControlInput,
    j_clf: f64,
    trigger: bool,
    error: Option<String>,
}

fn tracking_mpc(horizon: usize, opts: &SimOptions) -> Result<ClfMpc, ClfMpcError> {
    let cfg = ClfMpcConfig { horizon, dt: opts.dt, limits: opts.limits, ..ClfMpcConfig::default() };
    ClfMpc::new(cfg)
}

/// Runs a rollout and returns only the log.
pub fn run(
    scenario: &Scenario,
    kind: ControllerKind,
    model: Option<&MlpParams>,
    opts: &SimOptions,
) -> Result<RolloutLog, SimError> {
    run_with_harvest(scenario, kind, model, opts).map(|(log, _)| log)
}

/// Runs a rollout and additionally collects training exposures: for every
/// follower tick under the proposed controller, one sample per static
/// obstacle in sensing range carrying the nominal planar velocity the
/// tracker asked for before filtering.
pub fn run_with_harvest(
    scenario: &Scenario,
    kind: ControllerKind,
    model: Option<&MlpParams>,
    opts: &SimOptions,
) -> Result<(RolloutLog, Vec<HarvestSample>), SimError> {
    scenario.validate()?;
    if kind == ControllerKind::Proposed && model.is_none() {
        return Err(SimError::MissingModel);
    }
    let start_clock = Instant::now();

    let n = scenario.n_followers();
    let spec = &scenario.formation;
    let dt = opts.dt;
    let max_steps = (scenario.duration / dt).round() as usize;
    let hold_steps = (HOLD_SECONDS / dt).round().max(1.0) as usize;

    let mut followers: Vec<RobotState> = scenario.follower_starts.clone();
    let mut leader: Option<RobotState> = match &scenario.mission {
        Mission::LeaderFormation(path) => {
            Some(RobotState::new(path.start[0], path.start[1], path.heading(), 0.0))
        }
        Mission::IndependentGoals { .. } => None,
    };
    let mut prev_inputs = vec![ControlInput::ZERO; n];
    let mut prev_leader_input = ControlInput::ZERO;

    let mut ctls: Vec<FollowerCtl> = Vec::with_capacity(n);
    for _ in 0..n {
        ctls.push(match kind {
            ControllerKind::Proposed => FollowerCtl::Proposed {
                mpc: tracking_mpc(10, opts)?,
                resolver: Resolver::new(opts.deadlock),
            },
            ControllerKind::ClfCbfQp => FollowerCtl::ClfCbfQp { mpc: tracking_mpc(1, opts)? },
            ControllerKind::MpcCbf => {
                // Plan on a coarser step than the control period: ten stages
                // of 3*dt give a 1.5 s lookahead at the default rate, enough
                // for a detour around an inflated obstacle to pay off inside
                // the horizon. Only the first input is applied, for one
                // control period, before replanning.
                let mut cfg = MpcCbfConfig::new(3.0 * dt);
                cfg.limits = opts.limits;
                cfg.barrier = opts.barrier;
                FollowerCtl::MpcCbf(MpcCbf::new(cfg)?)
            }
            ControllerKind::Apf => FollowerCtl::Apf(Apf::new(ApfConfig::default())),
        });
    }

    let mut log = RolloutLog {
        scenario_name: scenario.name.clone(),
        scenario_hash: scenario.content_hash(),
        controller: kind.name().to_string(),
        seed: scenario.seed,
        dt,
        r_rob: opts.barrier.r_rob,
        rows: Vec::new(),
        n_followers: n,
        has_leader: leader.is_some(),
        completed: false,
        deadlock_triggers: 0,
        errors: Vec::new(),
        wall_time: 0.0,
    };
    let mut harvest: Vec<HarvestSample> = Vec::new();
    let mut consec_done = 0usize;

    for step_idx in 0..=max_steps {
        let time = step_idx as f64 * dt;

        // Read phase: references for every follower from the shared snapshot.
        let mut refs: Vec<(RobotState, [f64; 4])> = Vec::with_capacity(n);
        for i in 0..n {
            match &scenario.mission {
                Mission::LeaderFormation(_) => {
                    let l = leader.as_ref().expect("leader missions carry a leader");
                    let xhat =
                        nominal_state(i, &followers, Some(l), spec, scenario.body_frame)?;
                    let xhat_dot = nominal_state_rate(
                        i,
                        &followers,
                        &prev_inputs,
                        Some((l, &prev_leader_input)),
                        spec,
                        scenario.body_frame,
                    )?;
                    refs.push((xhat, xhat_dot));
                }
                Mission::IndependentGoals { goals, speed } => {
                    let xhat =
                        goal_reference(&followers[i], goals[i], *speed, opts.slow_radius);
                    refs.push((xhat, [0.0; 4]));
                }
            }
        }

        // Diagnostics rows use the pre-step snapshot.
        let row_at = |log: &mut RolloutLog,
                          robot: usize,
                          role: Role,
                          state: &RobotState,
                          input: ControlInput,
                          e_norm: f64,
                          j_clf: f64,
                          deadlock: bool| {
            let h_min = min_barrier_value(robot, role, &followers, leader.as_ref(), scenario, opts);
            log.rows.push(LogRow {
                step: step_idx,
                time,
                robot,
                role,
                state: *state,
                input,
                h_min,
                e_norm,
                j_clf,
                deadlock,
            });
        };

        // Final row: state only, zero command.
        if step_idx == max_steps {
            for i in 0..n {
                let e = tracking_error(&followers[i], &refs[i].0).norm();
                row_at(&mut log, i, Role::Follower, &followers[i].clone(), ControlInput::ZERO, e, 0.0, false);
            }
            if let (Some(l), Mission::LeaderFormation(path)) = (&leader, &scenario.mission) {
                let lref = goal_reference(l, path.goal, path.speed, opts.slow_radius);
                let e = tracking_error(l, &lref).norm();
                row_at(&mut log, n, Role::Leader, &l.clone(), ControlInput::ZERO, e, 0.0, false);
            }
            break;
        }

        // Read phase: follower controllers.
        let mut outputs: Vec<TickOutput> = Vec::with_capacity(n);
        for i in 0..n {
            let entities = entities_for(i, Role::Follower, &followers, leader.as_ref(), scenario, opts);
            let (xhat, xhat_dot) = &refs[i];
            let out = follower_tick(
                &mut ctls[i],
                &followers[i],
                xhat,
                xhat_dot,
                &entities,
                model,
                opts,
                scenario,
                &mut harvest,
            );
            outputs.push(out);
        }

        // Read phase: leader pure pursuit through the analytic filter.
        let leader_cmd = if let (Some(l), Mission::LeaderFormation(path)) =
            (&leader, &scenario.mission)
        {
            let to_goal = math::sub2(path.goal, l.position());
            let dist = math::norm2(to_goal);
            let w = if dist > 1e-9 {
                math::scale2(path.speed * (dist / opts.slow_radius).min(1.0) / dist, to_goal)
            } else {
                [0.0, 0.0]
            };
            let u_nom = velocity_to_input(w, l, &opts.limits, dt);
            let entities = entities_for(n, Role::Leader, &followers, leader.as_ref(), scenario, opts);
            let constraints = build_constraints(
                l,
                &entities,
                &BarrierModel::Analytic,
                &opts.barrier,
                opts.sensing_radius,
            );
            Some(project(&u_nom, l, &constraints, &opts.limits, dt).u_checked)
        } else {
            None
        };

        // Log the pre-step snapshot with the commands chosen at it.
        for i in 0..n {
            let e = tracking_error(&followers[i], &refs[i].0).norm();
            let o = &outputs[i];
            if o.trigger {
                log.deadlock_triggers += 1;
            }
            if let Some(msg) = &o.error {
                log.errors.push(format!("{step_idx}/{i}: {msg}"));
            }
            row_at(&mut log, i, Role::Follower, &followers[i].clone(), o.input, e, o.j_clf, o.trigger);
        }
        if let (Some(l), Mission::LeaderFormation(path)) = (&leader, &scenario.mission) {
            let lref = goal_reference(l, path.goal, path.speed, opts.slow_radius);
            let e = tracking_error(l, &lref).norm();
            let cmd = leader_cmd.expect("leader command exists for leader missions");
            row_at(&mut log, n, Role::Leader, &l.clone(), cmd, e, 0.0, false);
        }

        // Write phase: everyone steps on the same snapshot.
        for i in 0..n {
            followers[i] = step(&followers[i], &outputs[i].input, dt, &opts.limits)?;
            prev_inputs[i] = outputs[i].input;
        }
        if let Some(l) = leader.as_mut() {
            let cmd = leader_cmd.expect("leader command exists for leader missions");
            *l = step(l, &cmd, dt, &opts.limits)?;
            prev_leader_input = cmd;
        }

        // Completion bookkeeping on the post-step state.
        let done_now = completion_condition(&followers, leader.as_ref(), scenario, opts)?;
        consec_done = if done_now { consec_done + 1 } else { 0 };
        if consec_done >= hold_steps {
            log.completed = true;
            // Close the log with the terminal snapshot.
            let final_step = step_idx + 1;
            let final_time = final_step as f64 * dt;
            for i in 0..n {
                let xhat = match &scenario.mission {
                    Mission::LeaderFormation(_) => nominal_state(
                        i,
                        &followers,
                        leader.as_ref(),
                        spec,
                        scenario.body_frame,
                    )?,
                    Mission::IndependentGoals { goals, speed } => {
                        goal_reference(&followers[i], goals[i], *speed, opts.slow_radius)
                    }
                };
                let e = tracking_error(&followers[i], &xhat).norm();
                let h_min =
                    min_barrier_value(i, Role::Follower, &followers, leader.as_ref(), scenario, opts);
                log.rows.push(LogRow {
                    step: final_step,
                    time: final_time,
                    robot: i,
                    role: Role::Follower,
                    state: followers[i],
                    input: ControlInput::ZERO,
                    h_min,
                    e_norm: e,
                    j_clf: 0.0,
                    deadlock: false,
                });
            }
            if let (Some(l), Mission::LeaderFormation(path)) = (&leader, &scenario.mission) {
                let lref = goal_reference(l, path.goal, path.speed, opts.slow_radius);
                let e = tracking_error(l, &lref).norm();
                let h_min =
                    min_barrier_value(n, Role::Leader, &followers, leader.as_ref(), scenario, opts);
                log.rows.push(LogRow {
                    step: final_step,
                    time: final_time,
                    robot: n,
                    role: Role::Leader,
                    state: *l,
                    input: ControlInput::ZERO,
                    h_min,
                    e_norm: e,
                    j_clf: 0.0,
                    deadlock: false,
                });
            }
            break;
        }
    }

    log.wall_time = start_clock.elapsed().as_secs_f64();
    Ok((log, harvest))
}

/// All collision entities robot `robot` can currently hit: every static
/// obstacle plus every *other* robot as a disc.
fn entities_for(
    robot: usize,
    role: Role,
    followers: &[RobotState],
    leader: Option<&RobotState>,
    scenario: &Scenario,
    opts: &SimOptions,
) -> Vec<Obstacle> {
    let mut entities = scenario.obstacles.clone();
    for (j, f) in followers.iter().enumerate() {
        if role == Role::Follower && j == robot {
            continue;
        }
        entities.push(barrier::robot_as_obstacle(f, &opts.barrier));
    }
    if role == Role::Follower {
        if let Some(l) = leader {
            entities.push(barrier::robot_as_obstacle(l, &opts.barrier));
        }
    }
    entities
}

/// Minimum analytic barrier value for one robot against every entity.
fn min_barrier_value(
    robot: usize,
    role: Role,
    followers: &[RobotState],
    leader: Option<&RobotState>,
    scenario: &Scenario,
    opts: &SimOptions,
) -> f64 {
    let p = match role {
        Role::Follower => followers[robot].position(),
        Role::Leader => leader.expect("leader row requires a leader").position(),
    };
    entities_for(robot, role, followers, leader, scenario, opts)
        .iter()
        .map(|obs| barrier::value(p, obs, &opts.barrier))
        .fold(f64::INFINITY, f64::min)
}

/// One follower's read phase: track, filter, and (for the proposed
/// controller) detect and break deadlocks.
#[allow(clippy::too_many_arguments)]
fn follower_tick(
    ctl: &mut FollowerCtl,
    x: &RobotState,
    xhat: &RobotState,
    xhat_dot: &[f64; 4],
    entities: &[Obstacle],
    model: Option<&MlpParams>,
    opts: &SimOptions,
    scenario: &Scenario,
    harvest: &mut Vec<HarvestSample>,
) -> TickOutput {
    let zero = |error: Option<String>| TickOutput {
        input: ControlInput::ZERO,
        j_clf: 0.0,
        trigger: false,
        error,
    };
    match ctl {
        FollowerCtl::Proposed { mpc, resolver } => {
            let params = model.expect("checked at rollout start");
            let sol = match mpc.solve(x, xhat, xhat_dot) {
                Ok(s) => s,
                Err(e) => return zero(Some(e.to_string())),
            };
            let constraints = build_constraints(
                x,
                entities,
                &BarrierModel::Learned(params),
                &opts.barrier,
                opts.sensing_radius,
            );
            let fr = project(&sol.first, x, &constraints, &opts.limits, opts.dt);

            // Training exposures: static obstacles in sensing range, paired
            // with the unfiltered velocity request.
            for obs in &scenario.obstacles {
                if obs.surface_distance(x.position(), opts.barrier.r_rob) <= opts.sensing_radius
                {
                    harvest.push(HarvestSample {
                        p: x.position(),
                        obs: *obs,
                        u_ref: fr.w_nominal,
                    });
                }
            }

            let mut input = fr.u_checked;
            let mut trigger = false;
            if opts.resolver_enabled {
                let conflict = filter_conflict_cost(sol.cost, sol.first, fr.u_checked);
                let report = resolver.evaluate(sol.cost, conflict, x.v);
                trigger = resolver.advance(report.deadlock);
                if report.deadlock {
                    // Re-solve against the rotated target within this tick.
                    let target = resolver.perturbed_target(x, xhat);
                    match mpc.solve(x, &target, xhat_dot) {
                        Ok(sol2) => {
                            let fr2 =
                                project(&sol2.first, x, &constraints, &opts.limits, opts.dt);
                            input = fr2.u_checked;
                        }
                        Err(e) => return zero(Some(e.to_string())),
                    }
                }
            }
            TickOutput { input, j_clf: sol.cost, trigger, error: None }
        }
        FollowerCtl::ClfCbfQp { mpc } => {
            let sol = match mpc.solve(x, xhat, xhat_dot) {
                Ok(s) => s,
                Err(e) => return zero(Some(e.to_string())),
            };
            let constraints = build_constraints(
                x,
                entities,
                &BarrierModel::Analytic,
                &opts.barrier,
                opts.sensing_radius,
            );
            let fr = project(&sol.first, x, &constraints, &opts.limits, opts.dt);
            TickOutput { input: fr.u_checked, j_clf: sol.cost, trigger: false, error: None }
        }
        FollowerCtl::MpcCbf(mpc) => {
            let sensed: Vec<Obstacle> = entities
                .iter()
                .filter(|o| o.surface_distance(x.position(), opts.barrier.r_rob) <= opts.sensing_radius)
                .copied()
                .collect();
            match mpc.solve(x, xhat, xhat_dot, &sensed) {
                Ok(sol) => {
                    TickOutput { input: sol.first, j_clf: sol.cost, trigger: false, error: None }
                }
                Err(e) => zero(Some(e.to_string())),
            }
        }
        FollowerCtl::Apf(apf) => {
            let sensed: Vec<Obstacle> = entities
                .iter()
                .filter(|o| o.surface_distance(x.position(), opts.barrier.r_rob) <= opts.sensing_radius)
                .copied()
                .collect();
            let input =
                apf.control(x, [xhat.px, xhat.py], &sensed, &opts.limits, opts.dt);
            TickOutput { input, j_clf: 0.0, trigger: false, error: None }
        }
    }
}

/// True when every robot currently satisfies its goal condition.
fn completion_condition(
    followers: &[RobotState],
    leader: Option<&RobotState>,
    scenario: &Scenario,
    _opts: &SimOptions,
) -> Result<bool, SimError> {
    match &scenario.mission {
        Mission::LeaderFormation(path) => {
            let l = leader.expect("leader missions carry a leader");
            if math::norm2(math::sub2(path.goal, l.position())) > GOAL_TOL {
                return Ok(false);
            }
            for i in 0..scenario.n_followers() {
                let xhat = nominal_state(
                    i,
                    followers,
                    Some(l),
                    &scenario.formation,
                    scenario.body_frame,
                )?;
                if tracking_error(&followers[i], &xhat).position_norm() >= GOAL_TOL {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Mission::IndependentGoals { goals, .. } => Ok(followers
            .iter()
            .zip(goals)
            .all(|(f, g)| math::norm2(math::sub2(*g, f.position())) < GOAL_TOL)),
    }
}

/// Aggregates a rollout log into summary metrics using the scenario's
/// geometry (formation, goals, and the violation margin `safety_s`).
pub fn compute_metrics(log: &RolloutLog, scenario: &Scenario) -> Result<Metrics, SimError> {
    if log.rows.is_empty() {
        return Err(SimError::MalformedLog("log has no rows"));
    }
    let n_robots = log.n_robots();
    if log.rows.len() % n_robots != 0 {
        return Err(SimError::MalformedLog("row count is not a multiple of the team size"));
    }
    let n = log.n_followers;
    let steps = log.rows.len() / n_robots;

    let mut safe_steps = 0usize;
    let mut min_dist_acc = 0.0;
    let mut err_acc = 0.0;
    let mut err_count = 0usize;

    for s in 0..steps {
        let chunk = &log.rows[s * n_robots..(s + 1) * n_robots];
        let followers: Vec<RobotState> = chunk[..n].iter().map(|r| r.state).collect();
        let leader = if log.has_leader { Some(chunk[n].state) } else { None };

        let min_surface = step_min_surface(&followers, leader.as_ref(), scenario, log.r_rob);
        if min_surface >= scenario.safety_s {
            safe_steps += 1;
        }
        min_dist_acc += min_surface;

        for (i, f) in followers.iter().enumerate() {
            let target_pos = match &scenario.mission {
                Mission::LeaderFormation(_) => {
                    let l = leader.as_ref().ok_or(SimError::MalformedLog(
                        "leader mission log is missing leader rows",
                    ))?;
                    let xhat =
                        nominal_state(i, &followers, Some(l), &scenario.formation, scenario.body_frame)?;
                    xhat.position()
                }
                Mission::IndependentGoals { goals, .. } => goals[i],
            };
            err_acc += math::norm2(math::sub2(f.position(), target_pos));
            err_count += 1;
        }
    }

    Ok(Metrics {
        safety_rate: safe_steps as f64 / steps as f64,
        avg_formation_error: if err_count == 0 { 0.0 } else { err_acc / err_count as f64 },
        avg_min_distance: min_dist_acc / steps as f64,
        completion: log.completed,
        wall_time: log.wall_time,
    })
}

/// Minimum surface distance at one step over robot-obstacle and
/// robot-robot pairs.
fn step_min_surface(
    followers: &[RobotState],
    leader: Option<&RobotState>,
    scenario: &Scenario,
    r_rob: f64,
) -> f64 {
    let mut positions: Vec<[f64; 2]> = followers.iter().map(|f| f.position()).collect();
    if let Some(l) = leader {
        positions.push(l.position());
    }
    let mut min_surface = f64::INFINITY;
    for p in &positions {
        for obs in &scenario.obstacles {
            min_surface = min_surface.min(obs.surface_distance(*p, r_rob));
        }
    }
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            min_surface = min_surface.min(math::norm2(math::sub2(*a, *b)) - 2.0 * r_rob);
        }
    }
    min_surface
}
