//! Distributed multi-robot formation control with learned safety certificates.
//!
//! The crate implements a full control stack for teams of unicycle-like
//! ground robots that must hold a formation around a moving leader (or reach
//! individual goals) while avoiding static obstacles and each other:
//!
//! * [`dynamics`] — control-affine unicycle model with speed state and
//!   forward-Euler integration.
//! * [`formation`] — weighted consensus of neighbour and leader information
//!   into a per-robot nominal state, tracking error, and Lyapunov function.
//! * [`clf_mpc`] — finite-horizon tracking controller that enforces a
//!   Lyapunov decrease condition along the predicted trajectory.
//! * [`barrier`] — analytic distance barrier for circular obstacles and the
//!   induced linear velocity constraints.
//! * [`nn_cbf`] — a small MLP barrier trained from the analytic teacher and
//!   from closed-loop rollouts, with exact gradients throughout.
//! * [`safety_filter`] — minimally invasive projection of a nominal command
//!   onto the barrier constraints, solved exactly in velocity space.
//! * [`deadlock`] — event-triggered detector and nominal-state perturbation
//!   that breaks symmetric stalemates.
//! * [`baselines`] — artificial potential field, obstacle-constrained MPC,
//!   and one-step CLF-QP controllers used for comparison.
//! * [`scenario`] / [`sim`] — reproducible scenario library, the synchronous
//!   simulation loop, rollout logging, and metrics.

pub mod barrier;
pub mod baselines;
pub mod clf_mpc;
pub mod deadlock;
pub mod dynamics;
pub mod formation;
pub mod math;
pub mod nn_cbf;
pub mod safety_filter;
pub mod scenario;
pub mod sim;
pub mod solver;
