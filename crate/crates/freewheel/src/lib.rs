//! Look-ahead freewheeling control of a heavy-duty vehicle.
//!
//! This crate simulates the fuel-saving potential of opening the powertrain
//! (freewheeling with the engine idling or switched off) on driving cycles
//! with varying speed requirements and significant road grade. It contains:
//!
//! - a longitudinal vehicle model in the kinetic-energy/space domain
//!   ([`vehicle`]),
//! - driving-cycle handling and a seeded synthetic cycle generator
//!   ([`cycle`]),
//! - velocity-corridor construction from fleet deceleration statistics
//!   ([`corridor`]),
//! - the spatially discretized optimal-control problem as a convex MIQP
//!   ([`taylor`], [`ocp`]),
//! - a bundled interior-point QP core with branch-and-bound ([`solver`]),
//! - the receding-horizon closed loop and trip-time tuning ([`mpc`]),
//! - energy-loss accounting and policy comparison ([`accounting`]),
//! - a command-line front end ([`config`], [`cli`]).
//!
//! The mdbook under `book/` walks through the concepts; its code snippets
//! are compiled as doctests via the [`book`] module.

pub mod accounting;
pub mod cli;
pub mod config;
pub mod corridor;
pub mod cycle;
pub mod mpc;
pub mod ocp;
pub mod solver;
pub mod taylor;
pub mod vehicle;

#[cfg(doctest)]
pub mod book;

pub use accounting::{compare_policies, decompose, LossBreakdown, PolicyComparison};
pub use corridor::{build_corridor, repair_feasibility, CorridorSettings, VelocityCorridor};
pub use cycle::{generate_synthetic_cycle, load_cycle, DrivingCycle, GeneratorSpec};
pub use mpc::{run_mpc, tune_beta_t, MpcConfig, SimulationRecord};
pub use ocp::{build_instance, DragLinearization, OcpInstance, Policy, PolicyConfig};
pub use solver::{solve_miqp, solve_qp, BnbLimits, BnbReport, QpOptions, QpProblem, QpSolution};
pub use vehicle::{ControlInput, EngineParams, KineticState, VehicleParams};
