//! Core models for heterogeneous modular multi-rotor structures.
//!
//! A structure is a rigid assembly of quadrotor modules whose propellers may be
//! tilted. This crate covers the whole pipeline on top of that model:
//!
//! - [`geometry`]: rotation-group helpers (`hat`, `vee`, Rodrigues, exponential map).
//! - [`vehicle`]: R- and T-module construction, torque balance, structure
//!   assembly and the 6×4n design matrix.
//! - [`actuation`]: rank / controllable-DOF analysis, the F-frame from the force
//!   ellipsoid, the dimensioning matrix and pseudo-inverse thrust allocation.
//! - [`control`]: the generalized 4/5/6-DOF geometric controller.
//! - [`simulation`]: rigid-body dynamics, motor model, RK4 integration and the
//!   closed-loop scenario runner.
//! - [`trajectories`]: helix, rectangle, attitude sine and chained quintic references.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the command
//! line live in the companion `modquad` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod actuation;
pub mod control;
pub mod geometry;
pub mod lsq;
pub mod simulation;
pub mod trajectories;
pub mod vehicle;

/// Standard gravitational acceleration used throughout (m/s²).
pub const GRAVITY: f64 = 9.81;

pub use actuation::{ActuationAnalysis, Allocator};
pub use control::{ControllerGains, Setpoint, Wrench};
pub use geometry::{RotationMatrix, Vector3};
pub use simulation::{MotorModel, Telemetry, VehicleState};
pub use vehicle::{ModuleSpec, StructureModel};
