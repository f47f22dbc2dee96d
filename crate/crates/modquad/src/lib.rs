//! Config files, telemetry persistence, metrics and the `modquad` command line.

pub mod commands;
pub mod config;
pub mod metrics;
pub mod report;
pub mod telemetry;
