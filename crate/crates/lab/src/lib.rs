//! Input, output and orchestration around `axisym-core`: JSON run
//! configurations, diagnostics CSV, AXF1 checkpoints, viscosity sweeps,
//! inequality reports and the `axisym-lab` command line.
//!
//! Every output is a deterministic function of the configuration and seed.
//! Parallel work (sweep members, suite members) is collected in input order
//! before any reduction.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod ineq;
pub mod output;
pub mod run;
pub mod sweep;

pub use error::{LabError, Result};
