//! Deterministic 3D drone-swarm flocking simulator.
//!
//! Agents react to their most influential neighbors through speed, vertical
//! and heading increments ([`model`]), fly a first-order position plant
//! ([`flight`]) and are driven through gain schedules and intruder encounters
//! ([`scenario`]). [`metrics`] and [`sweep`] turn runs into phase-diagram
//! tables; [`trajio`] reads and writes logs and rebuilds velocities from
//! sparse position samples.

pub mod analysis;
pub mod config;
pub mod error;
pub mod flight;
pub mod metrics;
pub mod model;
pub mod scenario;
pub mod sweep;
pub mod trajio;

pub use error::{ParamError, SimError};
