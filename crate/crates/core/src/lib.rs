//! Energy-harvesting small-cell networks with power-availability-aware
//! cell association.
//!
//! [`analytic`] computes the stationary battery distribution and the
//! resulting outage and coverage in closed form; [`simulator`] estimates
//! the same quantities by Monte-Carlo simulation of the slotted protocol.

pub mod analytic;
pub mod config;
pub mod geometry;
pub mod simulator;

pub use config::{validate, ConfigError, NetworkConfig, SchemePolicy};
