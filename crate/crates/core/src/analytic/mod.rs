//! Closed-form analysis of the power-availability-aware association.
//!
//! All functions here measure power in battery units (multiples of
//! `cfg.unit_watts()`); [`UnitIntensities`] carries the displaced-process
//! constants already rescaled to that unit.

mod availability;
mod battery;
mod compound;
mod fixed_point;
mod performance;
pub mod quadrature;

pub use availability::{estimate_other_load, AvailabilityMap, Thinning};
pub use battery::{
    consumption_pmf, harvest_pmf, transition_matrix, BatteryDistribution, ConsumptionPmf, HarvestPmf, TransitionMatrix,
};
pub use compound::{compound_sum_pmf, compound_sum_pmf_with};
pub use fixed_point::{solve_stationary, solve_stationary_with, SolverOptions, StationarySolution};
pub use performance::{
    coverage_probability, ongrid_outage_probability, outage_probability, tail_integral, tail_integral_alpha4,
};

use crate::config::NetworkConfig;
use crate::geometry::upsilon;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error("could not bracket the availability root for level {level}")]
    SolverFailure { level: usize },
    #[error("power {p} units outside the admissible range [0, {max}]")]
    DomainError { p: f64, max: f64 },
    #[error("fixed point did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

/// `Λ(p) = coeff · p^exponent` for the BS and user power processes, `p` in units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitIntensities {
    /// 2/α
    pub exponent: f64,
    /// λ_B Υ ε^(2/α)
    pub bs: f64,
    /// λ_MT f Υ ε^(2/α)
    pub mt: f64,
}

impl UnitIntensities {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let exponent = 2.0 / cfg.channel.alpha;
        let upsilon = upsilon(cfg) * cfg.unit_watts().powf(exponent);
        Self { exponent, bs: cfg.deployment.lambda_bs * upsilon, mt: cfg.mt_density() * upsilon }
    }

    #[inline]
    pub fn bs_at(&self, p: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else {
            self.bs * p.powf(self.exponent)
        }
    }

    #[inline]
    pub fn mt_at(&self, p: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else {
            self.mt * p.powf(self.exponent)
        }
    }

    /// Coefficient of `p^(2/α+1)` in the other-user load estimate.
    pub fn load_coeff(&self) -> f64 {
        self.mt * self.exponent / (self.exponent + 1.0)
    }
}
