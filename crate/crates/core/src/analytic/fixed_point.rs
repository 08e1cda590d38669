use super::{
    harvest_pmf, transition_matrix, AnalyticError, AvailabilityMap, BatteryDistribution, ConsumptionPmf, Thinning,
    UnitIntensities,
};
use crate::config::NetworkConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// stop once the mean squared change of `v` falls below this
    pub tolerance: f64,
    pub max_iterations: usize,
    /// weight of the previous iterate, in `[0, 1)`
    pub damping: f64,
    /// keep `m = 0` in the consumption normalization
    pub include_zero: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 500, damping: 0.0, include_zero: true }
    }
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    /// battery-level distribution at slot start
    pub battery: BatteryDistribution,
    /// level broadcast after the beacon cost
    pub broadcast: BatteryDistribution,
    pub iterations: usize,
    pub residual: f64,
    pub map: AvailabilityMap,
    /// consumption rows under `broadcast`
    pub consumption: ConsumptionPmf,
}

impl StationarySolution {
    pub fn thinning(&self, cfg: &NetworkConfig) -> Thinning<'_> {
        Thinning::new(&self.map, UnitIntensities::new(cfg), &self.broadcast)
    }
}

pub fn solve_stationary(cfg: &NetworkConfig) -> Result<StationarySolution, AnalyticError> {
    solve_stationary_with(cfg, SolverOptions::default())
}

/// Iterates `v ← v P(v)` from the uniform distribution until the mean
/// squared change drops below the tolerance.
pub fn solve_stationary_with(cfg: &NetworkConfig, opts: SolverOptions) -> Result<StationarySolution, AnalyticError> {
    let levels = cfg.levels();
    let cost = cfg.battery.broadcast_cost_units as usize;
    let map = AvailabilityMap::build(cfg)?;
    let intensities = UnitIntensities::new(cfg);
    let harvest = harvest_pmf(cfg);

    let mut v = BatteryDistribution::uniform(levels);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let w = v.after_broadcast(cost);
        let thinning = Thinning::new(&map, intensities, &w);
        let consumption = ConsumptionPmf::build(&thinning, opts.include_zero);
        let next = transition_matrix(&consumption, &harvest, cfg).apply(v.probabilities());

        let prev = v.probabilities();
        residual = prev.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / prev.len() as f64;
        let mixed: Vec<f64> = if opts.damping > 0.0 {
            prev.iter().zip(&next).map(|(a, b)| opts.damping * a + (1.0 - opts.damping) * b).collect()
        } else {
            next
        };
        v = BatteryDistribution::normalized(mixed);

        if residual < opts.tolerance {
            let broadcast = v.after_broadcast(cost);
            let consumption = ConsumptionPmf::build(&Thinning::new(&map, intensities, &broadcast), opts.include_zero);
            return Ok(StationarySolution { battery: v, broadcast, iterations: it, residual, map, consumption });
        }
    }
    Err(AnalyticError::NonConvergence { iterations: opts.max_iterations, residual })
}
