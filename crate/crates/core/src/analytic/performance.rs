use std::f64::consts::PI;

use super::quadrature::integrate;
use super::{AvailabilityMap, BatteryDistribution, ConsumptionPmf, Thinning, UnitIntensities};
use crate::config::NetworkConfig;
use crate::geometry::{intensity_bs, IntensityConstants};

/// Probability that no BS is available to a typical user:
/// `exp(-Λ_B^(A)(p_cov[L]))`, with `v` the slot-start battery distribution.
pub fn outage_probability(v: &BatteryDistribution, map: &AvailabilityMap, cfg: &NetworkConfig) -> f64 {
    let w = v.after_broadcast(cfg.battery.broadcast_cost_units as usize);
    let t = Thinning::new(map, UnitIntensities::new(cfg), &w);
    let top = map.p_cov(map.levels());
    (-t.available_bs_intensity(top).expect("p_cov[L] is in range")).exp()
}

/// Outage of the grid-powered reference: no BS within the fixed power budget.
pub fn ongrid_outage_probability(cfg: &NetworkConfig) -> f64 {
    (-intensity_bs(cfg.deployment.ongrid_pmax_watts, cfg)).exp()
}

/// `∫_{u0}^∞ u^{δ-1}/(1+u) du` with `δ = 2/α`.
///
/// Both branches map the integrand to a bounded one on a finite interval.
pub fn tail_integral(u0: f64, alpha: f64) -> f64 {
    let d = 2.0 / alpha;
    let full = PI / (PI * d).sin();
    if u0 <= 0.0 {
        return full;
    }
    if u0 <= 1.0 {
        // s = u^δ
        let head = integrate(|s| 1.0 / (d * (1.0 + s.powf(1.0 / d))), 0.0, u0.powf(d), 1e-13);
        full - head
    } else {
        // y = u^{-(1-δ)}
        let e = 1.0 - d;
        integrate(|y| 1.0 / (e * (1.0 + y.powf(1.0 / e))), 0.0, u0.powf(-e), 1e-13)
    }
}

/// Closed form of [`tail_integral`] for α = 4.
pub fn tail_integral_alpha4(u0: f64) -> f64 {
    PI - 2.0 * u0.max(0.0).sqrt().atan()
}

/// Probability that a served user's SIR exceeds `threshold` (linear).
///
/// `v` is the slot-start battery distribution and `consumption` the rows
/// P_T(m | l) under the matching broadcast levels.
pub fn coverage_probability(
    threshold: f64,
    v: &BatteryDistribution,
    consumption: &ConsumptionPmf,
    map: &AvailabilityMap,
    cfg: &NetworkConfig,
) -> f64 {
    assert!(threshold > 0.0, "threshold must be positive");
    let w = v.after_broadcast(cfg.battery.broadcast_cost_units as usize);
    let w = w.probabilities();
    let alpha = cfg.channel.alpha;
    let d = 2.0 / alpha;
    let consts = IntensityConstants::new(cfg);
    let n_rb = cfg.deployment.n_rb as f64;
    let scale = cfg.deployment.lambda_bs * d * (threshold / cfg.deployment.p_rx_watts).powf(d);
    let closed = (alpha - 4.0).abs() < 1e-12;

    let mut exponent = 0.0;
    for (l, &wl) in w.iter().enumerate().skip(1) {
        if wl == 0.0 {
            continue;
        }
        let row = consumption.row(l);
        for (m, &pt) in row.iter().enumerate().skip(1) {
            let rho = wl * pt;
            if rho < 1e-14 {
                continue;
            }
            let u0 = (1.0 / threshold).min(map.p_cov(l) * n_rb / (m as f64 * threshold));
            let tail = if closed { tail_integral_alpha4(u0) } else { tail_integral(u0, alpha) };
            exponent += rho * consts.upsilon_m[m - 1] * tail;
        }
    }
    (-scale * exponent).exp()
}
