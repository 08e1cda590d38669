//! Battery Markov chain: harvest and consumption distributions and the
//! transition matrix they induce.

use rayon::prelude::*;

use super::{compound_sum_pmf, Thinning};
use crate::config::NetworkConfig;

/// Probability vector over battery levels `0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryDistribution(Vec<f64>);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("not a probability vector: {0}")]
pub struct NotAProbability(String);

impl BatteryDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, NotAProbability> {
        if probs.is_empty() {
            return Err(NotAProbability("empty".into()));
        }
        if let Some(i) = probs.iter().position(|&p| !p.is_finite() || p < 0.0) {
            return Err(NotAProbability(format!("entry {i} is {}", probs[i])));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(NotAProbability(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Rescales nonnegative weights to sum to one.
    pub(crate) fn normalized(mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        assert!(sum > 0.0, "cannot normalize zero weights");
        weights.iter_mut().for_each(|w| *w /= sum);
        Self(weights)
    }

    pub fn uniform(levels: usize) -> Self {
        Self(vec![1.0 / (levels + 1) as f64; levels + 1])
    }

    pub fn point_mass(level: usize, levels: usize) -> Self {
        let mut v = vec![0.0; levels + 1];
        v[level] = 1.0;
        Self(v)
    }

    pub fn levels(&self) -> usize {
        self.0.len() - 1
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Distribution of the level left for data after paying `cost` units
    /// for the broadcast, floored at 0.
    pub fn after_broadcast(&self, cost: usize) -> Self {
        if cost == 0 {
            return self.clone();
        }
        let mut out = vec![0.0; self.0.len()];
        for (b, &p) in self.0.iter().enumerate() {
            out[b.saturating_sub(cost)] += p;
        }
        Self(out)
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Harvested units per slot: `Poisson(λ_e f)` bursts of `N_e` units.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestPmf {
    burst: usize,
    /// probability of `k` bursts, truncated with the tail folded into the last entry
    bursts: Vec<f64>,
}

impl HarvestPmf {
    pub fn burst_size(&self) -> usize {
        self.burst
    }

    pub fn burst_probabilities(&self) -> &[f64] {
        &self.bursts
    }

    /// Probability of harvesting exactly `units`.
    pub fn prob_units(&self, units: usize) -> f64 {
        if !units.is_multiple_of(self.burst) {
            return 0.0;
        }
        self.bursts.get(units / self.burst).copied().unwrap_or(0.0)
    }

    /// `(units, probability)` pairs with nonzero probability.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.bursts.iter().enumerate().filter(|(_, &p)| p > 0.0).map(move |(k, &p)| (k * self.burst, p))
    }
}

/// Poisson burst-count pmf, truncated once the remaining tail is below 1e-15
/// and renormalized through the last bin.
pub fn harvest_pmf(cfg: &NetworkConfig) -> HarvestPmf {
    let burst = cfg.harvest.burst_size as usize;
    let rate = cfg.harvest_rate();
    if rate <= 0.0 {
        return HarvestPmf { burst, bursts: vec![1.0] };
    }
    let mut bursts = Vec::new();
    let mut log_p = -rate;
    let mut k = 0usize;
    loop {
        let p = log_p.exp();
        bursts.push(p);
        // beyond the mode the tail after k is at most p·r/(1-r), r = rate/(k+2)
        if (k as f64) > rate {
            let ratio = rate / (k as f64 + 2.0);
            let tail = p * (rate / (k as f64 + 1.0)) / (1.0 - ratio);
            if tail < 1e-15 {
                break;
            }
        }
        k += 1;
        log_p += rate.ln() - (k as f64).ln();
    }
    let sum: f64 = bursts.iter().sum();
    *bursts.last_mut().unwrap() += 1.0 - sum;
    HarvestPmf { burst, bursts }
}

/// P_T(m | l) for every level `l = 0..=L`; row `l` has length `l + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionPmf {
    rows: Vec<Vec<f64>>,
}

impl ConsumptionPmf {
    /// Builds every row from the served-user intensity of `thinning`.
    pub fn build(thinning: &Thinning<'_>, include_zero: bool) -> Self {
        let levels = thinning.map().levels();
        let rows = (0..=levels).into_par_iter().map(|l| consumption_pmf(l, thinning, include_zero)).collect();
        Self { rows }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn row(&self, level: usize) -> &[f64] {
        &self.rows[level]
    }

    pub fn levels(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn prob(&self, m: usize, level: usize) -> f64 {
        self.rows[level].get(m).copied().unwrap_or(0.0)
    }
}

/// Distribution of the units consumed in one slot by a BS broadcasting `level`.
///
/// Users served at `level` form a Poisson process on `[0, p_cov[level]]`; the
/// total of their ceiled powers is restricted to `0..=level` and renormalized.
/// With `include_zero` the idle outcome `m = 0` stays in the normalization,
/// otherwise the row is conditioned on `m >= 1`.
pub fn consumption_pmf(level: usize, thinning: &Thinning<'_>, include_zero: bool) -> Vec<f64> {
    let mut row = vec![0.0; level + 1];
    if level == 0 {
        row[0] = 1.0;
        return row;
    }
    let cumulative = thinning.served_cumulative(level);
    let mut sums = compound_sum_pmf(level, &cumulative);
    if !include_zero {
        sums[0] = 0.0;
    }
    let total: f64 = sums.iter().sum();
    if total <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    for (r, s) in row.iter_mut().zip(&sums) {
        *r = s / total;
    }
    row
}

/// Row-stochastic `(L+1)×(L+1)` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.n..(from + 1) * self.n]
    }

    /// `v P`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (from, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(from)) {
                *o += w * p;
            }
        }
        out
    }
}

/// Battery transitions: from battery `b` the broadcast costs `min(b, P_BC)`,
/// the remaining level `u` draws `m ~ P_T(·|u)`, harvest `h` arrives and the
/// result saturates at `L`.
///
/// With `P_BC = 0` this is `P_{l→q} = Σ_m P_T(m|l) P_H(q - l + m)` with all
/// overflow collected in column `L`.
pub fn transition_matrix(consumption: &ConsumptionPmf, harvest: &HarvestPmf, cfg: &NetworkConfig) -> TransitionMatrix {
    let levels = cfg.levels();
    let n = levels + 1;
    let cost = cfg.battery.broadcast_cost_units as usize;
    let support: Vec<(usize, f64)> = harvest.support().collect();
    // suffix[i] = Σ_{j >= i} support[j].1
    let mut suffix = vec![0.0; support.len() + 1];
    for i in (0..support.len()).rev() {
        suffix[i] = suffix[i + 1] + support[i].1;
    }

    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(b, row)| {
        let usable = b.saturating_sub(cost);
        for (m, &pt) in consumption.row(usable).iter().enumerate() {
            if pt == 0.0 {
                continue;
            }
            let left = usable - m;
            let mut i = 0;
            while i < support.len() && left + support[i].0 < levels {
                row[left + support[i].0] += pt * support[i].1;
                i += 1;
            }
            row[levels] += pt * suffix[i];
        }
    });
    TransitionMatrix { n, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{AvailabilityMap, UnitIntensities};
    use crate::config::{validate, NetworkConfig};
    use proptest::prelude::*;

    fn desk() -> NetworkConfig {
        NetworkConfig::desk_defaults()
    }

    #[test]
    fn harvest_without_arrivals() {
        let mut cfg = desk();
        cfg.harvest.rate = 0.0;
        let h = harvest_pmf(&cfg);
        assert_eq!(h.prob_units(0), 1.0);
        assert_eq!(h.support().count(), 1);
    }

    #[test]
    fn harvest_poisson_100() {
        let mut cfg = NetworkConfig::paper_defaults();
        cfg.harvest.rate = 100.0;
        let h = harvest_pmf(&cfg);
        // 100^100 e^-100 / 100!
        let exact = 0.039_860_996_809_147_13;
        assert!((h.prob_units(100) / exact - 1.0).abs() < 1e-13);
        let total: f64 = h.burst_probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn harvest_burst_quantization() {
        let mut cfg = NetworkConfig::paper_defaults();
        cfg.harvest.burst_size = 80;
        cfg.harvest.rate = 1.25;
        let h = harvest_pmf(&cfg);
        assert!(h.support().all(|(u, _)| u % 80 == 0));
        assert_eq!(h.prob_units(81), 0.0);
        assert!((h.prob_units(80) - 1.25 * (-1.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn slot_scale_multiplies_harvest_rate() {
        let mut cfg = desk();
        cfg.battery.slot_scale = 0.5;
        let h = harvest_pmf(&cfg);
        assert!((h.prob_units(0) - (-10f64).exp()).abs() < 1e-15);
    }

    fn thinning_fixture(cfg: &NetworkConfig) -> (AvailabilityMap, BatteryDistribution) {
        (AvailabilityMap::build(cfg).unwrap(), BatteryDistribution::uniform(cfg.levels()))
    }

    #[test]
    fn empty_battery_consumes_nothing() {
        let cfg = desk();
        let (map, v) = thinning_fixture(&cfg);
        let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
        assert_eq!(consumption_pmf(0, &t, true), vec![1.0]);
        assert_eq!(consumption_pmf(0, &t, false), vec![1.0]);
    }

    #[test]
    fn no_users_consume_nothing() {
        let mut cfg = desk();
        cfg.deployment.lambda_mt = 0.0;
        let (map, v) = thinning_fixture(&cfg);
        let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
        for l in [1, 50, 200] {
            let row = consumption_pmf(l, &t, true);
            assert_eq!(row[0], 1.0);
        }
    }

    #[test]
    fn literal_normalization_excludes_idle_slot() {
        let cfg = desk();
        let (map, v) = thinning_fixture(&cfg);
        let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
        let with = consumption_pmf(50, &t, true);
        let without = consumption_pmf(50, &t, false);
        assert_eq!(without[0], 0.0);
        // same shape on m >= 1
        let scale = with[1] / without[1];
        for m in 1..=50 {
            assert!((with[m] - scale * without[m]).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_battery_is_identity() {
        let mut cfg = desk();
        cfg.harvest.rate = 0.0;
        cfg.deployment.lambda_mt = 0.0;
        let (map, v) = thinning_fixture(&cfg);
        let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
        let p = transition_matrix(&ConsumptionPmf::build(&t, true), &harvest_pmf(&cfg), &cfg);
        for i in 0..p.size() {
            for j in 0..p.size() {
                assert_eq!(p.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn heavy_harvest_saturates() {
        let mut cfg = desk();
        cfg.harvest.rate = 5000.0;
        let (map, v) = thinning_fixture(&cfg);
        let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
        let p = transition_matrix(&ConsumptionPmf::build(&t, true), &harvest_pmf(&cfg), &cfg);
        for l in 0..p.size() {
            assert!(p.get(l, cfg.levels()) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn transition_entries_follow_convolution() {
        let cfg = desk();
        let (map, v) = thinning_fixture(&cfg);
        let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
        let cons = ConsumptionPmf::build(&t, true);
        let h = harvest_pmf(&cfg);
        let p = transition_matrix(&cons, &h, &cfg);
        let (l, q) = (40, 45);
        let direct: f64 = (0..=l).map(|m| cons.prob(m, l) * h.prob_units(q + m - l)).sum();
        assert!((p.get(l, q) - direct).abs() < 1e-15);
    }

    #[test]
    fn broadcast_cost_shifts_rows() {
        let mut cfg = desk();
        cfg.battery.broadcast_cost_units = 5;
        let cfg = validate(&cfg).unwrap();
        let (map, v) = thinning_fixture(&cfg);
        let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
        let cons = ConsumptionPmf::build(&t, true);
        let h = harvest_pmf(&cfg);
        let p = transition_matrix(&cons, &h, &cfg);
        // battery 3 pays 3, keeps 0, consumes nothing
        for q in 0..cfg.levels() {
            assert!((p.get(3, q) - h.prob_units(q)).abs() < 1e-15);
        }
        // battery 30 behaves like level 25 without the cost
        let direct: f64 = (0..=25).map(|m| cons.prob(m, 25) * h.prob_units(40 + m - 25)).sum();
        assert!((p.get(30, 40) - direct).abs() < 1e-15);
    }

    #[test]
    fn after_broadcast_floors_at_zero() {
        let v = BatteryDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let w = v.after_broadcast(2);
        for (a, b) in w.probabilities().iter().zip([0.6, 0.4, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn rows_are_stochastic(
            levels in 20u32..120,
            rate in 0.0f64..40.0,
            burst in 1u32..30,
            mt_scale in 0.0f64..3.0,
            cost in 0u32..10,
        ) {
            let mut cfg = desk();
            cfg.battery.levels = levels;
            cfg.battery.broadcast_cost_units = cost;
            cfg.harvest.rate = rate;
            cfg.harvest.burst_size = burst;
            cfg.deployment.lambda_mt *= mt_scale;
            let cfg = validate(&cfg).unwrap();
            let (map, v) = thinning_fixture(&cfg);
            let t = Thinning::new(&map, UnitIntensities::new(&cfg), &v);
            let cons = ConsumptionPmf::build(&t, true);
            for l in 0..=cfg.levels() {
                let s: f64 = cons.row(l).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
            let h = harvest_pmf(&cfg);
            let hs: f64 = h.burst_probabilities().iter().sum();
            prop_assert!((hs - 1.0).abs() < 1e-10);
            let p = transition_matrix(&cons, &h, &cfg);
            for l in 0..p.size() {
                let s: f64 = p.row(l).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10, "row {} sums to {}", l, s);
                prop_assert!(p.row(l).iter().all(|&x| x >= 0.0));
            }
        }
    }
}
