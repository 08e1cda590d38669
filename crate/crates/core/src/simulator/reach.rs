//! Sampling of the shadowed BS–user pairs that can meet a power cap.
//!
//! Every pair carries a uniform shadowing variate `u`; required power falls
//! as `u` grows. A [`CullTable`] gives, per distance, the smallest `u` that
//! could still meet the cap, so a pair "passes" with probability
//! `1 − u_min(d)`. [`ReachIndex`] draws the passing pairs of a user without
//! visiting every BS, and [`complete_row`] fills in the remaining variates
//! from their conditional law when a full row is needed.

use rand::RngCore;
use statrs::function::erf::{erfc, erfc_inv};

use crate::config::NetworkConfig;
use crate::geometry::{Point, Window};

/// Uniform on the open interval (0, 1).
#[inline]
pub(super) fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Required power from squared distance and a shadowing variate.
#[derive(Debug, Clone, Copy)]
pub(super) struct PowerModel {
    /// P_Rx κ / ε
    scale: f64,
    half_alpha: f64,
    alpha4: bool,
    pub mu: f64,
    pub sigma: f64,
}

impl PowerModel {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let ch = &cfg.channel;
        Self {
            scale: cfg.deployment.p_rx_watts * ch.kappa / cfg.unit_watts(),
            half_alpha: ch.alpha / 2.0,
            alpha4: ch.alpha == 4.0,
            mu: ch.mu_db,
            sigma: ch.sigma_db,
        }
    }

    /// Shadowing in dB for the variate `u ∈ (0, 1)`.
    #[inline]
    pub fn chi_db(&self, u: f64) -> f64 {
        if self.sigma == 0.0 {
            return self.mu;
        }
        self.mu - self.sigma * std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
    }

    /// Units needed at squared distance `d2`.
    #[inline]
    pub fn units(&self, d2: f64, u: f64) -> f64 {
        let path = if self.alpha4 { d2 * d2 } else { d2.powf(self.half_alpha) };
        self.scale * path * (-self.chi_db(u) * std::f64::consts::LN_10 / 10.0).exp()
    }
}

const CULL_BINS: usize = 4096;

/// Conservative lower bounds on the variate below which a pair certainly
/// needs more than `cap` units, binned uniformly in squared distance.
#[derive(Debug, Clone)]
pub(super) struct CullTable {
    inv_bin: f64,
    /// clamped to [0, 1]
    u_min: Vec<f64>,
}

impl CullTable {
    pub fn new(cap: f64, power: &PowerModel, window: Window) -> Self {
        let reach = 2.0 * window.radius_m * window.radius_m * (1.0 + 1e-9);
        let inv_bin = CULL_BINS as f64 / reach;
        let u_min = (0..CULL_BINS)
            .map(|i| {
                let d2 = i as f64 / inv_bin;
                if !cap.is_finite() || d2 == 0.0 {
                    return 0.0;
                }
                let base = power.units(d2, 0.5) * 10f64.powf(power.mu / 10.0);
                let threshold_db = 10.0 * (base / cap).log10();
                if power.sigma == 0.0 {
                    return if threshold_db <= power.mu + 1e-9 { 0.0 } else { 1.0 };
                }
                let z = (threshold_db - power.mu) / power.sigma;
                (0.5 * erfc(-z / std::f64::consts::SQRT_2) - 1e-12).clamp(0.0, 1.0)
            })
            .collect();
        Self { inv_bin, u_min }
    }

    #[inline]
    pub fn u_min(&self, d2: f64) -> f64 {
        self.u_min[((d2 * self.inv_bin) as usize).min(CULL_BINS - 1)]
    }

    #[inline]
    pub fn may_reach(&self, d2: f64, u: f64) -> bool {
        u >= self.u_min(d2)
    }
}

/// A pair whose variate passed the cull, with its required power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) struct Pair {
    pub bs: u32,
    pub u: f64,
    pub p: f64,
}

/// Run of BSs sharing one pass-probability bound within a grid cell.
#[derive(Debug, Clone, Copy)]
struct Band {
    start: u32,
    end: u32,
    /// bound on the pass probability of every member; 1 marks a direct scan
    q: f64,
    ln_miss: f64,
}

/// Per-cell BS orderings for a fixed BS layout.
///
/// For each cell of a square grid, BSs are sorted by an upper bound on their
/// pass probability from anywhere in the cell and split into bands whose
/// bounds differ by at most a factor 4. Bands with a bound below 1/4 are
/// sampled by geometric skipping and thinned to the exact pass probability.
#[derive(Debug, Clone)]
pub(super) struct ReachIndex {
    window: Window,
    grid: usize,
    cell: f64,
    positions: Vec<Point>,
    order: Vec<u32>,
    bands: Vec<Band>,
    /// bands of cell c are `bands[cell_bands[c]..cell_bands[c + 1]]`
    cell_bands: Vec<usize>,
}

impl ReachIndex {
    pub fn build(positions: &[Point], window: Window, table: &CullTable, grid: usize) -> Self {
        let grid = grid.max(1);
        let cell = window.side() / grid as f64;
        let half = 0.5 * cell;
        let mut order = Vec::with_capacity(grid * grid * positions.len());
        let mut bands = Vec::new();
        let mut cell_bands = vec![0];
        let mut bounds: Vec<(f64, u32)> = Vec::with_capacity(positions.len());
        for c in 0..grid * grid {
            let cx = -window.radius_m + ((c % grid) as f64 + 0.5) * cell;
            let cy = -window.radius_m + ((c / grid) as f64 + 0.5) * cell;
            bounds.clear();
            for (k, b) in positions.iter().enumerate() {
                let dx = (window.axis_distance(b.x, cx) - half).max(0.0);
                let dy = (window.axis_distance(b.y, cy) - half).max(0.0);
                let q = 1.0 - table.u_min(dx * dx + dy * dy);
                if q > 0.0 {
                    bounds.push((q, k as u32));
                }
            }
            bounds.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut i = 0;
            while i < bounds.len() {
                let key = band_key(bounds[i].0);
                let start = order.len() as u32;
                let q = if key == 0 { 1.0 } else { bounds[i].0 };
                while i < bounds.len() && band_key(bounds[i].0) == key {
                    order.push(bounds[i].1);
                    i += 1;
                }
                bands.push(Band { start, end: order.len() as u32, q, ln_miss: (-q).ln_1p() });
            }
            cell_bands.push(bands.len());
        }
        Self { window, grid, cell, positions: positions.to_vec(), order, bands, cell_bands }
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    fn cell_of(&self, p: Point) -> usize {
        let axis = |v: f64| (((v + self.window.radius_m) / self.cell) as usize).min(self.grid - 1);
        axis(p.y) * self.grid + axis(p.x)
    }

    /// Appends the passing pairs of a user at `point` to `out`, in no
    /// particular order. Each pair passes independently with probability
    /// `1 − u_min(d)`, and its variate is uniform on `(u_min(d), 1)`.
    pub fn passers<R: RngCore + ?Sized>(
        &self,
        point: Point,
        power: &PowerModel,
        table: &CullTable,
        rng: &mut R,
        out: &mut Vec<Pair>,
    ) {
        let c = self.cell_of(point);
        for band in &self.bands[self.cell_bands[c]..self.cell_bands[c + 1]] {
            let members = &self.order[band.start as usize..band.end as usize];
            if band.q >= 1.0 {
                for &k in members {
                    let d2 = self.window.distance_sq(point, self.positions[k as usize]);
                    let u = open_unit(rng);
                    if table.may_reach(d2, u) {
                        out.push(Pair { bs: k, u, p: power.units(d2, u) });
                    }
                }
                continue;
            }
            let mut j = skip(rng, band.ln_miss);
            while j < members.len() {
                let k = members[j];
                let d2 = self.window.distance_sq(point, self.positions[k as usize]);
                let w = open_unit(rng) * band.q;
                if w < 1.0 - table.u_min(d2) {
                    let u = 1.0 - w;
                    out.push(Pair { bs: k, u, p: power.units(d2, u) });
                }
                j = j.saturating_add(1).saturating_add(skip(rng, band.ln_miss));
            }
        }
    }
}

/// Misses before the next hit of a Bernoulli sequence with `ln(1 − q)`.
#[inline]
fn skip<R: RngCore + ?Sized>(rng: &mut R, ln_miss: f64) -> usize {
    (open_unit(rng).ln() / ln_miss) as usize
}

fn band_key(q: f64) -> u32 {
    if q >= 0.25 {
        0
    } else if q >= 1.0 / 64.0 {
        1
    } else {
        2
    }
}

/// Full variate row of a user: stored variates for `passers`, and for every
/// other BS a draw uniform on `(0, u_min(d))`.
pub(super) fn complete_row<R: RngCore + ?Sized>(
    point: Point,
    passers: &[Pair],
    positions: &[Point],
    window: Window,
    table: &CullTable,
    rng: &mut R,
    row: &mut Vec<f64>,
) {
    let start = row.len();
    row.extend(positions.iter().map(|&b| table.u_min(window.distance_sq(point, b)) * open_unit(rng)));
    for pair in passers {
        row[start + pair.bs as usize] = pair.u;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn median_shadowing_gives_path_loss_power() {
        let cfg = NetworkConfig::desk_defaults();
        let pm = PowerModel::new(&cfg);
        let d: f64 = 37.0;
        let expected = cfg.deployment.p_rx_watts * d.powi(4) / cfg.unit_watts();
        assert!((pm.units(d * d, 0.5) / expected - 1.0).abs() < 1e-12);
        // one sigma of shadowing gain
        let u = 0.841_344_746_068_542_9;
        let got = pm.units(d * d, u);
        assert!((got / (expected / 10f64.powf(0.4)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn culling_is_conservative() {
        let cfg = NetworkConfig::desk_defaults();
        let pm = PowerModel::new(&cfg);
        let window = Window::from_config(&cfg);
        let cap = 12.0;
        let table = CullTable::new(cap, &pm, window);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200_000 {
            let d = rng.random_range(0.0..window.radius_m * 1.414);
            let u = open_unit(&mut rng);
            if !table.may_reach(d * d, u) {
                assert!(pm.units(d * d, u) > cap);
            }
        }
    }

    #[test]
    fn pass_counts_match_pass_probabilities() {
        // a few BSs at fixed distances from one user; the empirical pass rate
        // of each pair must match 1 − u_min(d), including the skipped bands
        let cfg = NetworkConfig::desk_defaults();
        let pm = PowerModel::new(&cfg);
        let window = Window::from_config(&cfg);
        let table = CullTable::new(3.0, &pm, window);
        let user = Point::new(1.0, 2.0);
        let positions: Vec<Point> =
            [5.0, 30.0, 45.0, 60.0, 80.0, 120.0].iter().map(|&r| Point::new(1.0 + r, 2.0)).collect();
        let index = ReachIndex::build(&positions, window, &table, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 400_000;
        let mut hits = vec![0u32; positions.len()];
        let mut above = vec![0.0f64; positions.len()];
        let mut out = Vec::new();
        for _ in 0..n {
            out.clear();
            index.passers(user, &pm, &table, &mut rng, &mut out);
            for pair in &out {
                hits[pair.bs as usize] += 1;
                let d2 = window.distance_sq(user, positions[pair.bs as usize]);
                let a = table.u_min(d2);
                above[pair.bs as usize] += (pair.u - a) / (1.0 - a);
                assert!(pair.u > a && pair.u < 1.0);
            }
        }
        for (k, b) in positions.iter().enumerate() {
            let q = 1.0 - table.u_min(window.distance_sq(user, *b));
            let sd = (q * (1.0 - q) / n as f64).sqrt();
            let rate = hits[k] as f64 / n as f64;
            assert!((rate - q).abs() <= 5.0 * sd + 1e-12, "bs {k}: {rate} vs {q}");
            if hits[k] > 1000 {
                // rescaled variate is uniform on (0, 1)
                let mean = above[k] / hits[k] as f64;
                assert!((mean - 0.5).abs() < 5.0 * (1.0 / 12.0 / hits[k] as f64).sqrt(), "bs {k}: {mean}");
            }
        }
    }

    #[test]
    fn completed_row_keeps_passers_and_respects_bounds() {
        let cfg = NetworkConfig::desk_defaults();
        let pm = PowerModel::new(&cfg);
        let window = Window::from_config(&cfg);
        let table = CullTable::new(3.0, &pm, window);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let positions: Vec<Point> = (0..50).map(|_| window.uniform_point(&mut rng)).collect();
        let index = ReachIndex::build(&positions, window, &table, 8);
        let user = Point::new(-10.0, 40.0);
        let mut pairs = Vec::new();
        index.passers(user, &pm, &table, &mut rng, &mut pairs);
        let mut row = vec![9.0];
        complete_row(user, &pairs, &positions, window, &table, &mut rng, &mut row);
        assert_eq!(row.len(), 51);
        for (k, b) in positions.iter().enumerate() {
            let u = row[k + 1];
            let passed = pairs.iter().any(|p| p.bs as usize == k);
            assert_eq!(passed, table.may_reach(window.distance_sq(user, *b), u));
        }
    }
}
