use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetworkState, SimError, SlotEngine};
use crate::config::{NetworkConfig, SchemePolicy};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    /// probe points per side
    pub resolution: usize,
    pub slots: u32,
    pub warmup: Option<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCell {
    pub x: f64,
    pub y: f64,
    pub outage_a: f64,
    pub outage_woa: f64,
    /// `(woA − A)/woA`, 0 where w/o-A never fails
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageMap {
    pub resolution: usize,
    pub bs: Vec<Point>,
    /// row-major, `y` outer
    pub cells: Vec<MapCell>,
}

/// Per-location outage of A and w/o-A on one fixed BS realization.
///
/// Every slot, each grid point hosts a probe user that sees the same
/// batteries and admitted users as the real ones but consumes nothing.
pub fn outage_map(cfg: &NetworkConfig, opts: &MapOptions) -> Result<OutageMap, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initial = NetworkState::sample(cfg, &mut rng);
    let mut runs = [SchemePolicy::ProposedA, SchemePolicy::WithoutA].map(|scheme| {
        let slot_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let probe_rng = ChaCha8Rng::seed_from_u64(rng.random());
        (SlotEngine::new(cfg, scheme, 0), initial.clone(), slot_rng, probe_rng)
    });

    let n = opts.resolution;
    let r = cfg.deployment.window_radius_m;
    let step = 2.0 * r / n as f64;
    let points: Vec<Point> = (0..n * n)
        .map(|i| Point::new(-r + (i % n) as f64 * step + 0.5 * step, -r + (i / n) as f64 * step + 0.5 * step))
        .collect();
    let mut failures = [vec![0u64; n * n], vec![0u64; n * n]];

    let warmup = opts.warmup.unwrap_or_else(|| cfg.default_warmup_slots());
    for slot in 0..warmup + opts.slots {
        for ((engine, state, slot_rng, probe_rng), fails) in runs.iter_mut().zip(failures.iter_mut()) {
            let engine = engine.as_mut().map_err(|e| SimError::from(e.clone()))?;
            engine.step(state, slot_rng, false);
            if slot >= warmup {
                for (pt, f) in points.iter().zip(fails.iter_mut()) {
                    *f += !engine.probe(state, *pt, probe_rng) as u64;
                }
            }
        }
    }

    let denom = opts.slots.max(1) as f64;
    let cells = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a = failures[0][i] as f64 / denom;
            let w = failures[1][i] as f64 / denom;
            MapCell { x: p.x, y: p.y, outage_a: a, outage_woa: w, gain: if w > 0.0 { (w - a) / w } else { 0.0 } }
        })
        .collect();
    Ok(OutageMap { resolution: n, bs: initial.bs.positions, cells })
}
