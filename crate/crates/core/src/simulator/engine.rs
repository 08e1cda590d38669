//! One slot of the protocol: broadcast, harvest, user draw, association,
//! selection and battery update.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::association::{
    associate_proposed, associate_realtime, associate_without, select_and_serve, units, Candidate,
};
use super::reach::{complete_row, CullTable, Pair, PowerModel, ReachIndex};
use crate::analytic::{AnalyticError, AvailabilityMap};
use crate::config::{NetworkConfig, SchemePolicy};
use crate::geometry::{poisson_count, sample_ppp, sample_ppp_into, Point, PointSet, Window};

/// BS positions and their batteries at the start of the next slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub bs: PointSet,
    pub battery: Vec<u32>,
}

impl NetworkState {
    pub fn new(bs: PointSet, battery: Vec<u32>) -> Self {
        assert_eq!(bs.len(), battery.len(), "one battery per BS");
        Self { bs, battery }
    }

    /// A fresh BS process with batteries uniform on `0..=L`.
    pub fn sample<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Self {
        let bs = sample_ppp(cfg.deployment.lambda_bs, Window::from_config(cfg), rng);
        let top = cfg.battery.levels;
        let battery = (0..bs.len()).map(|_| rng.random_range(0..=top)).collect();
        Self { bs, battery }
    }

    pub fn len(&self) -> usize {
        self.battery.len()
    }

    pub fn is_empty(&self) -> bool {
        self.battery.is_empty()
    }
}

/// Energy flow of one BS over one slot, in units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BsSlot {
    pub start: u32,
    /// broadcast cost actually paid, `min(start, P_BC)`
    pub paid: u32,
    /// level broadcast and available for data
    pub usable: u32,
    pub consumed: u32,
    pub harvest: u32,
    pub end: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtSlot {
    pub position: Point,
    /// BS the user associated with
    pub bs: Option<u32>,
    /// power required from that BS, units
    pub p: f64,
    pub served: bool,
}

impl MtSlot {
    pub fn rejected(&self) -> bool {
        self.bs.is_some() && !self.served
    }
}

#[derive(Debug, Clone, Default)]
pub struct SlotOutcome {
    pub bs: Vec<BsSlot>,
    pub mts: Vec<MtSlot>,
    /// SIR (linear) of the sampled served users
    pub sir: Vec<f64>,
}

/// Candidates with `p <= cap` for the user at `mt`, given its full row of variates.
#[allow(clippy::too_many_arguments)]
fn scan(
    mt: Point,
    row: &[f64],
    bs: &[Point],
    window: Window,
    power: &PowerModel,
    table: &CullTable,
    cap: f64,
    out: &mut Vec<Candidate>,
) {
    out.clear();
    for (k, (&b, &u)) in bs.iter().zip(row).enumerate() {
        let d2 = window.distance_sq(mt, b);
        if !table.may_reach(d2, u) {
            continue;
        }
        let p = power.units(d2, u);
        if p <= cap {
            out.push(Candidate { bs: k as u32, p });
        }
    }
}

/// Users of the current slot with their passing pairs and, on demand,
/// their full variate rows.
#[derive(Debug, Clone, Default)]
struct Users {
    points: Vec<Point>,
    pairs: Vec<Pair>,
    offsets: Vec<usize>,
    rows: Vec<f64>,
    row_at: Vec<usize>,
}

impl Users {
    fn draw<R: Rng + ?Sized>(&mut self, index: &ReachIndex, power: &PowerModel, table: &CullTable, rng: &mut R) {
        self.pairs.clear();
        self.offsets.clear();
        self.offsets.push(0);
        for &pt in &self.points {
            index.passers(pt, power, table, rng, &mut self.pairs);
            self.offsets.push(self.pairs.len());
        }
        self.rows.clear();
        self.row_at.clear();
        self.row_at.resize(self.points.len(), usize::MAX);
    }

    fn pairs(&self, i: usize) -> &[Pair] {
        &self.pairs[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Variates of user `i` towards every BS, completed once per slot.
    fn row<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        bs: &[Point],
        window: Window,
        table: &CullTable,
        rng: &mut R,
    ) -> &[f64] {
        if self.row_at[i] == usize::MAX {
            self.row_at[i] = self.rows.len();
            let passers = &self.pairs[self.offsets[i]..self.offsets[i + 1]];
            complete_row(self.points[i], passers, bs, window, table, rng, &mut self.rows);
        }
        &self.rows[self.row_at[i]..self.row_at[i] + bs.len()]
    }
}

/// Runs slots for one scheme, reusing its buffers across calls.
#[derive(Debug, Clone)]
pub struct SlotEngine {
    cfg: NetworkConfig,
    scheme: SchemePolicy,
    map: AvailabilityMap,
    window: Window,
    power: PowerModel,
    near_cap: f64,
    near: CullTable,
    wide_cap: f64,
    wide: CullTable,
    grid: usize,
    index: Option<ReachIndex>,
    fading: Exp<f64>,
    sir_probes: usize,

    users: Users,
    cands: Vec<Vec<Candidate>>,
    spare: Vec<Candidate>,
    usable: Vec<u32>,
    live: Vec<u32>,
    order: Vec<u32>,
    requests: Vec<(f64, u32)>,
    offsets: Vec<usize>,
    admitted: Vec<usize>,
    probe_pairs: Vec<Pair>,
    probe_row: Vec<f64>,
    outcome: SlotOutcome,
}

impl SlotEngine {
    /// `sir_probes` bounds how many served users per slot get an SIR sample.
    pub fn new(cfg: &NetworkConfig, scheme: SchemePolicy, sir_probes: usize) -> Result<Self, AnalyticError> {
        let map = AvailabilityMap::build(cfg)?;
        let window = Window::from_config(cfg);
        let power = PowerModel::new(cfg);
        let near_cap = match scheme {
            SchemePolicy::OnGrid => cfg.deployment.ongrid_pmax_watts / cfg.unit_watts(),
            _ => map.p_cov(map.levels()),
        };
        let wide_cap = match scheme {
            SchemePolicy::RealTimeA => cfg.levels() as f64,
            _ => f64::INFINITY,
        };
        // grid cells of about half a mean cell radius
        let cells = 2.0 * window.side() / cfg.deployment.mean_cell_radius_m();
        let grid = if cells.is_finite() { (cells.ceil() as usize).clamp(8, 64) } else { 8 };
        Ok(Self {
            cfg: *cfg,
            scheme,
            near: CullTable::new(near_cap, &power, window),
            wide: CullTable::new(wide_cap, &power, window),
            near_cap,
            wide_cap,
            grid,
            index: None,
            map,
            window,
            power,
            fading: Exp::new(cfg.channel.nu).expect("nu > 0"),
            sir_probes,
            users: Users::default(),
            cands: Vec::new(),
            spare: Vec::new(),
            usable: Vec::new(),
            live: Vec::new(),
            order: Vec::new(),
            requests: Vec::new(),
            offsets: Vec::new(),
            admitted: Vec::new(),
            probe_pairs: Vec::new(),
            probe_row: Vec::new(),
            outcome: SlotOutcome::default(),
        })
    }

    pub fn scheme(&self) -> SchemePolicy {
        self.scheme
    }

    pub fn map(&self) -> &AvailabilityMap {
        &self.map
    }

    pub fn outcome(&self) -> &SlotOutcome {
        &self.outcome
    }

    /// Rebuilds the reach index when the BS layout changed.
    fn refresh_index(&mut self, bs: &[Point]) {
        if self.index.as_ref().is_none_or(|ix| ix.positions() != bs) {
            self.index = Some(ReachIndex::build(bs, self.window, &self.near, self.grid));
        }
    }

    /// Simulates one slot, updating `state.battery`. SIR samples are drawn
    /// only when `measure_sir` is set.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut NetworkState, rng: &mut R, measure_sir: bool) -> &SlotOutcome {
        let n_bs = state.len();
        let levels = self.cfg.battery.levels;
        let cost = self.cfg.battery.broadcast_cost_units;

        // (1) broadcast
        self.outcome.bs.clear();
        self.usable.clear();
        for &b in &state.battery {
            let paid = b.min(cost);
            self.usable.push(b - paid);
            self.outcome.bs.push(BsSlot { start: b, paid, usable: b - paid, ..Default::default() });
        }

        // (2) harvest
        let rate = self.cfg.harvest_rate();
        let burst = self.cfg.harvest.burst_size;
        for slot in self.outcome.bs.iter_mut() {
            slot.harvest = (poisson_count(rate, rng) as u32).saturating_mul(burst);
        }

        // (3) users and the pairs within reach
        self.refresh_index(&state.bs.positions);
        let index = self.index.as_ref().expect("index is built");
        sample_ppp_into(self.cfg.mt_density(), self.window, rng, &mut self.users.points);
        self.users.draw(index, &self.power, &self.near, rng);
        let n_mt = self.users.points.len();
        if self.cands.len() < n_mt {
            self.cands.resize_with(n_mt, Vec::new);
        }
        for (i, cands) in self.cands.iter_mut().take(n_mt).enumerate() {
            cands.clear();
            let near = self.users.pairs(i).iter().filter(|pr| pr.p <= self.near_cap);
            cands.extend(near.map(|pr| Candidate { bs: pr.bs, p: pr.p }));
        }
        let bs = &state.bs.positions;

        // (4) association and (5) selection
        self.outcome.mts.clear();
        self.outcome.mts.extend(self.users.points.iter().map(|&position| MtSlot {
            position,
            bs: None,
            p: f64::NAN,
            served: false,
        }));
        match self.scheme {
            SchemePolicy::ProposedA | SchemePolicy::WithoutA => {
                for i in 0..n_mt {
                    let choice = if self.scheme == SchemePolicy::ProposedA {
                        associate_proposed(&self.cands[i], &self.usable, &self.map)
                    } else if self.cands[i].is_empty() {
                        let pt = self.users.points[i];
                        let row = self.users.row(i, bs, self.window, &self.near, rng);
                        scan(pt, row, bs, self.window, &self.power, &self.wide, self.wide_cap, &mut self.spare);
                        associate_without(&self.spare)
                    } else {
                        associate_without(&self.cands[i])
                    };
                    if let Some(c) = choice {
                        let mt = &mut self.outcome.mts[i];
                        mt.bs = Some(c.bs);
                        mt.p = c.p;
                    }
                }
                self.select(n_bs);
            }
            SchemePolicy::RealTimeA => {
                self.live.clear();
                self.live.extend_from_slice(&self.usable);
                self.order.clear();
                self.order.extend(0..n_mt as u32);
                self.order.shuffle(rng);
                for &i in &self.order {
                    let i = i as usize;
                    let mut choice = associate_realtime(&self.cands[i], &self.live);
                    if choice.is_none() {
                        let pt = self.users.points[i];
                        let row = self.users.row(i, bs, self.window, &self.near, rng);
                        scan(pt, row, bs, self.window, &self.power, &self.wide, self.wide_cap, &mut self.spare);
                        choice = associate_realtime(&self.spare, &self.live);
                    }
                    if let Some(c) = choice {
                        self.live[c.bs as usize] -= units(c.p);
                        let mt = &mut self.outcome.mts[i];
                        mt.bs = Some(c.bs);
                        mt.p = c.p;
                        mt.served = true;
                    }
                }
                for (slot, (&u, &l)) in self.outcome.bs.iter_mut().zip(self.usable.iter().zip(&self.live)) {
                    slot.consumed = u - l;
                }
            }
            SchemePolicy::OnGrid => {
                for i in 0..n_mt {
                    if let Some(c) = associate_without(&self.cands[i]) {
                        let mt = &mut self.outcome.mts[i];
                        mt.bs = Some(c.bs);
                        mt.p = c.p;
                        mt.served = true;
                        self.outcome.bs[c.bs as usize].consumed += units(c.p);
                    }
                }
            }
        }

        // (6) battery update
        for (slot, battery) in self.outcome.bs.iter_mut().zip(state.battery.iter_mut()) {
            slot.end = if self.scheme == SchemePolicy::OnGrid {
                slot.start
            } else {
                (slot.usable - slot.consumed).saturating_add(slot.harvest).min(levels)
            };
            *battery = slot.end;
        }

        self.outcome.sir.clear();
        if measure_sir && self.sir_probes > 0 {
            self.measure_sir(state, rng);
        }
        &self.outcome
    }

    /// Groups associated users per BS and applies greedy selection.
    fn select(&mut self, n_bs: usize) {
        self.offsets.clear();
        self.offsets.resize(n_bs + 1, 0);
        for mt in &self.outcome.mts {
            if let Some(k) = mt.bs {
                self.offsets[k as usize + 1] += 1;
            }
        }
        for k in 0..n_bs {
            self.offsets[k + 1] += self.offsets[k];
        }
        let mut fill = self.offsets.clone();
        self.requests.clear();
        self.requests.resize(self.offsets[n_bs], (0.0, 0));
        for (i, mt) in self.outcome.mts.iter().enumerate() {
            if let Some(k) = mt.bs {
                self.requests[fill[k as usize]] = (mt.p, i as u32);
                fill[k as usize] += 1;
            }
        }
        self.admitted.clear();
        for k in 0..n_bs {
            let slice = &mut self.requests[self.offsets[k]..self.offsets[k + 1]];
            let (n, used) = select_and_serve(slice, self.usable[k]);
            for &(_, i) in &slice[..n] {
                self.outcome.mts[i as usize].served = true;
            }
            self.outcome.bs[k].consumed = used;
            self.admitted.push(n);
        }
    }

    fn measure_sir<R: Rng + ?Sized>(&mut self, state: &NetworkState, rng: &mut R) {
        let bs = &state.bs.positions;
        let n_rb = self.cfg.deployment.n_rb as f64;
        let mut taken = 0;
        for (i, mt) in self.outcome.mts.iter().enumerate() {
            if taken == self.sir_probes {
                break;
            }
            let Some(serving) = mt.bs.filter(|_| mt.served) else { continue };
            taken += 1;
            let row = self.users.row(i, bs, self.window, &self.near, rng);
            let signal = self.fading.sample(rng);
            let mut interference = 0.0;
            for (k, slot) in self.outcome.bs.iter().enumerate() {
                if k == serving as usize || slot.consumed == 0 {
                    continue;
                }
                let p = self.power.units(self.window.distance_sq(mt.position, bs[k]), row[k]);
                interference += slot.consumed as f64 / (n_rb * p) * self.fading.sample(rng);
            }
            self.outcome.sir.push(if interference > 0.0 { signal / interference } else { f64::INFINITY });
        }
    }

    /// Whether an extra user at `point` would have been served in the last
    /// slot, without changing that slot. Only for the A and w/o-A schemes.
    pub fn probe<R: Rng + ?Sized>(&mut self, state: &NetworkState, point: Point, rng: &mut R) -> bool {
        let bs = &state.bs.positions;
        self.refresh_index(bs);
        let index = self.index.as_ref().expect("index is built");
        self.probe_pairs.clear();
        index.passers(point, &self.power, &self.near, rng, &mut self.probe_pairs);
        self.spare.clear();
        let near = self.probe_pairs.iter().filter(|pr| pr.p <= self.near_cap);
        self.spare.extend(near.map(|pr| Candidate { bs: pr.bs, p: pr.p }));
        let choice = match self.scheme {
            SchemePolicy::ProposedA => associate_proposed(&self.spare, &self.usable, &self.map),
            SchemePolicy::WithoutA => {
                if self.spare.is_empty() {
                    self.probe_row.clear();
                    complete_row(point, &self.probe_pairs, bs, self.window, &self.near, rng, &mut self.probe_row);
                    scan(
                        point,
                        &self.probe_row,
                        bs,
                        self.window,
                        &self.power,
                        &self.wide,
                        self.wide_cap,
                        &mut self.spare,
                    );
                }
                associate_without(&self.spare)
            }
            other => panic!("probing is defined for A and w/o-A only, not {other}"),
        };
        let Some(c) = choice else { return false };
        let k = c.bs as usize;
        let reqs = &self.requests[self.offsets[k]..self.offsets[k + 1]];
        let ahead = reqs.partition_point(|&(p, _)| p < c.p);
        if ahead > self.admitted[k] {
            return false;
        }
        let used: u32 = reqs[..ahead].iter().map(|&(p, _)| units(p)).sum();
        used + units(c.p) <= self.usable[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_bs_state(levels: [u32; 2]) -> NetworkState {
        let bs = PointSet { positions: vec![Point::new(-50.0, 0.0), Point::new(50.0, 0.0)] };
        NetworkState::new(bs, levels.to_vec())
    }

    #[test]
    fn empty_batteries_serve_nobody_under_a() {
        let cfg = NetworkConfig::desk_defaults();
        let mut eng = SlotEngine::new(&cfg, SchemePolicy::ProposedA, 0).unwrap();
        let mut state = two_bs_state([0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = eng.step(&mut state, &mut rng, false);
        assert!(!out.mts.is_empty());
        assert!(out.mts.iter().all(|m| m.bs.is_none() && !m.served));
    }

    #[test]
    fn without_a_associates_to_empty_batteries() {
        let cfg = NetworkConfig::desk_defaults();
        let mut eng = SlotEngine::new(&cfg, SchemePolicy::WithoutA, 0).unwrap();
        let mut state = two_bs_state([0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = eng.step(&mut state, &mut rng, false);
        assert!(out.mts.iter().all(|m| m.bs.is_some() && !m.served));
    }

    #[test]
    fn ongrid_keeps_batteries() {
        let cfg = NetworkConfig::desk_defaults();
        let mut eng = SlotEngine::new(&cfg, SchemePolicy::OnGrid, 0).unwrap();
        let mut state = two_bs_state([7, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        eng.step(&mut state, &mut rng, false);
        assert_eq!(state.battery, vec![7, 0]);
        let cap = cfg.deployment.ongrid_pmax_watts / cfg.unit_watts();
        assert!(eng.outcome().mts.iter().all(|m| m.served == (m.bs.is_some() && m.p <= cap)));
    }

    #[test]
    fn without_interferers_sir_is_infinite() {
        let cfg = NetworkConfig::desk_defaults();
        let mut eng = SlotEngine::new(&cfg, SchemePolicy::ProposedA, 4).unwrap();
        let bs = PointSet { positions: vec![Point::new(0.0, 0.0)] };
        let mut state = NetworkState::new(bs, vec![cfg.battery.levels]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = eng.step(&mut state, &mut rng, true);
        assert!(!out.sir.is_empty());
        assert!(out.sir.iter().all(|s| s.is_infinite()));
    }

    #[test]
    fn realtime_commits_live_energy() {
        let cfg = NetworkConfig::desk_defaults();
        let mut eng = SlotEngine::new(&cfg, SchemePolicy::RealTimeA, 0).unwrap();
        let mut state = two_bs_state([3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let start = state.battery.clone();
            let out = eng.step(&mut state, &mut rng, false).clone();
            for (k, slot) in out.bs.iter().enumerate() {
                let served: u32 =
                    out.mts.iter().filter(|m| m.served && m.bs == Some(k as u32)).map(|m| units(m.p)).sum();
                assert_eq!(served, slot.consumed);
                assert!(slot.consumed <= start[k]);
            }
            assert!(out.mts.iter().all(|m| !m.rejected()));
        }
    }
}
