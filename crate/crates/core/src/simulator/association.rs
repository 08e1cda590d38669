//! Association and selection rules, on precomputed per-user candidate lists.

use crate::analytic::AvailabilityMap;

/// A BS reachable by a user together with the power it would need, in units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub bs: u32,
    pub p: f64,
}

/// Units drawn from the battery to serve a requirement of `p` units.
#[inline]
pub fn units(p: f64) -> u32 {
    p.ceil() as u32
}

fn min_by_power(iter: impl Iterator<Item = Candidate>) -> Option<Candidate> {
    iter.fold(None, |best: Option<Candidate>, c| match best {
        Some(b) if b.p <= c.p => Some(b),
        _ => Some(c),
    })
}

/// Cheapest BS that passes the availability test against its broadcast level.
pub fn associate_proposed(cands: &[Candidate], broadcast: &[u32], map: &AvailabilityMap) -> Option<Candidate> {
    min_by_power(cands.iter().copied().filter(|c| map.is_available(c.p, broadcast[c.bs as usize])))
}

/// Cheapest BS regardless of its battery.
pub fn associate_without(cands: &[Candidate]) -> Option<Candidate> {
    min_by_power(cands.iter().copied())
}

/// Cheapest BS whose live battery still covers `ceil(p)`.
pub fn associate_realtime(cands: &[Candidate], live: &[u32]) -> Option<Candidate> {
    min_by_power(cands.iter().copied().filter(|c| live[c.bs as usize] >= units(c.p)))
}

/// Greedy admission of the requests of one BS, cheapest first.
///
/// Sorts `requests` (power in units, user id) ascending and admits the
/// longest prefix whose total `ceil(p)` fits in `battery`. Returns the
/// prefix length and the units it consumes.
pub fn select_and_serve(requests: &mut [(f64, u32)], battery: u32) -> (usize, u32) {
    requests.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut used = 0u32;
    for (i, &(p, _)) in requests.iter().enumerate() {
        let next = used + units(p);
        if next > battery {
            return (i, used);
        }
        used = next;
    }
    (requests.len(), used)
}
