use super::{AnalyticError, BatteryDistribution, UnitIntensities};
use crate::config::NetworkConfig;

/// Estimated load of the users cheaper than `p` at the same BS, in units:
/// `λ_MT Υ (2/α)/(2/α+1) p^(2/α+1)`.
pub fn estimate_other_load(p: f64, cfg: &NetworkConfig) -> f64 {
    let k = UnitIntensities::new(cfg);
    if p <= 0.0 {
        return 0.0;
    }
    k.load_coeff() * p.powf(k.exponent + 1.0)
}

/// Inverse of `g_A(p) = p + estimate(p)` at every battery level.
///
/// `p_cov[l]` is the largest required power a BS broadcasting `l` units
/// can accept.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityMap {
    p_cov: Vec<f64>,
    load_coeff: f64,
    load_exponent: f64,
}

impl AvailabilityMap {
    pub fn build(cfg: &NetworkConfig) -> Result<Self, AnalyticError> {
        let k = UnitIntensities::new(cfg);
        let mut map = Self {
            p_cov: Vec::with_capacity(cfg.levels() + 1),
            load_coeff: k.load_coeff(),
            load_exponent: k.exponent + 1.0,
        };
        for l in 0..=cfg.levels() {
            let root = map.invert(l as f64).ok_or(AnalyticError::SolverFailure { level: l })?;
            map.p_cov.push(root);
        }
        Ok(map)
    }

    #[inline]
    pub fn g_a(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        p + self.load_coeff * p.powf(self.load_exponent)
    }

    /// Bisection on `[0, level]`, valid because `g_A(p) >= p`.
    fn invert(&self, level: f64) -> Option<f64> {
        if level == 0.0 {
            return Some(0.0);
        }
        let (mut lo, mut hi) = (0.0, level);
        match self.g_a(hi).partial_cmp(&level) {
            None | Some(std::cmp::Ordering::Less) => return None,
            Some(std::cmp::Ordering::Equal) => return Some(level),
            Some(std::cmp::Ordering::Greater) => {}
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.g_a(mid) <= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }

    pub fn levels(&self) -> usize {
        self.p_cov.len() - 1
    }

    #[inline]
    pub fn p_cov(&self, level: usize) -> f64 {
        self.p_cov[level]
    }

    pub fn coverage(&self) -> &[f64] {
        &self.p_cov
    }

    /// Lowest level at which a BS requiring `p` units is available,
    /// `levels() + 1` when no level suffices.
    #[inline]
    pub fn l_star(&self, p: f64) -> usize {
        self.p_cov.partition_point(|&c| c < p)
    }

    /// The availability test: `p + estimate(p) <= level`.
    #[inline]
    pub fn is_available(&self, p: f64, level: u32) -> bool {
        self.g_a(p) <= level as f64
    }
}

/// Available-BS and served-user intensities seen under a broadcast-level
/// distribution.
#[derive(Debug, Clone)]
pub struct Thinning<'a> {
    map: &'a AvailabilityMap,
    intensities: UnitIntensities,
    levels: &'a BatteryDistribution,
    /// tail[k] = Σ_{j ≥ k} w_j
    tail: Vec<f64>,
    /// base[k] = Σ_{j < k} w_j Λ_B(p_cov[j])
    base: Vec<f64>,
    /// served[k] = Λ_MT^(S)(p_cov[k])
    served: Vec<f64>,
}

impl<'a> Thinning<'a> {
    pub fn new(map: &'a AvailabilityMap, intensities: UnitIntensities, levels: &'a BatteryDistribution) -> Self {
        let w = levels.probabilities();
        let n = map.levels() + 1;
        assert_eq!(w.len(), n, "distribution and map disagree on L");

        let mut tail = vec![0.0; n + 1];
        for k in (0..n).rev() {
            tail[k] = tail[k + 1] + w[k];
        }
        let mut base = vec![0.0; n + 1];
        for k in 0..n {
            base[k + 1] = base[k] + w[k] * intensities.bs_at(map.p_cov(k));
        }
        let mut t = Self { map, intensities, levels, tail, base, served: vec![0.0; n] };
        for k in 1..n {
            t.served[k] = t.served[k - 1] + t.served_segment(k, map.p_cov(k));
        }
        t
    }

    pub fn map(&self) -> &AvailabilityMap {
        self.map
    }

    pub fn intensities(&self) -> UnitIntensities {
        self.intensities
    }

    pub fn levels(&self) -> &BatteryDistribution {
        self.levels
    }

    /// Λ_B^(A) inside segment `k`, i.e. for `p_cov[k-1] < p <= p_cov[k]`.
    #[inline]
    fn thinned_in_segment(&self, k: usize, p: f64) -> f64 {
        self.base[k] + self.tail[k] * self.intensities.bs_at(p)
    }

    /// Served-user intensity accumulated over `(p_cov[k-1], p]`.
    ///
    /// On a segment Λ_B^(A) grows as S_k·Λ_B, so the integral of
    /// dΛ_MT·exp(-Λ_B^(A)) is `(λ_MT/λ_B)·e^{-Λ^A(a)}·(1 - e^{-S_k ΔΛ_B})/S_k`;
    /// written with expm1 it also covers S_k = 0.
    fn served_segment(&self, k: usize, p: f64) -> f64 {
        let a = self.map.p_cov(k - 1);
        let bs = &self.intensities;
        if bs.mt == 0.0 || p <= a {
            return 0.0;
        }
        let d_bs = bs.bs_at(p) - bs.bs_at(a);
        let s = self.tail[k];
        let x = s * d_bs;
        let shape = if x > 1e-300 { -(-x).exp_m1() / x } else { 1.0 };
        (bs.mt / bs.bs) * (-self.thinned_in_segment(k, a)).exp() * d_bs * shape
    }

    /// Λ_B^(A)(p): intensity of BSs available to a user requiring `p` units.
    pub fn available_bs_intensity(&self, p: f64) -> Result<f64, AnalyticError> {
        let max = self.map.p_cov(self.map.levels());
        if p.is_nan() || p < 0.0 || p > max * (1.0 + 1e-12) {
            return Err(AnalyticError::DomainError { p, max });
        }
        Ok(self.thinned(p.min(max)))
    }

    #[inline]
    fn thinned(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let k = self.map.l_star(p).min(self.map.levels());
        self.thinned_in_segment(k, p)
    }

    /// Probability that a user requiring `p` associates with a given BS at `level`.
    pub fn association_prob(&self, p: f64, level: usize) -> f64 {
        if p > self.map.p_cov(level) {
            return 0.0;
        }
        (-self.thinned(p.max(0.0))).exp()
    }

    /// Λ_MT^(S)(p | level): mean number of users served by a BS at `level`
    /// that require at most `p`.
    pub fn served_mt_intensity(&self, p: f64, level: usize) -> Result<f64, AnalyticError> {
        let max = self.map.p_cov(level);
        if p.is_nan() || p < 0.0 || p > max * (1.0 + 1e-12) {
            return Err(AnalyticError::DomainError { p, max });
        }
        Ok(self.served_below(p.min(max)))
    }

    #[inline]
    fn served_below(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let k = self.map.l_star(p).clamp(1, self.map.levels());
        self.served[k - 1] + self.served_segment(k, p)
    }

    /// Λ_MT^(S)(min(q, p_cov[level]) | level) for integer `q = 0..=ceil(p_cov[level])`.
    pub fn served_cumulative(&self, level: usize) -> Vec<f64> {
        let cap = self.map.p_cov(level);
        let top = cap.ceil() as usize;
        (0..=top).map(|q| self.served_below((q as f64).min(cap))).collect()
    }
}
