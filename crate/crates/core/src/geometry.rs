//! Poisson point processes on a torus window and the displaced intensities
//! of the required-power process.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::{NetworkConfig, ZETA};

/// Square window `[-radius, radius)²` with wrap-around edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub radius_m: f64,
}

impl Window {
    pub fn new(radius_m: f64) -> Self {
        Self { radius_m }
    }

    pub fn from_config(cfg: &NetworkConfig) -> Self {
        Self::new(cfg.deployment.window_radius_m)
    }

    pub fn side(&self) -> f64 {
        2.0 * self.radius_m
    }

    pub fn area(&self) -> f64 {
        self.side() * self.side()
    }

    /// Wrapped distance between two coordinates along one axis.
    #[inline]
    pub fn axis_distance(&self, a: f64, b: f64) -> f64 {
        let side = self.side();
        let mut d = (a - b).abs();
        if d >= side {
            d %= side;
        }
        d.min(side - d)
    }

    /// Squared torus distance.
    #[inline]
    pub fn distance_sq(&self, a: Point, b: Point) -> f64 {
        let dx = self.axis_distance(a.x, b.x);
        let dy = self.axis_distance(a.y, b.y);
        dx * dx + dy * dy
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        self.distance_sq(a, b).sqrt()
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let r = self.radius_m;
        Point { x: rng.random_range(-r..r), y: rng.random_range(-r..r) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    pub positions: Vec<Point>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Draws `Poisson(density·area)` points uniformly over the window.
pub fn sample_ppp<R: Rng + ?Sized>(density: f64, window: Window, rng: &mut R) -> PointSet {
    let mut out = PointSet::default();
    sample_ppp_into(density, window, rng, &mut out.positions);
    out
}

/// Like [`sample_ppp`] but reuses `buf`.
pub fn sample_ppp_into<R: Rng + ?Sized>(density: f64, window: Window, rng: &mut R, buf: &mut Vec<Point>) {
    buf.clear();
    let mean = density * window.area();
    if mean <= 0.0 {
        return;
    }
    let n = poisson_count(mean, rng);
    buf.extend((0..n).map(|_| window.uniform_point(rng)));
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u64
}

/// Transmit power needed to deliver `p_rx` at distance `r` through shadowing `chi`:
/// `p_rx · κ r^α / χ`.
#[inline]
pub fn required_power_at(r: f64, chi: f64, cfg: &NetworkConfig) -> f64 {
    cfg.deployment.p_rx_watts * cfg.channel.kappa * r.powf(cfg.channel.alpha) / chi
}

/// Required power between two points on the torus, in watts.
pub fn required_power(bs: Point, mt: Point, chi: f64, cfg: &NetworkConfig) -> f64 {
    let r = Window::from_config(cfg).distance(bs, mt);
    required_power_at(r, chi, cfg)
}

/// `E[χ^(2/α)]` for log-normal χ with dB parameters `mu_db`, `sigma_db`.
pub fn lognormal_frac_moment(mu_db: f64, sigma_db: f64, alpha: f64) -> f64 {
    let s = (2.0 / alpha) / ZETA;
    (s * mu_db + 0.5 * s * s * sigma_db * sigma_db).exp()
}

/// Constants of the displaced power processes.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityConstants {
    /// Υ in m²·W^(-2/α): `Λ(p) = λ Υ p^(2/α)` with `p` in watts.
    pub upsilon: f64,
    /// Υ_m for m = 1..=L transmitted units (index 0 holds m = 1).
    pub upsilon_m: Vec<f64>,
    pub zeta: f64,
}

impl IntensityConstants {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let ch = &cfg.channel;
        let delta = 2.0 / ch.alpha;
        let moment = lognormal_frac_moment(ch.mu_db, ch.sigma_db, ch.alpha);
        let upsilon = upsilon(cfg);
        let eps = cfg.unit_watts();
        let n_rb = cfg.deployment.n_rb as f64;
        let upsilon_m = (1..=cfg.levels()).map(|m| upsilon_m(m as f64 * eps, ch.kappa, n_rb, delta, moment)).collect();
        Self { upsilon, upsilon_m, zeta: ZETA }
    }

    /// Υ rescaled so that `Λ(p) = λ Υ_units p^(2/α)` with `p` in battery units.
    pub fn upsilon_units(&self, cfg: &NetworkConfig) -> f64 {
        self.upsilon * cfg.unit_watts().powf(2.0 / cfg.channel.alpha)
    }
}

/// `π (m / (κ N_RB))^(2/α) E[χ^(2/α)]` with `m_watts` the transmitted power.
fn upsilon_m(m_watts: f64, kappa: f64, n_rb: f64, delta: f64, moment: f64) -> f64 {
    std::f64::consts::PI * (m_watts / (kappa * n_rb)).powf(delta) * moment
}

/// Mean number of users whose required power from a given BS is at most `p` watts.
pub fn intensity_mt(p: f64, cfg: &NetworkConfig) -> f64 {
    displaced_intensity(cfg.mt_density(), p, cfg)
}

/// Mean number of BSs a given user reaches with at most `p` watts.
pub fn intensity_bs(p: f64, cfg: &NetworkConfig) -> f64 {
    displaced_intensity(cfg.deployment.lambda_bs, p, cfg)
}

fn displaced_intensity(density: f64, p: f64, cfg: &NetworkConfig) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    density * upsilon(cfg) * p.powf(2.0 / cfg.channel.alpha)
}

/// Υ = `π (1/(P_Rx κ))^(2/α) E[χ^(2/α)]`, power in watts.
pub fn upsilon(cfg: &NetworkConfig) -> f64 {
    let ch = &cfg.channel;
    std::f64::consts::PI
        * (1.0 / (cfg.deployment.p_rx_watts * ch.kappa)).powf(2.0 / ch.alpha)
        * lognormal_frac_moment(ch.mu_db, ch.sigma_db, ch.alpha)
}
