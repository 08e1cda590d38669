//! Network parameters, unit conversions and the flat key-value config file.
//!
//! Everything downstream works on a [`NetworkConfig`] that went through
//! [`validate`], so hot loops never re-check invariants.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// 10 / ln 10, the dB ↔ natural-log scale factor.
pub const ZETA: f64 = 10.0 / std::f64::consts::LN_10;

/// Path-loss, shadowing and fading parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Free-space path loss at 1 m (linear).
    pub kappa: f64,
    /// Path-loss exponent, must exceed 2.
    pub alpha: f64,
    /// Shadowing mean in dB.
    pub mu_db: f64,
    /// Shadowing standard deviation in dB.
    pub sigma_db: f64,
    /// Rate of the exponential fading power gain.
    pub nu: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { kappa: 1.0, alpha: 4.0, mu_db: 0.0, sigma_db: 4.0, nu: 1.0 }
    }
}

/// Battery discretization and broadcast overhead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Battery capacity P_max in watts.
    pub capacity_watts: f64,
    /// Number of battery units L.
    pub levels: u32,
    /// Size of one battery unit, `capacity_watts / levels`. Recomputed by [`validate`].
    pub unit_watts: f64,
    /// Units spent on the battery broadcast at the start of every slot.
    pub broadcast_cost_units: u32,
    /// Slot duration scale factor f; harvest and user rates are multiplied by it.
    pub slot_scale: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self { capacity_watts: 1.0, levels: 1000, unit_watts: 1e-3, broadcast_cost_units: 0, slot_scale: 1.0 }
    }
}

impl BatteryParams {
    /// Largest level usable for data after the broadcast cost is paid.
    pub fn usable_levels(&self) -> u32 {
        self.levels - self.broadcast_cost_units
    }
}

/// Poisson energy arrivals: `rate` bursts per unit slot, each `burst_size` units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestParams {
    pub rate: f64,
    pub burst_size: u32,
}

impl Default for HarvestParams {
    fn default() -> Self {
        Self { rate: 100.0, burst_size: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentParams {
    /// Base-station density per m².
    pub lambda_bs: f64,
    /// Mobile-terminal density per m² (per unit slot).
    pub lambda_mt: f64,
    /// Received power target P_Rx in watts.
    pub p_rx_watts: f64,
    /// Resource blocks per base station.
    pub n_rb: u32,
    /// Per-user transmit power cap of the grid-powered reference, in watts.
    pub ongrid_pmax_watts: f64,
    /// Half-side of the square torus simulation window, in metres.
    pub window_radius_m: f64,
}

impl Default for DeploymentParams {
    fn default() -> Self {
        let cell_area = std::f64::consts::PI * 60.0 * 60.0;
        Self {
            lambda_bs: 1.0 / cell_area,
            lambda_mt: 15.0 / cell_area,
            p_rx_watts: dbm_to_watts(-65.0),
            n_rb: DEFAULT_N_RB,
            ongrid_pmax_watts: 0.05,
            window_radius_m: 300.0,
        }
    }
}

impl DeploymentParams {
    /// Mean cell radius 1/√(π λ_B).
    pub fn mean_cell_radius_m(&self) -> f64 {
        1.0 / (std::f64::consts::PI * self.lambda_bs).sqrt()
    }
}

pub const DEFAULT_N_RB: u32 = 50;

/// The association policy run by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemePolicy {
    /// Availability check against the broadcast level, min-power association,
    /// ascending-power selection.
    ProposedA,
    /// Min-power association ignoring batteries, ascending-power selection.
    WithoutA,
    /// Live battery knowledge, first-come first-served.
    RealTimeA,
    /// Grid-powered base stations with a per-user power cap.
    OnGrid,
}

impl SchemePolicy {
    pub const ALL: [SchemePolicy; 4] =
        [SchemePolicy::ProposedA, SchemePolicy::WithoutA, SchemePolicy::RealTimeA, SchemePolicy::OnGrid];

    pub fn name(self) -> &'static str {
        match self {
            SchemePolicy::ProposedA => "A",
            SchemePolicy::WithoutA => "woA",
            SchemePolicy::RealTimeA => "rtA",
            SchemePolicy::OnGrid => "ongrid",
        }
    }
}

impl fmt::Display for SchemePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchemePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', '/'], "").as_str() {
            "a" | "proposed" | "proposeda" => Ok(SchemePolicy::ProposedA),
            "woa" | "without" | "withouta" => Ok(SchemePolicy::WithoutA),
            "rta" | "realtime" | "realtimea" => Ok(SchemePolicy::RealTimeA),
            "ongrid" | "grid" => Ok(SchemePolicy::OnGrid),
            _ => Err(format!("unknown scheme `{s}` (expected A, woA, rtA or ongrid)")),
        }
    }
}

/// A nonnegative number of battery units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct PowerUnits(pub u32);

impl PowerUnits {
    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for PowerUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} units", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub channel: ChannelParams,
    pub battery: BatteryParams,
    pub harvest: HarvestParams,
    pub deployment: DeploymentParams,
}

impl NetworkConfig {
    /// Full-scale defaults: L = 1000 units of 1 mW, 10 % L harvested per slot.
    pub fn paper_defaults() -> Self {
        Self::default()
    }

    /// Smaller battery for fast runs: L = 200 units of the same 1 mW size.
    pub fn desk_defaults() -> Self {
        let mut cfg = Self::default();
        cfg.battery.levels = 200;
        cfg.battery.capacity_watts = 0.2;
        cfg.harvest.rate = 0.1 * 200.0;
        validate(&cfg).expect("desk defaults are valid")
    }

    /// Harvest burst rate λ_e·f per slot.
    pub fn harvest_rate(&self) -> f64 {
        self.harvest.rate * self.battery.slot_scale
    }

    /// User density λ_MT·f per slot.
    pub fn mt_density(&self) -> f64 {
        self.deployment.lambda_mt * self.battery.slot_scale
    }

    pub fn levels(&self) -> usize {
        self.battery.levels as usize
    }

    pub fn unit_watts(&self) -> f64 {
        self.battery.unit_watts
    }

    /// Mean harvested units per slot.
    pub fn harvest_mean_units(&self) -> f64 {
        self.harvest_rate() * self.harvest.burst_size as f64
    }

    /// Default warmup: twenty battery turnover times.
    pub fn default_warmup_slots(&self) -> u32 {
        (20.0 * self.battery.levels as f64 / self.harvest_mean_units().max(1.0)).ceil() as u32
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidParameter {
    pub field: &'static str,
    pub constraint: String,
}

impl fmt::Display for InvalidParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParameter(Vec<InvalidParameter>),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
}

fn join_violations(v: &[InvalidParameter]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl ConfigError {
    pub fn violations(&self) -> &[InvalidParameter] {
        match self {
            ConfigError::InvalidParameter(v) => v,
            _ => &[],
        }
    }
}

/// Checks every invariant and recomputes derived fields.
///
/// Returns all violations at once rather than stopping at the first.
pub fn validate(config: &NetworkConfig) -> Result<NetworkConfig, ConfigError> {
    let mut errs = Vec::new();
    let mut bad = |field: &'static str, constraint: String| {
        errs.push(InvalidParameter { field, constraint });
    };
    let finite_pos = |x: f64| x.is_finite() && x > 0.0;

    let ch = &config.channel;
    if !finite_pos(ch.kappa) {
        bad("kappa", format!("must be > 0, got {}", ch.kappa));
    }
    if !(ch.alpha.is_finite() && ch.alpha > 2.0) {
        bad("alpha", format!("must be > 2, got {}", ch.alpha));
    }
    if !ch.mu_db.is_finite() {
        bad("mu_db", format!("must be finite, got {}", ch.mu_db));
    }
    if !(ch.sigma_db.is_finite() && ch.sigma_db >= 0.0) {
        bad("sigma_db", format!("must be >= 0, got {}", ch.sigma_db));
    }
    if !finite_pos(ch.nu) {
        bad("nu", format!("must be > 0, got {}", ch.nu));
    }

    let b = &config.battery;
    if !finite_pos(b.capacity_watts) {
        bad("capacity_watts", format!("must be > 0, got {}", b.capacity_watts));
    }
    if b.levels == 0 {
        bad("levels", "must be a positive integer".into());
    }
    if b.broadcast_cost_units >= b.levels {
        bad("broadcast_cost_units", format!("must be < levels ({}), got {}", b.levels, b.broadcast_cost_units));
    }
    if !finite_pos(b.slot_scale) {
        bad("slot_scale", format!("must be > 0, got {}", b.slot_scale));
    }

    let h = &config.harvest;
    if !(h.rate.is_finite() && h.rate >= 0.0) {
        bad("harvest_rate", format!("must be >= 0, got {}", h.rate));
    }
    if h.burst_size == 0 {
        bad("burst_size", "must be >= 1".into());
    }

    let d = &config.deployment;
    if !finite_pos(d.lambda_bs) {
        bad("lambda_bs", format!("must be > 0, got {}", d.lambda_bs));
    }
    if !(d.lambda_mt.is_finite() && d.lambda_mt >= 0.0) {
        bad("lambda_mt", format!("must be >= 0, got {}", d.lambda_mt));
    }
    if !finite_pos(d.p_rx_watts) {
        bad("p_rx_watts", format!("must be > 0, got {}", d.p_rx_watts));
    }
    if d.n_rb == 0 {
        bad("n_rb", "must be a positive integer".into());
    }
    if !finite_pos(d.ongrid_pmax_watts) {
        bad("ongrid_pmax_watts", format!("must be > 0, got {}", d.ongrid_pmax_watts));
    }
    if !finite_pos(d.window_radius_m) {
        bad("window_radius_m", format!("must be > 0, got {}", d.window_radius_m));
    } else if finite_pos(d.lambda_bs) {
        let min = 5.0 * d.mean_cell_radius_m();
        if d.window_radius_m < min * (1.0 - 1e-9) {
            bad("window_radius_m", format!("must be >= 5 mean cell radii ({min:.1} m), got {}", d.window_radius_m));
        }
    }

    if !errs.is_empty() {
        return Err(ConfigError::InvalidParameter(errs));
    }
    let mut out = *config;
    out.battery.unit_watts = b.capacity_watts / b.levels as f64;
    Ok(out)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0 - 3.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Rounds a power up to whole battery units: the smallest `u` with `u·eps >= watts`.
pub fn watts_to_units(watts: f64, eps: f64) -> PowerUnits {
    debug_assert!(eps > 0.0);
    if watts <= 0.0 {
        return PowerUnits(0);
    }
    let mut u = (watts / eps).ceil();
    // the division can land one ulp on the wrong side of an integer
    if u >= 1.0 && (u - 1.0) * eps >= watts {
        u -= 1.0;
    } else if u * eps < watts {
        u += 1.0;
    }
    PowerUnits(u as u32)
}

/// Flat key-value configuration file.
///
/// Every key is optional; absent keys fall back to the full-scale defaults.
/// Keys carry their unit in the name and unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kappa: Option<f64>,
    pub alpha: Option<f64>,
    pub mu_db: Option<f64>,
    pub sigma_db: Option<f64>,
    pub nu: Option<f64>,
    pub p_max_w: Option<f64>,
    pub levels: Option<u32>,
    pub broadcast_cost_units: Option<u32>,
    pub slot_scale: Option<f64>,
    /// Burst arrivals per unit slot. Exclusive with `harvest_mean_units`.
    pub harvest_rate: Option<f64>,
    /// Mean harvested units per unit slot; the burst rate becomes this / `burst_size`.
    pub harvest_mean_units: Option<f64>,
    pub burst_size: Option<u32>,
    /// Exclusive with `bs_radius_m`.
    pub lambda_bs_per_m2: Option<f64>,
    /// Mean cell radius R, λ_B = 1/(π R²).
    pub bs_radius_m: Option<f64>,
    pub lambda_mt_per_m2: Option<f64>,
    pub p_rx_dbm: Option<f64>,
    pub n_rb: Option<u32>,
    pub ongrid_pmax_w: Option<f64>,
    /// Defaults to five mean cell radii.
    pub window_radius_m: Option<f64>,
}

/// Keys accepted in a config file, in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "kappa",
    "alpha",
    "mu_db",
    "sigma_db",
    "nu",
    "p_max_w",
    "levels",
    "broadcast_cost_units",
    "slot_scale",
    "harvest_rate",
    "harvest_mean_units",
    "burst_size",
    "lambda_bs_per_m2",
    "bs_radius_m",
    "lambda_mt_per_m2",
    "p_rx_dbm",
    "n_rb",
    "ongrid_pmax_w",
    "window_radius_m",
];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Desk-scale base: L = 200 units of 1 mW and 10 % L harvest.
    pub fn desk_scale() -> Self {
        Self { levels: Some(200), p_max_w: Some(0.2), ..Self::default() }
    }

    /// Sets one key from its textual value, as used by parameter sweeps.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
        let as_u32 = |v: f64| -> Result<u32, ConfigError> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(ConfigError::Parse(format!("`{key}` needs a nonnegative integer, got {v}")))
            }
        };
        match key {
            "kappa" => self.kappa = Some(value),
            "alpha" => self.alpha = Some(value),
            "mu_db" => self.mu_db = Some(value),
            "sigma_db" => self.sigma_db = Some(value),
            "nu" => self.nu = Some(value),
            "p_max_w" => self.p_max_w = Some(value),
            "levels" => self.levels = Some(as_u32(value)?),
            "broadcast_cost_units" => self.broadcast_cost_units = Some(as_u32(value)?),
            "slot_scale" => self.slot_scale = Some(value),
            "harvest_rate" => {
                self.harvest_rate = Some(value);
                self.harvest_mean_units = None;
            }
            "harvest_mean_units" => {
                self.harvest_mean_units = Some(value);
                self.harvest_rate = None;
            }
            "burst_size" => self.burst_size = Some(as_u32(value)?),
            "lambda_bs_per_m2" => {
                self.lambda_bs_per_m2 = Some(value);
                self.bs_radius_m = None;
            }
            "bs_radius_m" => {
                self.bs_radius_m = Some(value);
                self.lambda_bs_per_m2 = None;
            }
            "lambda_mt_per_m2" => self.lambda_mt_per_m2 = Some(value),
            "p_rx_dbm" => self.p_rx_dbm = Some(value),
            "n_rb" => self.n_rb = Some(as_u32(value)?),
            "ongrid_pmax_w" => self.ongrid_pmax_w = Some(value),
            "window_radius_m" => self.window_radius_m = Some(value),
            _ => {
                return Err(ConfigError::Parse(format!(
                    "unknown parameter `{key}` (known: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Resolves defaults and unit conversions, then validates.
    pub fn resolve(&self) -> Result<NetworkConfig, ConfigError> {
        let mut exclusive = Vec::new();
        if self.harvest_rate.is_some() && self.harvest_mean_units.is_some() {
            exclusive.push(InvalidParameter {
                field: "harvest_rate",
                constraint: "give either harvest_rate or harvest_mean_units, not both".into(),
            });
        }
        if self.lambda_bs_per_m2.is_some() && self.bs_radius_m.is_some() {
            exclusive.push(InvalidParameter {
                field: "lambda_bs_per_m2",
                constraint: "give either lambda_bs_per_m2 or bs_radius_m, not both".into(),
            });
        }
        if !exclusive.is_empty() {
            return Err(ConfigError::InvalidParameter(exclusive));
        }

        let mut cfg = NetworkConfig::default();
        let ch = &mut cfg.channel;
        ch.kappa = self.kappa.unwrap_or(ch.kappa);
        ch.alpha = self.alpha.unwrap_or(ch.alpha);
        ch.mu_db = self.mu_db.unwrap_or(ch.mu_db);
        ch.sigma_db = self.sigma_db.unwrap_or(ch.sigma_db);
        ch.nu = self.nu.unwrap_or(ch.nu);

        let b = &mut cfg.battery;
        b.capacity_watts = self.p_max_w.unwrap_or(b.capacity_watts);
        b.levels = self.levels.unwrap_or(b.levels);
        b.broadcast_cost_units = self.broadcast_cost_units.unwrap_or(0);
        b.slot_scale = self.slot_scale.unwrap_or(1.0);

        cfg.harvest.burst_size = self.burst_size.unwrap_or(1);
        let burst = cfg.harvest.burst_size.max(1) as f64;
        cfg.harvest.rate = match (self.harvest_rate, self.harvest_mean_units) {
            (Some(r), _) => r,
            (None, Some(mean)) => mean / burst,
            (None, None) => 0.1 * b.levels as f64 / burst,
        };

        let d = &mut cfg.deployment;
        if let Some(r) = self.bs_radius_m {
            d.lambda_bs = 1.0 / (std::f64::consts::PI * r * r);
        } else if let Some(l) = self.lambda_bs_per_m2 {
            d.lambda_bs = l;
        }
        d.lambda_mt = self.lambda_mt_per_m2.unwrap_or(d.lambda_mt);
        if let Some(dbm) = self.p_rx_dbm {
            d.p_rx_watts = dbm_to_watts(dbm);
        }
        d.n_rb = self.n_rb.unwrap_or(d.n_rb);
        d.ongrid_pmax_watts = self.ongrid_pmax_w.unwrap_or(d.ongrid_pmax_watts);
        d.window_radius_m = match self.window_radius_m {
            Some(w) => w,
            None if d.lambda_bs > 0.0 && d.lambda_bs.is_finite() => (5.0 * d.mean_cell_radius_m()).max(300.0),
            None => 300.0,
        };
        validate(&cfg)
    }
}

/// `key = value` lines describing a resolved config, for output provenance.
pub fn describe(cfg: &NetworkConfig) -> Vec<(String, String)> {
    let c = &cfg.channel;
    let b = &cfg.battery;
    let d = &cfg.deployment;
    vec![
        ("kappa".into(), c.kappa.to_string()),
        ("alpha".into(), c.alpha.to_string()),
        ("mu_db".into(), c.mu_db.to_string()),
        ("sigma_db".into(), c.sigma_db.to_string()),
        ("nu".into(), c.nu.to_string()),
        ("p_max_w".into(), b.capacity_watts.to_string()),
        ("levels".into(), b.levels.to_string()),
        ("unit_w".into(), b.unit_watts.to_string()),
        ("broadcast_cost_units".into(), b.broadcast_cost_units.to_string()),
        ("slot_scale".into(), b.slot_scale.to_string()),
        ("harvest_rate".into(), cfg.harvest.rate.to_string()),
        ("burst_size".into(), cfg.harvest.burst_size.to_string()),
        ("lambda_bs_per_m2".into(), d.lambda_bs.to_string()),
        ("lambda_mt_per_m2".into(), d.lambda_mt.to_string()),
        ("p_rx_dbm".into(), watts_to_dbm(d.p_rx_watts).to_string()),
        ("n_rb".into(), d.n_rb.to_string()),
        ("ongrid_pmax_w".into(), d.ongrid_pmax_watts.to_string()),
        ("window_radius_m".into(), d.window_radius_m.to_string()),
    ]
}
