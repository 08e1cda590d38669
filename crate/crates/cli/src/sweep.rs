//! Parameter sweeps over config keys and SIR thresholds.

use clap::ValueEnum;
use ehcell_core::analytic::{coverage_probability, ongrid_outage_probability, outage_probability, solve_stationary};
use ehcell_core::config::{ConfigFile, CONFIG_KEYS};
use ehcell_core::simulator::{run_campaign, SimOptions, TrialEstimate};
use ehcell_core::SchemePolicy;
use rayon::prelude::*;

use crate::output::{num, opt, Table};
use crate::Failure;

/// Sweep axis that varies the SIR threshold instead of a config key.
pub const THRESHOLD_AXIS: &str = "threshold_db";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Analytic,
    Simulate,
    Both,
}

impl Mode {
    fn analytic(self) -> bool {
        self != Mode::Simulate
    }

    fn simulate(self) -> bool {
        self != Mode::Analytic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// burst size N_e at fixed mean harvest
    Fig4,
    /// mean cell radius
    Fig5,
    /// required received power
    Fig6,
    /// slot scale f against broadcast cost
    Fig7,
    /// SIR threshold
    Fig8,
}

impl Preset {
    pub fn axes(self) -> Vec<(String, Vec<f64>)> {
        let axis = |k: &str, v: &[f64]| (k.to_string(), v.to_vec());
        match self {
            Preset::Fig4 => vec![axis("burst_size", &[1.0, 20.0, 40.0, 60.0, 80.0])],
            Preset::Fig5 => vec![axis("bs_radius_m", &[40.0, 50.0, 60.0, 70.0, 85.0])],
            Preset::Fig6 => vec![axis("p_rx_dbm", &[-70.0, -65.0, -60.0, -55.0, -50.0])],
            Preset::Fig7 => vec![
                axis("broadcast_cost_units", &[5.0, 10.0, 20.0, 50.0]),
                axis("slot_scale", &[0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0]),
            ],
            Preset::Fig8 => vec![axis(THRESHOLD_AXIS, &[-5.0, 0.0, 5.0, 10.0, 15.0])],
        }
    }
}

pub struct SweepSpec {
    pub base: ConfigFile,
    pub axes: Vec<(String, Vec<f64>)>,
    pub schemes: Vec<SchemePolicy>,
    pub mode: Mode,
    pub sim: SimOptions,
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), Failure> {
        if self.axes.is_empty() {
            return Err(Failure::Usage("a sweep needs --preset or at least one --grid".into()));
        }
        for (key, values) in &self.axes {
            if key != THRESHOLD_AXIS && !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Failure::Usage(format!(
                    "unknown sweep parameter `{key}` (known: {}, {THRESHOLD_AXIS})",
                    CONFIG_KEYS.join(", ")
                )));
            }
            if values.is_empty() {
                return Err(Failure::Usage(format!("empty grid for `{key}`")));
            }
        }
        if self.schemes.is_empty() {
            return Err(Failure::Usage("no schemes selected".into()));
        }
        Ok(())
    }
}

struct PointResult {
    values: Vec<f64>,
    thresholds_db: Vec<f64>,
    iterations: Option<usize>,
    /// per threshold (or a single entry), analytic value for scheme A
    analytic_a: Vec<f64>,
    ongrid: f64,
    runs: Vec<Option<TrialEstimate>>,
}

fn cartesian(axes: &[(String, Vec<f64>)]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, (_, values)| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn run(spec: &SweepSpec) -> Result<Table, Failure> {
    spec.check()?;
    let (config_axes, threshold_axis): (Vec<_>, Vec<_>) =
        spec.axes.iter().cloned().partition(|(k, _)| k != THRESHOLD_AXIS);
    let thresholds_db: Vec<f64> = threshold_axis.into_iter().flat_map(|(_, v)| v).collect();
    let metric = if thresholds_db.is_empty() { "outage" } else { "coverage" };

    let points = cartesian(&config_axes);
    let results = points
        .par_iter()
        .map(|values| -> Result<PointResult, Failure> {
            let mut file = spec.base.clone();
            for ((key, _), &v) in config_axes.iter().zip(values) {
                file.set(key, v)?;
            }
            let cfg = file.resolve()?;
            let mut point = PointResult {
                values: values.clone(),
                thresholds_db: thresholds_db.clone(),
                iterations: None,
                analytic_a: Vec::new(),
                ongrid: ongrid_outage_probability(&cfg),
                runs: Vec::new(),
            };
            if spec.mode.analytic() {
                let sol = solve_stationary(&cfg)?;
                point.iterations = Some(sol.iterations);
                point.analytic_a = if thresholds_db.is_empty() {
                    vec![outage_probability(&sol.battery, &sol.map, &cfg)]
                } else {
                    thresholds_db
                        .iter()
                        .map(|&t| coverage_probability(db_to_linear(t), &sol.battery, &sol.consumption, &sol.map, &cfg))
                        .collect()
                };
            }
            point.runs = spec
                .schemes
                .par_iter()
                .map(|&scheme| -> Result<Option<TrialEstimate>, Failure> {
                    if !spec.mode.simulate() {
                        return Ok(None);
                    }
                    let thresholds = thresholds_db.iter().map(|&t| db_to_linear(t)).collect();
                    let opts = SimOptions { scheme, thresholds, ..spec.sim.clone() };
                    Ok(Some(run_campaign(&cfg, &opts)?))
                })
                .collect::<Result<_, _>>()?;
            Ok(point)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let base_cfg = spec.base.resolve()?;
    let mut table = Table::new("sweep", &base_cfg, spec.sim.seed);
    table.note("mode", format!("{:?}", spec.mode).to_lowercase());
    table.note("trials", spec.sim.trials);
    table.note("slots", spec.sim.slots);
    table.note("warmup", spec.sim.warmup.map(|w| w.to_string()).unwrap_or_else(|| "default".into()));
    for (key, values) in &spec.axes {
        table.note(&format!("grid.{key}"), values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    }

    let mut header: Vec<&str> = config_axes.iter().map(|(k, _)| k.as_str()).collect();
    if metric == "coverage" {
        header.push(THRESHOLD_AXIS);
    }
    header.extend(["scheme", "metric", "analytic", "mc_mean", "mc_stderr", "mc_samples", "rejection", "iterations"]);
    table.columns(&header);

    for point in &results {
        let n_rows = point.thresholds_db.len().max(1);
        for (scheme, run) in spec.schemes.iter().zip(&point.runs) {
            for i in 0..n_rows {
                let mut row: Vec<String> = point.values.iter().map(|&v| num(v)).collect();
                if metric == "coverage" {
                    row.push(num(point.thresholds_db[i]));
                }
                let analytic = match scheme {
                    SchemePolicy::ProposedA => point.analytic_a.get(i).copied(),
                    SchemePolicy::OnGrid if metric == "outage" && spec.mode.analytic() => Some(point.ongrid),
                    _ => None,
                };
                let (mean, stderr, samples) = match run {
                    Some(est) if metric == "outage" => {
                        (est.outage.mean(), est.outage_stderr(), Some(est.outage.samples))
                    }
                    Some(est) => {
                        let p = &est.coverage[i].1;
                        (p.mean(), p.stderr(), Some(p.samples))
                    }
                    None => (None, None, None),
                };
                row.extend([
                    scheme.name().to_string(),
                    metric.to_string(),
                    opt(analytic),
                    opt(mean),
                    opt(stderr),
                    samples.map(|s| s.to_string()).unwrap_or_default(),
                    opt(run.as_ref().and_then(|e| e.rejection.mean())),
                    point.iterations.map(|n| n.to_string()).unwrap_or_default(),
                ]);
                table.push(row);
            }
        }
    }
    Ok(table)
}
