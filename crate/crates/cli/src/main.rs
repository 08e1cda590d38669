//! `ehcell`: analysis, simulation, sweeps and outage maps as CSV.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! non-convergence.

mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ehcell_core::analytic::{
    coverage_probability, ongrid_outage_probability, outage_probability, solve_stationary_with, AnalyticError,
    SolverOptions,
};
use ehcell_core::config::ConfigFile;
use ehcell_core::simulator::{outage_map, run_campaign, MapOptions, SimError, SimOptions};
use ehcell_core::{ConfigError, NetworkConfig, SchemePolicy};

use output::{num, opt, Table};
use sweep::{Mode, Preset, SweepSpec};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(ConfigError),
    Numerical(String),
    Io(std::io::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) | Failure::Numerical(msg) => f.write_str(msg),
            Failure::Config(ConfigError::InvalidParameter(list)) => {
                writeln!(f, "invalid configuration:")?;
                for p in list {
                    writeln!(f, "  {p}")?;
                }
                Ok(())
            }
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "output: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<AnalyticError> for Failure {
    fn from(e: AnalyticError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NoTrials => Failure::Usage(e.to_string()),
            SimError::Analytic(a) => a.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

#[derive(Parser)]
#[command(name = "ehcell", version = output::VERSION, about = "Power-availability-aware cell association: analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Setup {
    /// TOML config file; absent keys take the defaults of the chosen scale
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// L = 200 units of 1 mW
    #[arg(long, conflicts_with = "paper_scale")]
    desk_scale: bool,
    /// Full-scale defaults, L = 1000 units of 1 mW (the default)
    #[arg(long)]
    paper_scale: bool,
    /// Override one config key, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, f64)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path, stdout when absent
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl Setup {
    fn config_file(&self) -> Result<ConfigFile, Failure> {
        let mut file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        if self.desk_scale {
            let desk = ConfigFile::desk_scale();
            file.levels = file.levels.or(desk.levels);
            file.p_max_w = file.p_max_w.or(desk.p_max_w);
        }
        for (key, value) in &self.set {
            file.set(key, *value)?;
        }
        Ok(file)
    }

    fn resolve(&self) -> Result<NetworkConfig, Failure> {
        Ok(self.config_file()?.resolve()?)
    }
}

#[derive(Args, Clone)]
struct Run {
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Recorded slots per trial
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    slots: u32,
    /// Warm-up slots per trial; defaults to a multiple of the battery fill time
    #[arg(long)]
    warmup: Option<u32>,
}

impl Run {
    fn options(&self, scheme: SchemePolicy, seed: u64, thresholds_db: &[f64]) -> SimOptions {
        SimOptions {
            trials: self.trials as usize,
            slots: self.slots,
            warmup: self.warmup,
            seed,
            thresholds: thresholds_db.iter().map(|&t| db_to_linear(t)).collect(),
            ..SimOptions::desk(scheme)
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stationary battery law, outage and coverage from the analysis
    Analytic {
        #[command(flatten)]
        setup: Setup,
        /// SIR thresholds in dB
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,0,5,10,15")]
        thresholds_db: Vec<f64>,
        /// Fixed-point iteration budget
        #[arg(long, default_value_t = SolverOptions::default().max_iterations)]
        max_iterations: usize,
    },
    /// Monte-Carlo campaign for one scheme
    Simulate {
        #[command(flatten)]
        setup: Setup,
        #[command(flatten)]
        run: Run,
        /// A, woA, rtA or ongrid
        #[arg(long, default_value = "A")]
        scheme: SchemePolicy,
        /// SIR thresholds in dB
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,0,5,10,15")]
        thresholds_db: Vec<f64>,
    },
    /// Grid of analyses and campaigns, one CSV row per point and scheme
    Sweep {
        #[command(flatten)]
        setup: Setup,
        #[command(flatten)]
        run: Run,
        /// Predefined grid; combined with any --grid axes
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Swept axis as KEY=v1,v2,...; `threshold_db` sweeps the SIR threshold
        #[arg(long = "grid", value_name = "KEY=V1,V2", value_parser = parse_grid, allow_hyphen_values = true)]
        grid: Vec<(String, Vec<f64>)>,
        #[arg(long, value_delimiter = ',', default_value = "A,woA,rtA,ongrid")]
        schemes: Vec<SchemePolicy>,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
    },
    /// Per-location outage gain of A over w/o-A on one BS realization
    Map {
        #[command(flatten)]
        setup: Setup,
        /// Grid points per side
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..=1000))]
        resolution: u64,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
        slots: u32,
        #[arg(long)]
        warmup: Option<u32>,
    },
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let value = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((key.trim().to_string(), value))
}

fn parse_grid(s: &str) -> Result<(String, Vec<f64>), String> {
    let (key, values) = s.split_once('=').ok_or_else(|| format!("expected KEY=V1,V2,..., got `{s}`"))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("`{v}` is not a number")))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok((key.trim().to_string(), values))
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn analytic(setup: &Setup, thresholds_db: &[f64], max_iterations: usize) -> Result<Table, Failure> {
    let cfg = setup.resolve()?;
    let sol = solve_stationary_with(&cfg, SolverOptions { max_iterations, ..SolverOptions::default() })?;
    let mut t = Table::new("analytic", &cfg, setup.seed);
    t.columns(&["quantity", "index", "value"]);
    let mut row = |q: &str, i: String, v: f64| t.push(vec![q.to_string(), i, num(v)]);
    row("iterations", String::new(), sol.iterations as f64);
    row("residual", String::new(), sol.residual);
    row("outage", String::new(), outage_probability(&sol.battery, &sol.map, &cfg));
    row("ongrid_outage", String::new(), ongrid_outage_probability(&cfg));
    let v = sol.battery.probabilities();
    row("mean_level", String::new(), v.iter().enumerate().map(|(l, p)| l as f64 * p).sum());
    for &db in thresholds_db {
        let c = coverage_probability(db_to_linear(db), &sol.battery, &sol.consumption, &sol.map, &cfg);
        row("coverage", num(db), c);
    }
    for (l, &p) in v.iter().enumerate() {
        row("battery", l.to_string(), p);
    }
    for (l, &p) in sol.map.coverage().iter().enumerate() {
        row("p_cov_units", l.to_string(), p);
    }
    Ok(t)
}

fn simulate(setup: &Setup, run: &Run, scheme: SchemePolicy, thresholds_db: &[f64]) -> Result<Table, Failure> {
    let cfg = setup.resolve()?;
    let opts = run.options(scheme, setup.seed, thresholds_db);
    let est = run_campaign(&cfg, &opts)?;
    let mut t = Table::new("simulate", &cfg, setup.seed);
    t.note("scheme", scheme);
    t.note("trials", opts.trials);
    t.note("slots", opts.slots);
    t.note("warmup", opts.warmup_for(&cfg));
    t.columns(&["quantity", "threshold_db", "mean", "stderr", "samples"]);
    let mut row = |q: &str, db: String, mean: Option<f64>, se: Option<f64>, n: u64| {
        t.push(vec![q.to_string(), db, opt(mean), opt(se), n.to_string()]);
    };
    row("outage", String::new(), est.outage.mean(), est.outage_stderr(), est.outage.samples);
    row("unassociated", String::new(), est.unassociated.mean(), est.unassociated.stderr(), est.unassociated.samples);
    row("rejection", String::new(), est.rejection.mean(), est.rejection.stderr(), est.rejection.samples);
    for (&db, (_, p)) in thresholds_db.iter().zip(&est.coverage) {
        row("coverage", num(db), p.mean(), p.stderr(), p.samples);
    }
    Ok(t)
}

fn map(setup: &Setup, resolution: usize, slots: u32, warmup: Option<u32>) -> Result<Table, Failure> {
    let cfg = setup.resolve()?;
    let m = outage_map(&cfg, &MapOptions { resolution, slots, warmup, seed: setup.seed })?;
    let mut t = Table::new("map", &cfg, setup.seed);
    t.note("resolution", resolution);
    t.note("slots", slots);
    t.note("base_stations", m.bs.len());
    t.columns(&["x", "y", "outage_a", "outage_woa", "gain"]);
    for c in &m.cells {
        t.push(vec![num(c.x), num(c.y), num(c.outage_a), num(c.outage_woa), num(c.gain)]);
    }
    Ok(t)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (table, out) = match cli.command {
        Command::Analytic { setup, thresholds_db, max_iterations } => {
            (analytic(&setup, &thresholds_db, max_iterations)?, setup.out)
        }
        Command::Simulate { setup, run, scheme, thresholds_db } => {
            (simulate(&setup, &run, scheme, &thresholds_db)?, setup.out)
        }
        Command::Sweep { setup, run, preset, grid, schemes, mode } => {
            let mut axes = preset.map(Preset::axes).unwrap_or_default();
            axes.extend(grid);
            let spec = SweepSpec {
                base: setup.config_file()?,
                axes,
                schemes,
                mode,
                sim: run.options(SchemePolicy::ProposedA, setup.seed, &[]),
            };
            (sweep::run(&spec)?, setup.out)
        }
        Command::Map { setup, resolution, slots, warmup } => {
            (map(&setup, resolution as usize, slots, warmup)?, setup.out)
        }
    };
    match table.write_to(out.as_deref()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("EHCELL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("EHCELL_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match init_threads().and_then(|_| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
