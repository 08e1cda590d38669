use std::collections::HashMap;
use std::process::{Command, Output};

use ehcell_core::config::ConfigFile;
use ehcell_core::geometry::intensity_bs;

fn ehcell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehcell")).args(args).output().expect("binary runs")
}

fn ehcell_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehcell")).args(args).env("EHCELL_THREADS", threads).output().expect("binary runs")
}

struct Csv {
    provenance: HashMap<String, String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn parse(out: &Output) -> Self {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout.clone()).unwrap();
        let provenance = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = reader.headers().unwrap().iter().map(String::from).collect();
        let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
        Self { provenance, header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
    }

    fn value(&self, quantity: &str) -> f64 {
        let row = self.rows.iter().find(|r| r[0] == quantity).unwrap();
        row[self.col_or("value").min(self.col_or("mean"))].parse().unwrap()
    }

    fn col_or(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or(usize::MAX)
    }

    fn f(&self, row: usize, name: &str) -> f64 {
        self.rows[row][self.col(name)].parse().unwrap()
    }
}

#[test]
fn analytic_reports_outage_and_full_provenance() {
    let csv = Csv::parse(&ehcell(&["analytic", "--desk-scale"]));
    assert_eq!(csv.header, ["quantity", "index", "value"]);
    for key in ["ehcell", "command", "alpha", "levels", "p_rx_dbm", "n_rb", "window_radius_m", "seed"] {
        assert!(csv.provenance.contains_key(key), "missing {key}");
    }
    let outage = csv.value("outage");
    assert!(outage > 0.0 && outage < 1.0);
    assert!(csv.value("iterations") <= 50.0);
    let battery: f64 = csv.rows.iter().filter(|r| r[0] == "battery").map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((battery - 1.0).abs() < 1e-12);
    let coverage: Vec<f64> = csv.rows.iter().filter(|r| r[0] == "coverage").map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(coverage.len(), 5);
    assert!(coverage.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn outage_without_users_is_the_closed_form() {
    let csv = Csv::parse(&ehcell(&["analytic", "--desk-scale", "--set", "lambda_mt_per_m2=0"]));
    let mut file = ConfigFile::desk_scale();
    file.lambda_mt_per_m2 = Some(0.0);
    let cfg = file.resolve().unwrap();
    let exact = (-intensity_bs(cfg.battery.capacity_watts, &cfg)).exp();
    assert!((csv.value("outage") - exact).abs() < 1e-9, "{} vs {exact}", csv.value("outage"));
}

#[test]
fn bad_config_exits_with_field_diagnostics() {
    let dir = std::env::temp_dir().join(format!("ehcell-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, "alpha = 1.5\nsigma_db = -2\n").unwrap();
    let out = ehcell(&["analytic", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha") && err.contains("sigma_db"), "{err}");

    std::fs::write(&path, "p_rx = -65\n").unwrap();
    assert_eq!(ehcell(&["analytic", "--config", path.to_str().unwrap()]).status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(ehcell(&["simulate", "--trials", "0"]).status.code(), Some(1));
    assert_eq!(ehcell(&["simulate", "--scheme", "nope"]).status.code(), Some(1));
    assert_eq!(ehcell(&["sweep", "--desk-scale", "--grid", "colour=1,2"]).status.code(), Some(1));
    assert_eq!(ehcell(&["sweep", "--desk-scale"]).status.code(), Some(1));
    assert_eq!(ehcell(&["analytic", "--desk-scale", "--paper-scale"]).status.code(), Some(1));
    assert_eq!(ehcell_env(&["analytic", "--desk-scale"], "0").status.code(), Some(1));
}

#[test]
fn nonconvergence_exits_with_two() {
    let out = ehcell(&["analytic", "--desk-scale", "--max-iterations", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    assert!(ehcell(&["analytic", "--desk-scale", "--max-iterations", "50"]).status.success());
}

#[test]
fn simulate_is_reproducible_from_config_and_seed() {
    let args = ["simulate", "--desk-scale", "--trials", "3", "--slots", "20", "--warmup", "20", "--seed", "9"];
    let one = ehcell_env(&args, "1");
    let many = ehcell_env(&args, "3");
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    let other =
        ehcell(&["simulate", "--desk-scale", "--trials", "3", "--slots", "20", "--warmup", "20", "--seed", "10"]);
    assert_ne!(one.stdout, other.stdout);

    let csv = Csv::parse(&one);
    assert_eq!(csv.header, ["quantity", "threshold_db", "mean", "stderr", "samples"]);
    assert_eq!(csv.provenance["seed"], "9");
    assert_eq!(csv.provenance["trials"], "3");
    for (i, row) in csv.rows.iter().enumerate() {
        assert!(!row[3].is_empty(), "{row:?} lacks a standard error");
        assert!(csv.f(i, "samples") > 0.0);
    }
}

#[test]
fn ongrid_outage_ignores_the_harvest_rate() {
    let run = |rate: &str| {
        let set = format!("harvest_rate={rate}");
        let args = ["simulate", "--desk-scale", "--scheme", "ongrid", "--trials", "6", "--slots", "50", "--set", &set];
        let csv = Csv::parse(&ehcell(&args));
        (csv.value("outage"), csv.rows[0][csv.col("stderr")].parse::<f64>().unwrap())
    };
    let (a, sa) = run("5");
    let (b, sb) = run("40");
    assert!((a - b).abs() <= 3.0 * sa.hypot(sb) + 1e-12, "{a} ± {sa} vs {b} ± {sb}");
}

#[test]
fn output_file_matches_stdout() {
    let dir = std::env::temp_dir().join(format!("ehcell-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("a.csv");
    let out = ehcell(&["analytic", "--desk-scale", "--out", path.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), ehcell(&["analytic", "--desk-scale"]).stdout);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn received_power_sweep_orders_the_schemes() {
    let args = [
        "sweep",
        "--desk-scale",
        "--preset",
        "fig6",
        "--schemes",
        "A,woA,rtA,ongrid",
        "--trials",
        "3",
        "--slots",
        "40",
    ];
    let csv = Csv::parse(&ehcell(&args));
    for key in ["grid.p_rx_dbm", "mode", "trials"] {
        assert!(csv.provenance.contains_key(key), "missing {key}");
    }
    assert_eq!(csv.rows.len(), 5 * 4);
    let (scheme, mean) = (csv.col("scheme"), csv.col("mc_mean"));
    for point in csv.rows.chunks(4) {
        let get = |name: &str| point.iter().find(|r| r[scheme] == name).unwrap()[mean].parse::<f64>().unwrap();
        assert!(get("A") <= get("woA"), "{point:?}");
        assert!(!point.iter().find(|r| r[scheme] == "A").unwrap()[csv.col("analytic")].is_empty());
    }
    let a: Vec<f64> =
        (0..csv.rows.len()).filter(|&i| csv.rows[i][scheme] == "A").map(|i| csv.f(i, "analytic")).collect();
    assert!(a.windows(2).all(|w| w[1] > w[0]), "outage rises with the required power: {a:?}");
}

#[test]
fn threshold_sweep_emits_coverage() {
    let csv =
        Csv::parse(&ehcell(&["sweep", "--desk-scale", "--preset", "fig8", "--schemes", "A", "--mode", "analytic"]));
    assert_eq!(csv.header[0], "threshold_db");
    assert_eq!(csv.rows.len(), 5);
    assert!(csv.rows.iter().all(|r| r[csv.col("metric")] == "coverage" && r[csv.col("mc_mean")].is_empty()));
    let cov: Vec<f64> = (0..5).map(|i| csv.f(i, "analytic")).collect();
    assert!(cov.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn two_axis_grid_is_a_cartesian_product() {
    let args = [
        "sweep",
        "--desk-scale",
        "--mode",
        "analytic",
        "--schemes",
        "A",
        "--grid",
        "broadcast_cost_units=5,10",
        "--grid",
        "slot_scale=0.5,1,2",
    ];
    let csv = Csv::parse(&ehcell(&args));
    assert_eq!(&csv.header[..2], ["broadcast_cost_units", "slot_scale"]);
    assert_eq!(csv.rows.len(), 6);
    for cost in 0..2 {
        let outage: Vec<f64> = (0..3).map(|j| csv.f(3 * cost + j, "analytic")).collect();
        assert!(outage.windows(2).all(|w| w[1] <= w[0]), "longer slots harvest more: {outage:?}");
    }
}

#[test]
fn map_has_the_requested_resolution() {
    let csv = Csv::parse(&ehcell(&["map", "--desk-scale", "--resolution", "4", "--slots", "10", "--warmup", "10"]));
    assert_eq!(csv.header, ["x", "y", "outage_a", "outage_woa", "gain"]);
    assert_eq!(csv.rows.len(), 16);
    assert_eq!(csv.provenance["resolution"], "4");
    for i in 0..16 {
        assert!(csv.f(i, "gain") <= 1.0);
        assert!((0.0..=1.0).contains(&csv.f(i, "outage_a")));
    }
}
