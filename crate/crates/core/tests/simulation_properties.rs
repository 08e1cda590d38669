use ehcell_core::analytic::{ongrid_outage_probability, AvailabilityMap};
use ehcell_core::config::{NetworkConfig, SchemePolicy};
use ehcell_core::simulator::{
    run_campaign, run_trial, run_trial_observed, units, SimOptions, SlotOutcome, TrialEstimate,
};
use proptest::prelude::*;

fn short(scheme: SchemePolicy, trials: usize) -> SimOptions {
    SimOptions { trials, slots: 20, warmup: Some(20), ..SimOptions::desk(scheme) }
}

fn check_slot(cfg: &NetworkConfig, scheme: SchemePolicy, out: &SlotOutcome) {
    let levels = cfg.battery.levels;
    let cost = cfg.battery.broadcast_cost_units;
    let mut served = vec![0u32; out.bs.len()];
    for mt in &out.mts {
        assert!(!mt.served || mt.bs.is_some(), "served without a BS");
        if mt.served {
            served[mt.bs.unwrap() as usize] += units(mt.p);
        }
    }
    for (k, bs) in out.bs.iter().enumerate() {
        assert_eq!(bs.paid, bs.start.min(cost));
        assert_eq!(bs.usable, bs.start - bs.paid);
        assert!(bs.start <= levels && bs.end <= levels);
        if scheme == SchemePolicy::OnGrid {
            assert_eq!(bs.end, bs.start);
            continue;
        }
        assert_eq!(bs.consumed, served[k], "consumption is the served demand");
        assert!(bs.consumed + bs.paid <= bs.start);
        assert_eq!(bs.end, (bs.start - bs.paid - bs.consumed + bs.harvest).min(levels));
    }
}

#[test]
fn energy_is_conserved_every_slot() {
    let mut cfg = NetworkConfig::desk_defaults();
    cfg.battery.broadcast_cost_units = 3;
    for scheme in SchemePolicy::ALL {
        let opts = short(scheme, 1);
        let mut slots = 0;
        run_trial_observed(&cfg, &opts, 5, |out, _| {
            check_slot(&cfg, scheme, out);
            slots += 1;
        })
        .unwrap();
        assert_eq!(slots, 40);
    }
}

#[test]
fn scheme_a_respects_availability() {
    let cfg = NetworkConfig::desk_defaults();
    let map = AvailabilityMap::build(&cfg).unwrap();
    let opts = short(SchemePolicy::ProposedA, 1);
    run_trial_observed(&cfg, &opts, 8, |out, _| {
        for mt in &out.mts {
            if let Some(k) = mt.bs {
                assert!(map.is_available(mt.p, out.bs[k as usize].usable));
            }
        }
    })
    .unwrap();
}

#[test]
fn campaigns_are_bit_identical_across_thread_counts() {
    let cfg = NetworkConfig::desk_defaults();
    let thresholds = vec![0.5, 1.0, 4.0];
    let opts = SimOptions { thresholds, ..short(SchemePolicy::RealTimeA, 6) };
    let run = |threads: usize| -> TrialEstimate {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_campaign(&cfg, &opts).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn campaign_pools_its_trials() {
    let cfg = NetworkConfig::desk_defaults();
    let opts = SimOptions { seed: 30, ..short(SchemePolicy::WithoutA, 3) };
    let pooled = run_campaign(&cfg, &opts).unwrap();
    let mut manual = run_trial(&cfg, &opts, 30).unwrap();
    for seed in 31..33 {
        manual.merge(&run_trial(&cfg, &opts, seed).unwrap());
    }
    assert_eq!(pooled, manual);
    assert_eq!(pooled.outage_by_trial.len(), 3);
}

#[test]
fn standard_error_shrinks_with_the_square_root_of_trials() {
    let cfg = NetworkConfig::desk_defaults();
    let small = run_campaign(&cfg, &short(SchemePolicy::ProposedA, 100)).unwrap();
    let large = run_campaign(&cfg, &SimOptions { seed: 1000, ..short(SchemePolicy::ProposedA, 400) }).unwrap();
    let binomial = small.outage.stderr().unwrap() / large.outage.stderr().unwrap();
    assert!((binomial / 2.0 - 1.0).abs() < 0.2, "binomial ratio {binomial}");
    let clustered = small.outage_stderr().unwrap() / large.outage_stderr().unwrap();
    assert!((clustered / 2.0 - 1.0).abs() < 0.2, "between-trial ratio {clustered}");
}

#[test]
fn availability_never_hurts() {
    let cfg = NetworkConfig::desk_defaults();
    let a = run_campaign(&cfg, &short(SchemePolicy::ProposedA, 20)).unwrap();
    let woa = run_campaign(&cfg, &short(SchemePolicy::WithoutA, 20)).unwrap();
    assert!(woa.outage.mean().unwrap() >= a.outage.mean().unwrap());
}

#[test]
fn ongrid_outage_ignores_harvesting() {
    let cfg = NetworkConfig::desk_defaults();
    let mut starved = cfg;
    starved.harvest.rate = 0.0;
    assert_eq!(ongrid_outage_probability(&cfg), ongrid_outage_probability(&starved));

    let opts = short(SchemePolicy::OnGrid, 20);
    let fed = run_campaign(&cfg, &opts).unwrap();
    let dry = run_campaign(&starved, &opts).unwrap();
    let diff = fed.outage.mean().unwrap() - dry.outage.mean().unwrap();
    let se = fed.outage_stderr().unwrap().hypot(dry.outage_stderr().unwrap());
    assert!(diff.abs() <= 3.0 * se, "{diff} vs {se}");
    // and the simulated value agrees with the closed form
    let exact = ongrid_outage_probability(&cfg);
    assert!((fed.outage.mean().unwrap() - exact).abs() <= 3.0 * fed.outage_stderr().unwrap() + 2e-3);
}

#[test]
fn empty_network_has_no_samples() {
    let mut cfg = NetworkConfig::desk_defaults();
    cfg.deployment.lambda_mt = 0.0;
    let est = run_campaign(&cfg, &short(SchemePolicy::ProposedA, 2)).unwrap();
    assert_eq!(est.outage.samples, 0);
    assert_eq!(est.rejection.hits, 0);
    assert!(est.coverage.is_empty());
}

#[test]
fn coverage_is_monotone_in_threshold() {
    let cfg = NetworkConfig::desk_defaults();
    let thresholds: Vec<f64> = (-10..=20).step_by(5).map(|db| 10f64.powf(db as f64 / 10.0)).collect();
    let opts = SimOptions { thresholds, ..short(SchemePolicy::ProposedA, 4) };
    let est = run_campaign(&cfg, &opts).unwrap();
    let cov: Vec<f64> = est.coverage.iter().map(|(_, p)| p.mean().unwrap()).collect();
    assert!(cov.windows(2).all(|w| w[1] <= w[0]), "{cov:?}");
    assert!(est.coverage.iter().all(|(_, p)| p.samples > 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn same_seed_same_trial(seed in 0u64..1_000_000, scheme in 0usize..4) {
        let cfg = NetworkConfig::desk_defaults();
        let opts = SimOptions { slots: 4, warmup: Some(3), ..SimOptions::desk(SchemePolicy::ALL[scheme]) };
        prop_assert_eq!(run_trial(&cfg, &opts, seed).unwrap(), run_trial(&cfg, &opts, seed).unwrap());
    }
}
