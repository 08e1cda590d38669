//! Monte-Carlo simulation of the slotted protocol for every association scheme.
//!
//! Each trial draws one BS process and runs `warmup + slots` slots; users
//! are redrawn every slot. Trials are independent, seeded `seed + i`, and
//! pooled in trial order so results do not depend on the thread count.

mod association;
mod engine;
mod map;
mod reach;

pub use association::{associate_proposed, associate_realtime, associate_without, select_and_serve, units, Candidate};
pub use engine::{BsSlot, MtSlot, NetworkState, SlotEngine, SlotOutcome};
pub use map::{outage_map, MapCell, MapOptions, OutageMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::AnalyticError;
use crate::config::{NetworkConfig, SchemePolicy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub scheme: SchemePolicy,
    pub trials: usize,
    /// recorded slots per trial, after warmup
    pub slots: u32,
    /// defaults to [`NetworkConfig::default_warmup_slots`]
    pub warmup: Option<u32>,
    pub seed: u64,
    /// linear SIR thresholds; empty skips SIR sampling
    pub thresholds: Vec<f64>,
    /// served users per slot that contribute an SIR sample
    pub sir_probes: usize,
}

impl SimOptions {
    /// 500 trials of 200 recorded slots.
    pub fn desk(scheme: SchemePolicy) -> Self {
        Self { scheme, trials: 500, slots: 200, warmup: None, seed: 0, thresholds: Vec::new(), sir_probes: 8 }
    }

    pub fn warmup_for(&self, cfg: &NetworkConfig) -> u32 {
        self.warmup.unwrap_or_else(|| cfg.default_warmup_slots())
    }
}

/// Successes out of trials, with the binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Proportion {
    pub hits: u64,
    pub samples: u64,
}

impl Proportion {
    #[inline]
    pub fn record(&mut self, hit: bool) {
        self.hits += hit as u64;
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.hits += other.hits;
        self.samples += other.samples;
    }

    /// `None` without samples.
    pub fn mean(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.hits as f64 / self.samples as f64)
    }

    /// Binomial standard error, valid for independent samples.
    pub fn stderr(&self) -> Option<f64> {
        self.mean().map(|p| (p * (1.0 - p) / self.samples as f64).sqrt())
    }
}

/// Standard error of the pooled ratio `Σ hits / Σ samples` treating each
/// trial as one cluster. Samples within a trial share a BS layout and are
/// strongly correlated, so this is the error to quote for campaign results.
/// Falls back to the binomial error with fewer than two non-empty trials.
pub fn clustered_stderr(trials: &[Proportion]) -> Option<f64> {
    let mut pooled = Proportion::default();
    trials.iter().for_each(|t| pooled.merge(t));
    let p = pooled.mean()?;
    let used: Vec<&Proportion> = trials.iter().filter(|t| t.samples > 0).collect();
    let k = used.len() as f64;
    if used.len() < 2 {
        return pooled.stderr();
    }
    let mean_n = pooled.samples as f64 / k;
    let ss: f64 = used.iter().map(|t| (t.hits as f64 - p * t.samples as f64).powi(2)).sum();
    Some((ss / (k * (k - 1.0))).sqrt() / mean_n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialEstimate {
    pub scheme: SchemePolicy,
    /// users not served
    pub outage: Proportion,
    /// outage counts of each trial, in trial order
    pub outage_by_trial: Vec<Proportion>,
    /// users without any BS to associate with
    pub unassociated: Proportion,
    /// associated users denied by selection, per association event
    pub rejection: Proportion,
    /// `(threshold, P[SIR ≥ threshold])` over sampled served users
    pub coverage: Vec<(f64, Proportion)>,
    /// slot-start battery levels over BSs and recorded slots
    pub battery_histogram: Vec<u64>,
    pub slots: u64,
}

impl TrialEstimate {
    fn empty(scheme: SchemePolicy, thresholds: &[f64], levels: usize) -> Self {
        Self {
            scheme,
            outage: Proportion::default(),
            outage_by_trial: Vec::new(),
            unassociated: Proportion::default(),
            rejection: Proportion::default(),
            coverage: thresholds.iter().map(|&t| (t, Proportion::default())).collect(),
            battery_histogram: vec![0; levels + 1],
            slots: 0,
        }
    }

    fn record(&mut self, out: &SlotOutcome) {
        self.slots += 1;
        for mt in &out.mts {
            self.outage.record(!mt.served);
            self.unassociated.record(mt.bs.is_none());
            if mt.bs.is_some() {
                self.rejection.record(!mt.served);
            }
        }
        for &sir in &out.sir {
            for (t, prop) in self.coverage.iter_mut() {
                prop.record(sir >= *t);
            }
        }
        for bs in &out.bs {
            self.battery_histogram[bs.start as usize] += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.outage.merge(&other.outage);
        self.outage_by_trial.extend_from_slice(&other.outage_by_trial);
        self.unassociated.merge(&other.unassociated);
        self.rejection.merge(&other.rejection);
        for ((_, a), (_, b)) in self.coverage.iter_mut().zip(&other.coverage) {
            a.merge(b);
        }
        for (a, b) in self.battery_histogram.iter_mut().zip(&other.battery_histogram) {
            *a += b;
        }
        self.slots += other.slots;
    }

    /// Outage standard error across trials, see [`clustered_stderr`].
    pub fn outage_stderr(&self) -> Option<f64> {
        clustered_stderr(&self.outage_by_trial)
    }

    /// Normalized battery histogram.
    pub fn battery_distribution(&self) -> Vec<f64> {
        let total: u64 = self.battery_histogram.iter().sum();
        self.battery_histogram.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
    }
}

/// One trial with its own seed; `opts.trials` and `opts.seed` are ignored.
pub fn run_trial(cfg: &NetworkConfig, opts: &SimOptions, seed: u64) -> Result<TrialEstimate, SimError> {
    run_trial_observed(cfg, opts, seed, |_, _| {})
}

/// [`run_trial`] that also hands every slot (warmup included) to `observe`
/// together with whether it is recorded.
pub fn run_trial_observed(
    cfg: &NetworkConfig,
    opts: &SimOptions,
    seed: u64,
    mut observe: impl FnMut(&SlotOutcome, bool),
) -> Result<TrialEstimate, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut engine = SlotEngine::new(cfg, opts.scheme, opts.sir_probes)?;
    let mut state = NetworkState::sample(cfg, &mut rng);
    let mut est = TrialEstimate::empty(opts.scheme, &opts.thresholds, cfg.levels());
    let warmup = opts.warmup_for(cfg);
    let sir = !opts.thresholds.is_empty();
    for slot in 0..warmup + opts.slots {
        let recorded = slot >= warmup;
        let out = engine.step(&mut state, &mut rng, recorded && sir);
        observe(out, recorded);
        if recorded {
            est.record(out);
        }
    }
    est.outage_by_trial.push(est.outage);
    Ok(est)
}

/// Pooled estimate over `opts.trials` trials seeded `opts.seed + i`.
pub fn run_campaign(cfg: &NetworkConfig, opts: &SimOptions) -> Result<TrialEstimate, SimError> {
    if opts.trials == 0 {
        return Err(SimError::NoTrials);
    }
    let parts: Vec<TrialEstimate> = (0..opts.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, opts, opts.seed.wrapping_add(i as u64)))
        .collect::<Result<_, _>>()?;
    let mut iter = parts.into_iter();
    let mut pooled = iter.next().expect("trials >= 1");
    for part in iter {
        pooled.merge(&part);
    }
    Ok(pooled)
}
