//! Slotted simulation: arrival processes, policy drivers, metrics and sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{cut_bound_oracle, multiclass_capacity};
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::multiclass::{make_classes, ClassSpec, MulticlassSlot, MulticlassState};
use crate::policy::{policy_step, DeficitView, PolicyState, SlotOutcome};
use crate::rng::SplitMix64;
use crate::trees::{sample_arborescences, Arborescence, TreePolicyState, TreeSlot};

/// Slots between samples of the deficit-sum series.
pub const SAMPLE_INTERVAL: u64 = 100;
/// Slope of the deficit-sum series above which a run counts as unstable.
pub const INSTABILITY_THRESHOLD: f64 = 0.01;
/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "DAGCAST_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrivalKind {
    /// `⌈λ⌉` packets with probability `λ/⌈λ⌉`, else none.
    #[default]
    BernoulliBatch,
    Poisson,
}

impl FromStr for ArrivalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli-batch" | "bernoulli" => Ok(ArrivalKind::BernoulliBatch),
            "poisson" => Ok(ArrivalKind::Poisson),
            _ => Err(Error::Domain(format!(
                "unknown arrival process `{s}` (expected bernoulli-batch or poisson)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalProcess {
    pub kind: ArrivalKind,
    pub rate: f64,
}

impl ArrivalProcess {
    pub fn new(kind: ArrivalKind, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::Domain(format!("arrival rate {rate} must be finite and ≥ 0")));
        }
        Ok(ArrivalProcess { kind, rate })
    }

    pub fn bernoulli_batch(rate: f64) -> Result<Self> {
        Self::new(ArrivalKind::BernoulliBatch, rate)
    }

    pub fn stream(&self, seed: u64) -> ArrivalStream {
        let poisson = match self.kind {
            ArrivalKind::Poisson if self.rate > 0.0 => {
                Some(Poisson::new(self.rate).expect("rate validated"))
            }
            _ => None,
        };
        ArrivalStream {
            process: *self,
            rng: SplitMix64::new(seed),
            poisson,
        }
    }
}

/// I.i.d. per-slot arrival counts.
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    process: ArrivalProcess,
    rng: SplitMix64,
    poisson: Option<Poisson<f64>>,
}

impl ArrivalStream {
    pub fn next_slot(&mut self) -> u64 {
        let rate = self.process.rate;
        if rate == 0.0 {
            return 0;
        }
        match self.process.kind {
            ArrivalKind::BernoulliBatch => {
                let batch = rate.ceil();
                if self.rng.unit_f64() < rate / batch {
                    batch as u64
                } else {
                    0
                }
            }
            ArrivalKind::Poisson => {
                let d = self.poisson.as_ref().expect("positive rate");
                d.sample(&mut self.rng) as u64
            }
        }
    }
}

/// Which policy drives a run.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    PiStar,
    /// `K` random classes drawn from the run's policy seed.
    Multiclass(usize),
    /// Explicit classes.
    MulticlassWith(Vec<ClassSpec>),
    /// `N` distinct random arborescences drawn from the run's policy seed.
    Tree(usize),
    /// Explicit arborescences.
    TreeWith(Vec<Arborescence>),
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::PiStar => write!(f, "pi_star"),
            PolicySpec::Multiclass(k) => write!(f, "multiclass:{k}"),
            PolicySpec::MulticlassWith(c) => write!(f, "multiclass:{}", c.len()),
            PolicySpec::Tree(n) => write!(f, "tree:{n}"),
            PolicySpec::TreeWith(t) => write!(f, "tree:{}", t.len()),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let count = |v: &str| -> Result<usize> {
            match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Domain(format!("policy `{s}`: count must be a positive integer"))),
            }
        };
        match s.split_once(':') {
            None if s == "pi_star" => Ok(PolicySpec::PiStar),
            Some(("multiclass", k)) => Ok(PolicySpec::Multiclass(count(k)?)),
            Some(("tree", n)) => Ok(PolicySpec::Tree(count(n)?)),
            _ => Err(Error::Domain(format!(
                "unknown policy `{s}` (expected pi_star, multiclass:K or tree:N)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub arrivals: ArrivalProcess,
    pub horizon: u64,
    pub seed: u64,
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub policy: String,
    pub lambda: f64,
    pub horizon: u64,
    pub seed: u64,
    pub arrivals: u64,
    /// Final distinct-packet count per node.
    pub received: Vec<u64>,
    pub throughput: f64,
    /// Delay of each packet delivered to every node, in slots.
    #[serde(skip)]
    pub delays: Vec<u64>,
    pub mean_delay: Option<f64>,
    pub undelivered: u64,
    /// `(slot, Σ_j X_j)` samples (total queued packets for the tree policy).
    pub deficit_series: Vec<(u64, u64)>,
    pub instability_slope: f64,
    /// Classes that cannot reach every node and take no arrivals.
    pub dead_classes: Vec<usize>,
}

impl RunMetrics {
    pub fn is_unstable(&self) -> bool {
        self.instability_slope > INSTABILITY_THRESHOLD
    }
}

/// Per-slot view handed to run observers.
pub enum SlotEvent<'a> {
    PiStar {
        slot: u64,
        outcome: &'a SlotOutcome,
        state: &'a PolicyState,
    },
    Multiclass {
        slot: u64,
        outcome: &'a MulticlassSlot,
        state: &'a MulticlassState,
    },
    Tree {
        slot: u64,
        outcome: &'a TreeSlot,
        state: &'a TreePolicyState,
    },
}

pub fn run(net: &Network, policy: &PolicySpec, cfg: &RunConfig) -> Result<RunMetrics> {
    run_observed(net, policy, cfg, |_| Ok(()))
}

/// Runs `cfg.horizon` slots, calling `observe` after every slot. An observer
/// error aborts the run.
pub fn run_observed(
    net: &Network,
    policy: &PolicySpec,
    cfg: &RunConfig,
    mut observe: impl FnMut(SlotEvent<'_>) -> Result<()>,
) -> Result<RunMetrics> {
    let mut seeds = SplitMix64::new(cfg.seed);
    let mut arrivals = cfg.arrivals.stream(seeds.next());
    let policy_seed = seeds.next();
    let mut series = Vec::new();
    let mut total = 0u64;
    let sample = |slot: u64| slot.is_multiple_of(SAMPLE_INTERVAL);

    let (received, delays, dead) = match policy {
        PolicySpec::PiStar => {
            if !net.is_dag() {
                return Err(Error::Domain(
                    "pi_star needs an acyclic network; use a multiclass policy".into(),
                ));
            }
            let mut state = PolicyState::new(net);
            for slot in 0..cfg.horizon {
                let a = arrivals.next_slot();
                total += a;
                let outcome = policy_step(&mut state, net, a, slot)?;
                if sample(slot) {
                    series.push((slot, outcome.view.min_deficits.iter().sum()));
                }
                observe(SlotEvent::PiStar {
                    slot,
                    outcome: &outcome,
                    state: &state,
                })?;
            }
            let delays = (1..=state.delivered_everywhere())
                .map(|p| {
                    state.completion_slot(p).expect("delivered") - state.arrival_slots()[p as usize - 1]
                })
                .collect();
            (state.counts().to_vec(), delays, Vec::new())
        }
        PolicySpec::Multiclass(_) | PolicySpec::MulticlassWith(_) => {
            let classes = match policy {
                PolicySpec::Multiclass(k) => make_classes(net, *k, policy_seed)?,
                PolicySpec::MulticlassWith(c) => c.clone(),
                _ => unreachable!(),
            };
            let mut state = MulticlassState::new(net, classes)?;
            for slot in 0..cfg.horizon {
                let a = arrivals.next_slot();
                total += a;
                let outcome = state.step(net, a, slot)?;
                if sample(slot) {
                    series.push((slot, deficit_sum(&outcome.views)));
                }
                observe(SlotEvent::Multiclass {
                    slot,
                    outcome: &outcome,
                    state: &state,
                })?;
            }
            let received = net.nodes().map(|v| state.received(v)).collect();
            (received, state.delays(), state.dead_classes())
        }
        PolicySpec::Tree(_) | PolicySpec::TreeWith(_) => {
            let trees = match policy {
                PolicySpec::Tree(n) => sample_arborescences(net, *n, policy_seed)?,
                PolicySpec::TreeWith(t) => t.clone(),
                _ => unreachable!(),
            };
            let mut state = TreePolicyState::new(net, trees)?;
            for slot in 0..cfg.horizon {
                let a = arrivals.next_slot();
                total += a;
                if sample(slot) {
                    series.push((slot, state.total_backlog()));
                }
                let outcome = state.step(net, a, slot)?;
                observe(SlotEvent::Tree {
                    slot,
                    outcome: &outcome,
                    state: &state,
                })?;
            }
            (state.received().to_vec(), state.delays().to_vec(), Vec::new())
        }
    };

    let horizon = cfg.horizon;
    let min_received = received.iter().copied().min().unwrap_or(0);
    let throughput = if horizon == 0 { 0.0 } else { min_received as f64 / horizon as f64 };
    let mean_delay = (!delays.is_empty())
        .then(|| delays.iter().map(|&d| d as f64).sum::<f64>() / delays.len() as f64);
    Ok(RunMetrics {
        policy: policy.to_string(),
        lambda: cfg.arrivals.rate,
        horizon,
        seed: cfg.seed,
        arrivals: total,
        received,
        throughput,
        undelivered: total - delays.len() as u64,
        delays,
        mean_delay,
        instability_slope: instability_slope(&series),
        deficit_series: series,
        dead_classes: dead,
    })
}

fn deficit_sum(views: &[DeficitView]) -> u64 {
    views.iter().map(|v| v.min_deficits.iter().sum::<u64>()).sum()
}

/// Least-squares slope (per slot) over the second half of the samples.
pub fn instability_slope(series: &[(u64, u64)]) -> f64 {
    let tail = &series[series.len() / 2..];
    if tail.len() < 2 {
        return 0.0;
    }
    let n = tail.len() as f64;
    let mx = tail.iter().map(|&(t, _)| t as f64).sum::<f64>() / n;
    let my = tail.iter().map(|&(_, y)| y as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, y) in tail {
        let dx = t as f64 - mx;
        sxy += dx * (y as f64 - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// One sweep row. A failed cell keeps its coordinates and the error message.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub policy: String,
    pub lambda: f64,
    pub horizon: u64,
    pub seed: u64,
    pub outcome: std::result::Result<RunMetrics, String>,
}

pub const SWEEP_HEADER: &str =
    "policy,lambda,horizon,seed,throughput,mean_delay,undelivered,instability_slope";

/// Thread cap from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Every `(policy, λ, seed)` combination, in that nesting order. Cells run in
/// parallel on at most `threads` workers (all cores if `None`); rows keep the
/// nesting order.
pub fn sweep(
    net: &Network,
    policies: &[PolicySpec],
    lambdas: &[f64],
    kind: ArrivalKind,
    horizon: u64,
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<Vec<SweepRecord>> {
    let mut cells = Vec::new();
    for p in policies {
        for &l in lambdas {
            for &s in seeds {
                cells.push((p, l, s));
            }
        }
    }
    let work = || -> Vec<SweepRecord> {
        cells
            .par_iter()
            .map(|&(p, lambda, seed)| {
                let outcome = ArrivalProcess::new(kind, lambda)
                    .and_then(|arrivals| {
                        run(
                            net,
                            p,
                            &RunConfig {
                                arrivals,
                                horizon,
                                seed,
                            },
                        )
                    })
                    .map_err(|e| e.to_string());
                SweepRecord {
                    policy: p.to_string(),
                    lambda,
                    horizon,
                    seed,
                    outcome,
                }
            })
            .collect()
    };
    match threads {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

/// Formats like C's `%.6g`; non-finite values print as `NaN`.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp) as usize, x);
        trim_fraction(&s).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_sweep_csv(records: &[SweepRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in records {
        let (throughput, delay, undelivered, slope) = match &r.outcome {
            Ok(m) => (
                format_sig6(m.throughput),
                format_sig6(m.mean_delay.unwrap_or(f64::NAN)),
                m.undelivered.to_string(),
                format_sig6(m.instability_slope),
            ),
            Err(_) => ("NaN".into(), "NaN".into(), "NaN".into(), "NaN".into()),
        };
        writeln!(
            out,
            "{},{},{},{},{throughput},{delay},{undelivered},{slope}",
            r.policy,
            format_sig6(r.lambda),
            r.horizon,
            r.seed
        )?;
    }
    Ok(())
}

/// Mean over seeds of `λ^K / λ*` for one `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionPoint {
    pub k: usize,
    pub seeds: usize,
    pub mean_fraction: f64,
}

pub const FRACTION_HEADER: &str = "network,k,seeds,mean_fraction";

/// For each `K`, averages the multiclass rate of `make_classes(net, K, seed)`
/// over `seeds`, relative to the cut bound.
pub fn multiclass_fraction_curve(
    net: &Network,
    ks: &[usize],
    seeds: &[u64],
) -> Result<Vec<FractionPoint>> {
    if seeds.is_empty() {
        return Err(Error::Domain("fraction curve needs at least one seed".into()));
    }
    let optimum = cut_bound_oracle(net)?;
    if optimum <= 0.0 {
        return Err(Error::Domain("network has zero broadcast capacity".into()));
    }
    ks.iter()
        .map(|&k| {
            let mut sum = 0.0;
            for &seed in seeds {
                let classes = make_classes(net, k, seed)?;
                let edge_sets: Vec<Vec<usize>> = classes.iter().map(|c| c.edges().to_vec()).collect();
                sum += multiclass_capacity(net, &edge_sets)?.total / optimum;
            }
            Ok(FractionPoint {
                k,
                seeds: seeds.len(),
                mean_fraction: sum / seeds.len() as f64,
            })
        })
        .collect()
}

pub fn write_fraction_csv(network: &str, points: &[FractionPoint], mut out: impl Write) -> Result<()> {
    writeln!(out, "{FRACTION_HEADER}")?;
    for p in points {
        writeln!(out, "{network},{},{},{}", p.k, p.seeds, format_sig6(p.mean_fraction))?;
    }
    Ok(())
}
