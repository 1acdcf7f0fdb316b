//! Canned scenarios and seed sweeps.

use crate::config::{
    AdversarySpec, Pattern, ProtocolParams, ScenarioConfig, ScheduleSpec, StrategyName, CONFIG_VERSION,
};
use crate::engine::run_config;
use crate::error::Result;
use crate::ledger::checks::summarize;
use crate::ledger::LatencyStats;
use crate::metrics::{analyze, Metrics};
use crate::types::{AdversaryMode, ProtocolKind, Window};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Corrupt count used by the generated suites: a quarter of the other nodes.
pub fn default_corrupt(n: usize) -> usize {
    n.saturating_sub(1) / 4
}

fn base(protocol: ProtocolKind, n: usize, seed: u64, horizon: u64) -> ScenarioConfig {
    ScenarioConfig {
        version: CONFIG_VERSION,
        n,
        delta: 2,
        t_forward: Window::Finite(16),
        t_backward: Window::Finite(16),
        rho: 0.5,
        horizon,
        protocol,
        adversary_mode: AdversaryMode::External,
        lambda: 32,
        seed,
        alpha: None,
        input_every: Some(4),
        adversary: AdversarySpec::default(),
        params: ProtocolParams::default(),
        schedule: ScheduleSpec {
            pattern: Pattern::Consistent,
            corrupt: default_corrupt(n),
            corrupt_nodes: Vec::new(),
            sessions: Vec::new(),
            min_session: None,
            admissible: true,
        },
        env_inputs: Vec::new(),
    }
}

/// Fully fluctuating participation, `(T_b, T_b, 1/2)` with `T_b = 8Δ`.
pub fn fluctuating(n: usize, seed: u64, horizon: u64) -> ScenarioConfig {
    let mut c = base(ProtocolKind::FluctuatingCompiled, n, seed, horizon);
    c.schedule.pattern = Pattern::FullyFluctuating;
    c
}

/// Decaying participation with `T_f = 10α` and unbounded `T_b`.
pub fn decaying(n: usize, seed: u64, horizon: u64) -> ScenarioConfig {
    let mut c = base(ProtocolKind::DecayingCompiled, n, seed, horizon);
    c.t_forward = Window::Finite(10 * c.alpha());
    c.t_backward = Window::Infinite;
    c.schedule.pattern = Pattern::Decaying;
    c
}

/// Everyone awake, base protocol.
pub fn steady(n: usize, seed: u64, horizon: u64) -> ScenarioConfig {
    base(ProtocolKind::Base, n, seed, horizon)
}

/// Key transfer plus forward simulation against the decaying compiler.
///
/// Twelve nodes, four corrupt, `Δ = 1`, views of 4 slots and 16-slot epochs. The
/// corrupt node 8 stays awake throughout and collects the other corrupt keys;
/// nodes 9 to 11 leave after 8 slots. All honest nodes run until slot 168, then
/// only nodes 0 and 1 stay. Node 7 sleeps from 168 to 300 and, on waking, has to
/// tell the real history from the one announced under the corrupt keys.
pub fn separation(mode: AdversaryMode, seed: u64) -> ScenarioConfig {
    let mut c = base(ProtocolKind::DecayingCompiled, 12, seed, 320);
    c.delta = 1;
    c.params.lambda_views = 2;
    c.t_forward = Window::Finite(10 * c.alpha());
    c.t_backward = Window::Infinite;
    c.adversary_mode = mode;
    c.adversary.strategy = StrategyName::ForwardSim;
    c.input_every = Some(4);
    let mut sessions = Vec::new();
    for i in 0..12u64 {
        sessions.push(match i {
            0 | 1 => vec![[0, 320]],
            7 => vec![[0, 168], [300, 320]],
            2..=6 => vec![[0, 168]],
            8 => vec![[0, 320]],
            _ => vec![[0, 8]],
        });
    }
    c.schedule = ScheduleSpec {
        pattern: Pattern::Explicit,
        corrupt: 0,
        corrupt_nodes: vec![8, 9, 10, 11],
        sessions,
        min_session: None,
        admissible: true,
    };
    c
}

/// The scripted attack scenario behind `attack-demo`. Key transfer and forward
/// simulation use the separation scenario in the requested mode; backward
/// simulation runs against the fluctuating compiler in external mode and against
/// the longest-history strawman in standard mode.
pub fn attack_demo(strategy: StrategyName, mode: AdversaryMode, seed: u64) -> ScenarioConfig {
    match strategy {
        StrategyName::ForwardSim => separation(mode, seed),
        StrategyName::KeyTransfer => {
            let mut c = separation(mode, seed);
            c.adversary.strategy = StrategyName::KeyTransfer;
            c
        }
        StrategyName::BackwardSim => {
            let mut c = fluctuating(9, seed, 200);
            c.adversary_mode = mode;
            c.adversary.strategy = StrategyName::BackwardSim;
            c.schedule.corrupt = 2;
            // the standard-mode half of the pair targets the longest-history rule
            if mode == AdversaryMode::Standard {
                c.protocol = ProtocolKind::Strawman;
            }
            c
        }
        _ => {
            let mut c = steady(7, seed, 200);
            c.adversary_mode = mode;
            c.adversary.strategy = strategy;
            c
        }
    }
}

/// Runs one configuration and analyzes its trace.
pub fn run_metrics(cfg: &ScenarioConfig) -> Result<Metrics> {
    analyze(&run_config(cfg)?)
}

/// Totals over a sweep, ordered by seed whatever the execution order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<(u64, String)>,
    pub safety_violations: u64,
    pub violating_seeds: Vec<u64>,
    pub liveness_misses: u64,
    pub liveness_checked: u64,
    pub latency: LatencyStats,
    pub soundness_violations: u64,
    pub completeness_violations: u64,
    pub depth_timing_violations: u64,
    pub policy_violations: u64,
    pub cross_key_ok: u64,
    pub synchrony_violations: u64,
    pub mean_overlay_bits_per_slot: f64,
}

pub fn aggregate(runs: &[(u64, Result<Metrics>)]) -> SweepReport {
    let mut r = SweepReport {
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        failed_seeds: Vec::new(),
        safety_violations: 0,
        violating_seeds: Vec::new(),
        liveness_misses: 0,
        liveness_checked: 0,
        latency: LatencyStats::default(),
        soundness_violations: 0,
        completeness_violations: 0,
        depth_timing_violations: 0,
        policy_violations: 0,
        cross_key_ok: 0,
        synchrony_violations: 0,
        mean_overlay_bits_per_slot: 0.0,
    };
    let mut samples = Vec::new();
    let mut censored = 0;
    let mut overlay = Vec::new();
    for (seed, m) in runs {
        let m = match m {
            Ok(m) => m,
            Err(e) => {
                r.failed_seeds.push((*seed, e.to_string()));
                continue;
            }
        };
        r.safety_violations += m.safety.count;
        if m.safety.count > 0 {
            r.violating_seeds.push(*seed);
        }
        r.liveness_misses += m.liveness.misses;
        r.liveness_checked += m.liveness.checked;
        samples.extend_from_slice(&m.latency.samples);
        censored += m.latency.censored;
        r.soundness_violations += m.wakeness.soundness;
        r.completeness_violations += m.wakeness.completeness;
        r.depth_timing_violations += m.depth_timing.early + m.depth_timing.absent_prover;
        r.policy_violations += m.policy.policy_violations;
        r.cross_key_ok += m.policy.cross_key_ok;
        r.synchrony_violations += m.synchrony.violations;
        overlay.push(m.comm.mean_overlay_bits());
    }
    r.latency = summarize(samples, censored);
    if !overlay.is_empty() {
        r.mean_overlay_bits_per_slot = overlay.iter().sum::<f64>() / overlay.len() as f64;
    }
    r
}

/// Runs `make(seed)` for every seed on `jobs` threads.
pub fn sweep_with<F>(seeds: std::ops::Range<u64>, jobs: usize, make: F) -> (Vec<(u64, Result<Metrics>)>, SweepReport)
where
    F: Fn(u64) -> ScenarioConfig + Sync,
{
    let seeds: Vec<u64> = seeds.collect();
    let run = |&s: &u64| (s, run_metrics(&make(s)));
    let mut runs: Vec<(u64, Result<Metrics>)> = if jobs <= 1 {
        seeds.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| seeds.par_iter().map(run).collect())
    };
    runs.sort_by_key(|(s, _)| *s);
    let report = aggregate(&runs);
    (runs, report)
}

/// Sweeps a configuration over seeds.
pub fn sweep(cfg: &ScenarioConfig, seeds: std::ops::Range<u64>, jobs: usize) -> SweepReport {
    sweep_with(seeds, jobs, |s| ScenarioConfig { seed: s, ..cfg.clone() }).1
}

/// Production side of the GPE validity measurement: the base protocol with
/// everyone awake and equivocating corrupt nodes, one run per set-up.
/// Returns `(view, valid)` for every view graded by all honest nodes.
pub fn gpe_probe(s: &crate::brute::GpeSetup) -> Result<Vec<(u64, bool)>> {
    let mut c = steady(s.n, s.seed, 0);
    c.lambda = s.lambda;
    c.schedule.corrupt = s.corrupt;
    c.adversary.strategy = StrategyName::Equivocate;
    c.horizon = s.views * c.view_len() + 1;
    Ok(run_metrics(&c)?.gpe.per_view)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatelessProbe {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub node: crate::types::NodeId,
    pub slot: crate::types::Slot,
    pub actions: usize,
    pub deleted: usize,
    pub identical: bool,
}

/// Replays random (run, node, slot) points with every message from outside the
/// node's current filter deleted and compares the resulting actions.
/// Up to `per_run` probes come from each run of the compiled protocols, one run
/// in three under the backward-simulation attack, until `count` are collected.
pub fn stateless_probes(count: usize, per_run: usize, seed: u64) -> Result<Vec<StatelessProbe>> {
    use crate::engine::Engine;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut r = 0u64;
    while out.len() < count {
        let s = seed.wrapping_add(r);
        let cfg = match r % 3 {
            0 => fluctuating(7, s, 200),
            1 => decaying(7, s, 200),
            _ => attack_demo(StrategyName::BackwardSim, AdversaryMode::External, s),
        };
        let mut e = Engine::new(&cfg)?;
        // phase slots only: the base protocol is idle in between
        let l = cfg.view_len();
        let mut slots: Vec<u64> = (0..per_run)
            .map(|_| rng.gen_range(1..cfg.horizon / l) * l + rng.gen_range(0..4) * cfg.delta)
            .filter(|&t| t < cfg.horizon)
            .collect();
        slots.sort();
        r += 1;
        for t in slots {
            if out.len() == count {
                break;
            }
            while e.slot() < t {
                e.step_slot();
            }
            let awake: Vec<_> = e.schedule().honest().filter(|&p| e.schedule().is_awake(p, t)).collect();
            if awake.is_empty() {
                continue;
            }
            let p = awake[rng.gen_range(0..awake.len())];
            let (a, b, deleted) = e.probe_stateless(p).expect("awake");
            out.push(StatelessProbe {
                protocol: cfg.protocol,
                seed: s,
                node: p,
                slot: t,
                actions: a.len(),
                deleted,
                identical: a == b,
            });
        }
    }
    Ok(out)
}
