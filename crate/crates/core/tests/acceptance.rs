//! The twelve acceptance criteria at their stated scale and tolerances. Runs as a
//! single test so the report lines come out in order; every criterion is
//! evaluated before the test fails.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepy_core::brute::{brute_gpe_validity, GpeSetup};
use sleepy_core::config::{ExtensionPolicy, Pattern, ScenarioConfig, StrategyName};
use sleepy_core::engine::run_config;
use sleepy_core::harness::{
    attack_demo, decaying, fluctuating, gpe_probe, separation, stateless_probes, sweep, sweep_with, SweepReport,
};
use sleepy_core::metrics::Metrics;
use sleepy_core::schedule::check_admissible;
use sleepy_core::{AdversaryMode, ProtocolKind, Result};

const SEEDS: u64 = 200;
const NS: [usize; 3] = [7, 9, 13];

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn add(&mut self, k: usize, ok: bool, detail: String) {
        println!("criterion {k:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((k, ok, detail));
    }
}

fn ok_runs(runs: &[(u64, Result<Metrics>)]) -> Vec<&Metrics> {
    runs.iter().filter_map(|(_, m)| m.as_ref().ok()).collect()
}

fn suite(make: fn(usize, u64, u64) -> ScenarioConfig, horizon: u64) -> Vec<(usize, Vec<(u64, Result<Metrics>)>, SweepReport)> {
    NS.iter()
        .map(|&n| {
            let (runs, r) = sweep_with(0..SEEDS, jobs(), |s| make(n, s, horizon));
            (n, runs, r)
        })
        .collect()
}

fn clean(r: &SweepReport) -> bool {
    r.failed_seeds.is_empty() && r.safety_violations == 0
}

/// Random small configurations for the determinism check.
fn random_config(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let n = rng.gen_range(5..=9);
    let seed = rng.gen_range(0..1u64 << 40);
    let horizon = rng.gen_range(60..=120);
    let mut c = match rng.gen_range(0..4) {
        0 => fluctuating(n, seed, horizon),
        1 => decaying(n, seed, horizon),
        2 => {
            let mut c = fluctuating(n, seed, horizon);
            c.protocol = ProtocolKind::Strawman;
            c
        }
        _ => {
            let mut c = sleepy_core::harness::steady(n, seed, horizon);
            c.schedule.pattern = Pattern::Increasing;
            c
        }
    };
    c.adversary.strategy = [
        StrategyName::Passive,
        StrategyName::Silent,
        StrategyName::Equivocate,
        StrategyName::KeyTransfer,
        StrategyName::ForwardSim,
        StrategyName::BackwardSim,
    ][rng.gen_range(0..6)];
    if rng.gen_bool(0.5) {
        c.adversary_mode = AdversaryMode::Standard;
    }
    c
}

#[test]
fn acceptance() {
    let mut rep = Report { lines: Vec::new() };

    // 1, 6, 7, 8 share the fluctuating suite
    let fl = suite(fluctuating, 400);
    let ok = fl.iter().all(|(_, _, r)| clean(r));
    let detail = fl
        .iter()
        .map(|(n, _, r)| format!("n={n}: {} violations in {} runs", r.safety_violations, r.seeds.len()))
        .collect::<Vec<_>>()
        .join(", ");
    rep.add(1, ok, detail);

    // 2
    let dc = suite(decaying, 400);
    let ok = dc.iter().all(|(_, _, r)| clean(r));
    let detail = dc
        .iter()
        .map(|(n, _, r)| format!("n={n}: {} violations in {} runs", r.safety_violations, r.seeds.len()))
        .collect::<Vec<_>>()
        .join(", ");
    rep.add(2, ok, detail);

    // 3
    let seeds = 0..10;
    let std_runs = sweep_with(seeds.clone(), jobs(), |s| separation(AdversaryMode::Standard, s)).0;
    let ext_runs = sweep_with(seeds, jobs(), |s| separation(AdversaryMode::External, s)).0;
    let admissible = {
        let c = separation(AdversaryMode::External, 0);
        let s = sleepy_core::adversary::schedules::schedule_for(&c).unwrap();
        check_admissible(&s, c.t_forward, c.t_backward, c.rho).is_admissible()
    };
    let std_ok = ok_runs(&std_runs);
    let ext_ok = ok_runs(&ext_runs);
    let ok = admissible
        && std_ok.len() == 10
        && ext_ok.len() == 10
        && std_ok.iter().all(|m| m.safety.count >= 1)
        && ext_ok.iter().all(|m| m.safety.count == 0 && m.policy.policy_violations > 0);
    rep.add(
        3,
        ok,
        format!(
            "standard: min {} violations per seed; external: max {} violations, min {} policy violations per seed (10 seeds, admissible schedule: {admissible})",
            std_ok.iter().map(|m| m.safety.count).min().unwrap_or(0),
            ext_ok.iter().map(|m| m.safety.count).max().unwrap_or(0),
            ext_ok.iter().map(|m| m.policy.policy_violations).min().unwrap_or(0),
        ),
    );

    // 4
    let mut views = Vec::new();
    let mut agree = true;
    for seed in 0..10 {
        let s = GpeSetup {
            n: 7,
            corrupt: 2,
            seed,
            lambda: 32,
            views: 200,
        };
        let p = gpe_probe(&s).expect("gpe run");
        let o = brute_gpe_validity(&s);
        agree &= p.iter().all(|&(v, ok)| o[v as usize - 1] == ok);
        views.extend(p.into_iter().map(|x| x.1));
    }
    let freq = views.iter().filter(|&&x| x).count() as f64 / views.len() as f64;
    rep.add(
        4,
        views.len() == 2000 && freq >= 0.466,
        format!(
            "validity {freq:.3} over {} views (bound 0.466); oracle agrees on every view: {agree}",
            views.len()
        ),
    );

    // 5 and part of 6: the attack suite against the fluctuating compiler
    let mut attack_runs: Vec<Metrics> = Vec::new();
    let mut attack_failures = 0;
    for strategy in [
        StrategyName::Passive,
        StrategyName::Silent,
        StrategyName::Equivocate,
        StrategyName::KeyTransfer,
        StrategyName::ForwardSim,
        StrategyName::BackwardSim,
    ] {
        for mode in [AdversaryMode::External, AdversaryMode::Standard] {
            let (runs, _) = sweep_with(0..10, jobs(), |s| {
                let mut c = fluctuating(9, s, 200);
                c.adversary.strategy = strategy;
                c.adversary_mode = mode;
                c
            });
            attack_failures += runs.iter().filter(|(_, m)| m.is_err()).count();
            attack_runs.extend(runs.into_iter().filter_map(|(_, m)| m.ok()));
        }
    }
    let backward = attack_demo(StrategyName::BackwardSim, AdversaryMode::External, 0);
    attack_runs.extend(sweep_with(0..10, jobs(), |s| ScenarioConfig { seed: s, ..backward.clone() }).0.into_iter().filter_map(|(_, m)| m.ok()));
    let all_fl: Vec<&Metrics> = fl.iter().flat_map(|(_, runs, _)| ok_runs(runs)).chain(attack_runs.iter()).collect();
    let early: u64 = all_fl.iter().map(|m| m.depth_timing.early).sum();
    let absent: u64 = all_fl.iter().map(|m| m.depth_timing.absent_prover).sum();
    let checked: u64 = all_fl.iter().map(|m| m.depth_timing.values_checked).sum();
    rep.add(
        5,
        early == 0 && absent == 0 && attack_failures == 0 && checked > 0,
        format!("{checked} verified depth values: {early} sent early, {absent} with an absent prover"),
    );

    // 6
    let fl_snd: u64 = all_fl.iter().map(|m| m.wakeness.soundness).sum();
    let fl_cmp: u64 = all_fl.iter().map(|m| m.wakeness.completeness).sum();
    let fl_bits: u64 = all_fl.iter().map(|m| m.wakeness.bits_checked).sum();
    let dc_all: Vec<&Metrics> = dc.iter().flat_map(|(_, runs, _)| ok_runs(runs)).collect();
    let dc_snd: u64 = dc_all.iter().map(|m| m.wakeness.soundness).sum();
    let dc_bits: u64 = dc_all.iter().map(|m| m.wakeness.bits_checked).sum();
    rep.add(
        6,
        fl_snd == 0 && fl_cmp == 0 && dc_snd == 0 && fl_bits > 0 && dc_bits > 0,
        format!(
            "fluctuating d=0: {fl_snd} soundness, {fl_cmp} completeness over {fl_bits} bits; decaying 3α: {dc_snd} soundness over {dc_bits} bits"
        ),
    );

    // 7
    let mean400 = |rs: &[(usize, Vec<(u64, Result<Metrics>)>, SweepReport)]| {
        let (s, k) = rs
            .iter()
            .map(|(_, _, r)| (r.latency.mean * r.latency.decided as f64, r.latency.decided))
            .fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        s / k as f64
    };
    let m400 = mean400(&fl);
    let fl200 = suite(fluctuating, 200);
    let m200 = mean400(&fl200);
    let rel = (m200 - m400).abs() / m400;
    rep.add(
        7,
        m400 <= 20.0 && m200 <= 20.0 && rel <= 0.2,
        format!("mean latency {m400:.2}Δ at horizon 400, {m200:.2}Δ at 200 (difference {:.1}%)", rel * 100.0),
    );

    // 8
    let misses: u64 = fl.iter().chain(&dc).map(|(_, _, r)| r.liveness_misses).sum();
    let checked: u64 = fl.iter().chain(&dc).map(|(_, _, r)| r.liveness_checked).sum();
    rep.add(
        8,
        misses == 0 && checked > 0,
        format!("{misses} misses over {checked} checked inputs with ℓ = 80Δ"),
    );

    // 9
    let sizes = [8usize, 16, 32];
    let bits: Vec<f64> = sizes
        .iter()
        .map(|&n| sweep(&fluctuating(n, 0, 100), 0..2, jobs()).mean_overlay_bits_per_slot)
        .collect();
    let model: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let l = (n as f64).log2();
            32.0 * (n * n) as f64 * l * l
        })
        .collect();
    let ratios: Vec<f64> = bits.iter().zip(&model).map(|(b, m)| b / m).collect();
    let c = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
    let c = c.exp();
    let ok = ratios.iter().all(|r| (0.5..=2.0).contains(&(r / c)));
    rep.add(
        9,
        ok,
        format!(
            "overlay bits/slot {:?} at n = {sizes:?}; fitted c = {c:.3}, measured/fit = {:?}",
            bits.iter().map(|b| b.round()).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{:.2}", r / c)).collect::<Vec<_>>()
        ),
    );

    // 10
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut same = 0;
    for _ in 0..100 {
        let c = random_config(&mut rng);
        let a = run_config(&c).map(|t| t.to_bytes());
        let b = run_config(&c).map(|t| t.to_bytes());
        let eq = match (&a, &b) {
            (Ok(x), Ok(y)) => x == y,
            (Err(x), Err(y)) => x.to_string() == y.to_string(),
            _ => false,
        };
        same += eq as usize;
    }
    let base = fluctuating(7, 0, 200);
    let r1 = sweep(&base, 0..16, 1);
    let r8 = sweep(&base, 0..16, 8);
    let sweeps_equal = format!("{r1:?}") == format!("{r8:?}");
    rep.add(
        10,
        same == 100 && sweeps_equal,
        format!("{same}/100 configs byte-identical on rerun; 1 vs 8 jobs reports identical: {sweeps_equal}"),
    );

    // 11
    let probes = stateless_probes(50, 9, 11).expect("probe runs");
    let identical = probes.iter().filter(|p| p.identical).count();
    let deleted: usize = probes.iter().map(|p| p.deleted).sum();
    rep.add(
        11,
        probes.len() == 50 && identical == 50,
        format!("{identical}/{} probes identical after deleting {deleted} messages from outside the filter", probes.len()),
    );

    // 12
    let plain = common::three_node(None);
    let sampled = common::three_node(Some(ExtensionPolicy::Sampling));
    let ok = plain.p1_accepts_via_p3
        && !plain.p2_accepts_via_p3
        && !plain.p2_bit
        && sampled.p2_accepts_via_p2 == Some(true)
        && sampled.p2_bit;
    rep.add(
        12,
        ok,
        format!(
            "without extension p2 accepts p1's depth-2 value: {}; with sampling: {:?}",
            plain.p2_accepts_via_p3, sampled.p2_accepts_via_p2
        ),
    );

    let failed: Vec<usize> = rep.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
