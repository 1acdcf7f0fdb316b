//! Metrics recomputed from a trace alone: nothing here touches engine state.
//! Signatures and VDF links are re-verified against oracles rebuilt from the
//! recorded seed and configuration.

use crate::config::{ScenarioConfig, StrategyName};
use crate::error::{Error, Result};
use crate::ledger::checks::{check_liveness, check_safety, latency_stats, InputEvent, LogEvent};
use crate::ledger::checks::{LatencyStats, LivenessReport, SafetyReport};
use crate::oracle::{OracleHub, QueryOutcome};
use crate::protocol::{InnerBody, MsgKind, Packet, ProtoMsg};
use crate::schedule::ParticipationSchedule;
use crate::trace::{Record, Trace};
use crate::types::{AdversaryMode, Digest, NodeId, ProtocolKind, Slot};
use crate::wakeness::{check_d_valid, LinkSend, ValidityReport, WakeBit};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

/// Liveness parameter in units of Δ.
pub const ELL_DELTAS: u64 = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackOutcome {
    NoAttack,
    Succeeded,
    Blocked,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommStats {
    pub messages: u64,
    /// Bits handed to the transport, counted once per recipient.
    pub bits_total: u64,
    pub overlay_bits_total: u64,
    pub bits_per_slot: Vec<u64>,
    pub overlay_bits_per_slot: Vec<u64>,
}

impl CommStats {
    pub fn mean_overlay_bits(&self) -> f64 {
        mean_u64(&self.overlay_bits_per_slot)
    }

    pub fn mean_bits(&self) -> f64 {
        mean_u64(&self.bits_per_slot)
    }
}

fn mean_u64(v: &[u64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<u64>() as f64 / v.len() as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyScan {
    pub policy_violations: u64,
    /// Successful queries where caller and key owner differ.
    pub cross_key_ok: u64,
    pub budget_exceeded: u64,
    pub refused_sends: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynchronyScan {
    pub deliveries: u64,
    /// Delay outside `1..=Δ`, wrong due slot, early or late delivery, or a
    /// message never delivered to a recipient awake after its due slot.
    pub violations: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthTiming {
    pub values_checked: u64,
    /// Verified depth-`d` values first sent before slot `d`.
    pub early: u64,
    /// Verified depth-`d` values whose prover was not awake at any slot in `[d - 1, first send]`.
    pub absent_prover: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GpeStats {
    pub views: u64,
    /// Views where every honest output is grade 1 on an honest proposer's block.
    pub valid_views: u64,
    /// Views with a grade-1 honest output and a conflicting honest output.
    pub inconsistent_views: u64,
    /// `(view, valid)` for every graded view.
    #[serde(skip)]
    pub per_view: Vec<(u64, bool)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterScan {
    pub snapshots: u64,
    /// Honest filter snapshots where corrupt senders are not a strict minority.
    pub corrupt_majority: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub protocol: ProtocolKind,
    pub mode: AdversaryMode,
    pub strategy: StrategyName,
    pub n: usize,
    pub horizon: Slot,
    pub seed: u64,
    pub safety: SafetyReport,
    pub liveness: LivenessReport,
    pub latency: LatencyStats,
    pub comm: CommStats,
    pub wakeness: ValidityReport,
    pub depth_timing: DepthTiming,
    pub policy: PolicyScan,
    pub synchrony: SynchronyScan,
    pub unverifiable: u64,
    pub filters: FilterScan,
    pub gpe: GpeStats,
    pub attack: AttackOutcome,
}

/// Rebuilds the participation schedule recorded in a trace.
pub fn schedule_of(trace: &Trace, horizon: Slot) -> Result<ParticipationSchedule> {
    let (sessions, corrupt) = trace
        .records
        .iter()
        .find_map(|r| match r {
            Record::Schedule { sessions, corrupt } => Some((sessions, corrupt)),
            _ => None,
        })
        .ok_or_else(|| Error::CorruptTrace("no schedule record".into()))?;
    let awake = sessions
        .iter()
        .map(|iv| {
            let mut row = vec![false; horizon as usize];
            for &[a, b] in iv {
                for s in a..b.min(horizon) {
                    row[s as usize] = true;
                }
            }
            row
        })
        .collect();
    Ok(ParticipationSchedule::new(awake, corrupt.clone()))
}

pub fn config_of(trace: &Trace) -> Result<ScenarioConfig> {
    let toml = trace
        .config_toml()
        .ok_or_else(|| Error::CorruptTrace("no config record".into()))?;
    let cfg = ScenarioConfig::from_toml(toml)?;
    if cfg.digest() != trace.config_digest || cfg.seed != trace.seed {
        return Err(Error::CorruptTrace("header does not match config".into()));
    }
    Ok(cfg)
}

/// Log events with payloads, translating block-count cuts into payload counts.
fn log_events(trace: &Trace, n: usize) -> Vec<LogEvent> {
    let mut sizes: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut out = Vec::new();
    for r in &trace.records {
        let Record::Log { slot, node, keep, blocks } = r else {
            continue;
        };
        let s = &mut sizes[node.index()];
        let keep = keep.map(|k| {
            s.truncate(k as usize);
            s.iter().sum()
        });
        s.extend(blocks.iter().map(|b| b.content.len()));
        out.push(LogEvent {
            slot: *slot,
            node: *node,
            keep,
            appended: blocks.iter().flat_map(|b| b.content.iter().cloned()).collect(),
        });
    }
    out
}

fn input_events(trace: &Trace) -> Vec<InputEvent> {
    trace
        .records
        .iter()
        .filter_map(|r| match r {
            Record::Input { slot, node, payload } => Some(InputEvent {
                slot: *slot,
                node: *node,
                payload: payload.clone(),
            }),
            _ => None,
        })
        .collect()
}

fn wake_bits(trace: &Trace, schedule: &ParticipationSchedule) -> Vec<WakeBit> {
    trace
        .records
        .iter()
        .filter_map(|r| match r {
            Record::Wake(b) if !schedule.is_corrupt(b.holder) => Some(*b),
            _ => None,
        })
        .collect()
}

pub fn analyze(trace: &Trace) -> Result<Metrics> {
    let cfg = config_of(trace)?;
    let schedule = Arc::new(schedule_of(trace, cfg.horizon)?);
    let hub = OracleHub::new(cfg.seed, cfg.lambda, cfg.query_budget(), cfg.adversary_mode, schedule.clone());
    let hash = hub.hash_fn();
    let n = cfg.n;
    let honest: Vec<bool> = (0..n as u32).map(|i| !schedule.is_corrupt(NodeId(i))).collect();

    let logs = log_events(trace, n);
    let inputs = input_events(trace);
    let safety = check_safety(&logs, &honest);
    let liveness = check_liveness(&inputs, &logs, &schedule, ELL_DELTAS * cfg.delta);
    let latency = latency_stats(&inputs, &logs, &schedule, cfg.delta);

    let h = cfg.horizon as usize;
    let mut comm = CommStats {
        bits_per_slot: vec![0; h],
        overlay_bits_per_slot: vec![0; h],
        ..Default::default()
    };
    let mut policy = PolicyScan::default();
    let mut sync = SynchronyScan::default();
    let mut unverifiable = 0;
    let mut link_sends = Vec::new();
    // (owner, depth) -> first slot a verifying link was sent
    let mut first_link: HashMap<(NodeId, u64), Slot> = HashMap::new();
    let mut proposer_of: HashMap<Digest, NodeId> = HashMap::new();
    // (msg id, recipient) -> due slot
    let mut due: BTreeMap<(u64, NodeId), Slot> = BTreeMap::new();
    let mut filters = FilterScan::default();
    let mut gpe_by_view: BTreeMap<u64, Vec<(NodeId, Option<Digest>, u8)>> = BTreeMap::new();

    for r in &trace.records {
        match r {
            Record::Send { id, slot, via, signed, sig_ok, to } => {
                let packet = Packet::new(*id, signed.clone(), &hub);
                if packet.sig_ok != *sig_ok {
                    return Err(Error::CorruptTrace(format!("message {id}: signature flag mismatch")));
                }
                if !packet.usable() {
                    unverifiable += 1;
                }
                let bits = (signed.payload.len() as u64 * 8 + cfg.lambda as u64) * to.len() as u64;
                comm.messages += 1;
                comm.bits_total += bits;
                if let Some(x) = comm.bits_per_slot.get_mut(*slot as usize) {
                    *x += bits;
                }
                if MsgKind::of_payload(&signed.payload).is_some_and(MsgKind::is_overlay) {
                    comm.overlay_bits_total += bits;
                    if let Some(x) = comm.overlay_bits_per_slot.get_mut(*slot as usize) {
                        *x += bits;
                    }
                }
                for rc in to {
                    let expect = if schedule.is_awake(rc.node, slot + rc.delay) {
                        slot + rc.delay
                    } else {
                        slot + cfg.delta
                    };
                    if rc.delay < 1 || rc.delay > cfg.delta || rc.due != expect {
                        sync.violations += 1;
                    }
                    due.insert((*id, rc.node), rc.due);
                }
                if !packet.usable() {
                    continue;
                }
                match &packet.msg {
                    Some(ProtoMsg::Proposal { block, .. }) => {
                        if let Some(p) = block.proposer {
                            proposer_of.insert(block.id(&hash), p);
                        }
                    }
                    Some(ProtoMsg::Links { .. }) => {
                        for inner in packet.inner.iter().filter(|i| i.ok) {
                            if let InnerBody::Link(l) = &inner.body {
                                first_link.entry((l.extender, l.depth)).or_insert(*slot);
                                if !schedule.is_corrupt(*via) && l.extender == *via {
                                    link_sends.push(LinkSend {
                                        owner: l.extender,
                                        slot: *slot,
                                        depth: l.depth,
                                    });
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            Record::Refused { .. } => policy.refused_sends += 1,
            Record::Deliver { slot, node, ids } => {
                for id in ids {
                    sync.deliveries += 1;
                    match due.remove(&(*id, *node)) {
                        Some(d) if schedule.next_awake(*node, d) == Some(*slot) => {}
                        _ => sync.violations += 1,
                    }
                }
            }
            Record::Query(q) => match q.outcome {
                QueryOutcome::PolicyViolation => policy.policy_violations += 1,
                QueryOutcome::BudgetExceeded => policy.budget_exceeded += 1,
                QueryOutcome::Ok if q.caller != q.key_owner => policy.cross_key_ok += 1,
                _ => {}
            },
            Record::Filter { node, senders, .. } if honest[node.index()] => {
                filters.snapshots += 1;
                let bad = senders.iter().filter(|q| !honest[q.index()]).count();
                if 2 * bad >= senders.len() && !senders.is_empty() {
                    filters.corrupt_majority += 1;
                }
            }
            Record::Gpe { node, outcome, .. } if honest[node.index()] => {
                gpe_by_view
                    .entry(outcome.view)
                    .or_default()
                    .push((*node, outcome.block, outcome.grade));
            }
            _ => {}
        }
    }
    // anything left was never delivered although its recipient woke up in time
    for (&(_, node), &d) in &due {
        if schedule.next_awake(node, d).is_some() {
            sync.violations += 1;
        }
    }

    let bits = wake_bits(trace, &schedule);
    let wakeness = match cfg.protocol {
        ProtocolKind::FluctuatingCompiled => check_d_valid(&schedule, &bits, 0, &link_sends, cfg.delta + 1),
        ProtocolKind::DecayingCompiled => check_d_valid(&schedule, &bits, 3 * cfg.alpha(), &[], 0),
        _ => ValidityReport::default(),
    };

    let mut depth_timing = DepthTiming::default();
    let mut verified: Vec<(NodeId, u64)> = bits.iter().map(|b| (b.owner, b.lo)).collect();
    if cfg.protocol == ProtocolKind::FluctuatingCompiled {
        verified.sort();
        verified.dedup();
        for (owner, d) in verified {
            depth_timing.values_checked += 1;
            let Some(&sent) = first_link.get(&(owner, d)) else {
                continue;
            };
            if sent < d {
                depth_timing.early += 1;
            }
            if !(d.saturating_sub(1)..=sent).any(|s| schedule.is_awake(owner, s)) {
                depth_timing.absent_prover += 1;
            }
        }
    }

    let mut gpe = GpeStats::default();
    for (&v, outs) in &gpe_by_view {
        gpe.views += 1;
        let all_good = outs.iter().all(|(_, b, g)| {
            *g == 1 && b.and_then(|b| proposer_of.get(&b)).is_some_and(|p| honest[p.index()])
        });
        if all_good {
            gpe.valid_views += 1;
        }
        gpe.per_view.push((v, all_good));
        if let Some((_, Some(b1), _)) = outs.iter().find(|(_, _, g)| *g == 1) {
            if outs.iter().any(|(_, b, _)| b.is_some_and(|b| b != *b1)) {
                gpe.inconsistent_views += 1;
            }
        }
    }

    let attack = match cfg.adversary.strategy {
        StrategyName::Passive | StrategyName::Silent | StrategyName::Equivocate => AttackOutcome::NoAttack,
        _ if safety.count > 0 => AttackOutcome::Succeeded,
        _ => AttackOutcome::Blocked,
    };

    Ok(Metrics {
        protocol: cfg.protocol,
        mode: cfg.adversary_mode,
        strategy: cfg.adversary.strategy,
        n,
        horizon: cfg.horizon,
        seed: cfg.seed,
        safety,
        liveness,
        latency,
        comm,
        wakeness,
        depth_timing,
        policy,
        synchrony: sync,
        unverifiable,
        filters,
        gpe,
        attack,
    })
}
