//! Atomic-broadcast checkers over recorded log histories.

use crate::schedule::ParticipationSchedule;
use crate::types::{NodeId, Payload, Slot};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Change to `node`'s log at `slot`: cut it to `keep` entries (if set), then append.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub slot: Slot,
    pub node: NodeId,
    #[serde(default)]
    pub keep: Option<usize>,
    pub appended: Vec<Payload>,
}

/// An environment input handed to a node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEvent {
    pub slot: Slot,
    pub node: NodeId,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub slot: Slot,
    pub i: NodeId,
    pub j: NodeId,
    pub index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyReport {
    /// Number of (slot, node) pairs whose log disagrees with the longest honest log.
    pub count: u64,
    /// First few violations, for diagnostics.
    pub samples: Vec<SafetyViolation>,
}

const MAX_SAMPLES: usize = 32;

fn first_mismatch(a: &[Payload], b: &[Payload]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y)
}

/// Compares every honest log with the longest honest log after each slot with a
/// change. Logs of sleeping nodes keep their last value.
pub fn check_safety(events: &[LogEvent], honest: &[bool]) -> SafetyReport {
    let n = honest.len();
    let mut logs: Vec<Vec<Payload>> = vec![Vec::new(); n];
    let mut report = SafetyReport::default();
    let mut i = 0;
    while i < events.len() {
        let t = events[i].slot;
        while i < events.len() && events[i].slot == t {
            let e = &events[i];
            let log = &mut logs[e.node.index()];
            if let Some(k) = e.keep {
                log.truncate(k);
            }
            log.extend(e.appended.iter().cloned());
            i += 1;
        }
        let Some(m) = (0..n)
            .filter(|&k| honest[k])
            .max_by_key(|&k| (logs[k].len(), std::cmp::Reverse(k)))
        else {
            continue;
        };
        for k in (0..n).filter(|&k| honest[k] && k != m) {
            if let Some(index) = first_mismatch(&logs[k], &logs[m]) {
                report.count += 1;
                if report.samples.len() < MAX_SAMPLES {
                    report.samples.push(SafetyViolation {
                        slot: t,
                        i: NodeId(k as u32),
                        j: NodeId(m as u32),
                        index,
                    });
                }
            }
        }
    }
    report
}

/// First slot at which each payload entered each node's log.
pub fn first_seen(events: &[LogEvent], n: usize) -> Vec<HashMap<Payload, Slot>> {
    let mut out: Vec<HashMap<Payload, Slot>> = vec![HashMap::new(); n];
    for e in events {
        for p in &e.appended {
            out[e.node.index()].entry(p.clone()).or_insert(e.slot);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LivenessMiss {
    pub input_slot: Slot,
    pub node: NodeId,
    /// First awake slot `>= input_slot + ell` at which the payload was missing.
    pub slot: Slot,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LivenessReport {
    pub checked: u64,
    /// Inputs with `t + ell` beyond the horizon: vacuously satisfied.
    pub unchecked: u64,
    pub misses: u64,
    pub samples: Vec<LivenessMiss>,
}

/// Inputs given to awake honest nodes must be in every honest log at every slot
/// `>= t + ell` at which that node is awake.
pub fn check_liveness(
    inputs: &[InputEvent],
    events: &[LogEvent],
    schedule: &ParticipationSchedule,
    ell: u64,
) -> LivenessReport {
    let n = schedule.n();
    let horizon = schedule.horizon();
    let seen = first_seen(events, n);
    let mut report = LivenessReport::default();
    for x in relevant_inputs(inputs, schedule) {
        let from = x.slot + ell;
        if from >= horizon {
            report.unchecked += 1;
            continue;
        }
        report.checked += 1;
        for j in schedule.honest() {
            let Some(first_awake) = schedule.next_awake(j, from) else {
                continue;
            };
            let ok = seen[j.index()]
                .get(&x.payload)
                .is_some_and(|&s| s <= first_awake);
            if !ok {
                report.misses += 1;
                if report.samples.len() < MAX_SAMPLES {
                    report.samples.push(LivenessMiss {
                        input_slot: x.slot,
                        node: j,
                        slot: first_awake,
                    });
                }
            }
        }
    }
    report
}

fn relevant_inputs<'a>(
    inputs: &'a [InputEvent],
    schedule: &'a ParticipationSchedule,
) -> impl Iterator<Item = &'a InputEvent> + 'a {
    inputs
        .iter()
        .filter(|x| !schedule.is_corrupt(x.node) && schedule.is_awake(x.node, x.slot))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub decided: u64,
    pub censored: u64,
    /// In units of Δ.
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub samples: Vec<f64>,
}

/// Latency of an input: slots until every honest node awake at that slot has it,
/// divided by Δ.
pub fn latency_stats(
    inputs: &[InputEvent],
    events: &[LogEvent],
    schedule: &ParticipationSchedule,
    delta: u64,
) -> LatencyStats {
    let n = schedule.n();
    let horizon = schedule.horizon();
    let seen = first_seen(events, n);
    let honest: Vec<NodeId> = schedule.honest().collect();
    let mut samples = Vec::new();
    let mut censored = 0;
    for x in relevant_inputs(inputs, schedule) {
        let done = (x.slot..horizon).find(|&s| {
            honest.iter().all(|&j| {
                !schedule.is_awake(j, s)
                    || seen[j.index()].get(&x.payload).is_some_and(|&f| f <= s)
            })
        });
        match done {
            Some(s) => samples.push((s - x.slot) as f64 / delta as f64),
            None => censored += 1,
        }
    }
    summarize(samples, censored)
}

pub fn summarize(mut samples: Vec<f64>, censored: u64) -> LatencyStats {
    samples.sort_by(f64::total_cmp);
    let k = samples.len();
    let pick = |q: f64| -> f64 {
        if k == 0 {
            return 0.0;
        }
        let idx = ((q * k as f64).ceil() as usize).clamp(1, k) - 1;
        samples[idx]
    };
    LatencyStats {
        decided: k as u64,
        censored,
        mean: if k == 0 {
            0.0
        } else {
            samples.iter().sum::<f64>() / k as f64
        },
        median: pick(0.5),
        p95: pick(0.95),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(slot: Slot, node: u32, xs: &[&[u8]]) -> LogEvent {
        LogEvent {
            slot,
            node: NodeId(node),
            keep: None,
            appended: xs.iter().map(|x| x.to_vec()).collect(),
        }
    }

    #[test]
    fn single_node_is_safe() {
        let r = check_safety(&[ev(0, 0, &[b"a"]), ev(1, 0, &[b"b"])], &[true]);
        assert_eq!(r.count, 0);
    }

    #[test]
    fn prefix_is_consistent() {
        let r = check_safety(
            &[ev(0, 0, &[b"a", b"b"]), ev(0, 1, &[b"a", b"b", b"c"])],
            &[true, true],
        );
        assert_eq!(r.count, 0);
    }

    #[test]
    fn divergence_found_at_index() {
        let r = check_safety(
            &[ev(3, 0, &[b"a", b"b"]), ev(3, 1, &[b"a", b"x"])],
            &[true, true],
        );
        assert_eq!(r.count, 1);
        assert_eq!(r.samples[0].index, 1);
        assert_eq!(r.samples[0].slot, 3);
    }

    #[test]
    fn rollback_then_divergence() {
        let mut cut = ev(2, 0, &[b"z"]);
        cut.keep = Some(0);
        let r = check_safety(
            &[ev(1, 0, &[b"a"]), ev(1, 1, &[b"a"]), cut],
            &[true, true],
        );
        assert_eq!(r.count, 1);
        assert_eq!(r.samples[0].slot, 2);
    }

    #[test]
    fn corrupt_logs_ignored() {
        let r = check_safety(
            &[ev(0, 0, &[b"a"]), ev(0, 1, &[b"z"])],
            &[true, false],
        );
        assert_eq!(r.count, 0);
    }

    #[test]
    fn liveness_unchecked_and_empty() {
        let s = ParticipationSchedule::always_awake(2, 10, vec![false; 2]);
        assert_eq!(check_liveness(&[], &[], &s, 4), LivenessReport::default());
        let x = InputEvent {
            slot: 8,
            node: NodeId(0),
            payload: b"x".to_vec(),
        };
        let r = check_liveness(&[x], &[], &s, 4);
        assert_eq!((r.unchecked, r.misses), (1, 0));
    }

    #[test]
    fn liveness_miss_and_hit() {
        let s = ParticipationSchedule::always_awake(2, 20, vec![false; 2]);
        let x = InputEvent {
            slot: 1,
            node: NodeId(0),
            payload: b"x".to_vec(),
        };
        let events = vec![ev(4, 0, &[b"x"]), ev(9, 1, &[b"x"])];
        assert_eq!(check_liveness(&[x.clone()], &events, &s, 8).misses, 0);
        assert_eq!(check_liveness(&[x], &events, &s, 4).misses, 1);
    }

    #[test]
    fn latency_exact_and_censored() {
        let s = ParticipationSchedule::always_awake(2, 20, vec![false; 2]);
        let inputs = vec![
            InputEvent {
                slot: 2,
                node: NodeId(0),
                payload: b"x".to_vec(),
            },
            InputEvent {
                slot: 3,
                node: NodeId(1),
                payload: b"y".to_vec(),
            },
        ];
        let events = vec![ev(4, 0, &[b"x"]), ev(4, 1, &[b"x"])];
        let st = latency_stats(&inputs, &events, &s, 2);
        assert_eq!(st.decided, 1);
        assert_eq!(st.censored, 1);
        assert_eq!(st.mean, 1.0);
    }
}
