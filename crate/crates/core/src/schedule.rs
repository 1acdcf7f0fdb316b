//! Participation schedules and the corrupt-window admissibility test.

use crate::types::{NodeId, Slot, Window};
use serde::{Deserialize, Serialize};

/// Who is awake when, and who is corrupt. Corruption is static.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationSchedule {
    /// `awake[node][slot]`.
    pub awake: Vec<Vec<bool>>,
    pub corrupt: Vec<bool>,
}

impl ParticipationSchedule {
    pub fn new(awake: Vec<Vec<bool>>, corrupt: Vec<bool>) -> Self {
        ParticipationSchedule { awake, corrupt }
    }

    /// Everyone awake at every slot.
    pub fn always_awake(n: usize, horizon: u64, corrupt: Vec<bool>) -> Self {
        ParticipationSchedule {
            awake: vec![vec![true; horizon as usize]; n],
            corrupt,
        }
    }

    pub fn n(&self) -> usize {
        self.awake.len()
    }

    pub fn horizon(&self) -> u64 {
        self.awake.first().map_or(0, |r| r.len() as u64)
    }

    pub fn is_awake(&self, node: NodeId, t: Slot) -> bool {
        self.awake
            .get(node.index())
            .and_then(|row| row.get(t as usize))
            .copied()
            .unwrap_or(false)
    }

    pub fn is_corrupt(&self, node: NodeId) -> bool {
        self.corrupt.get(node.index()).copied().unwrap_or(false)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n() as u32).map(NodeId)
    }

    pub fn honest(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|p| !self.is_corrupt(*p))
    }

    pub fn corrupt_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|p| self.is_corrupt(*p))
    }

    /// `n_t`.
    pub fn awake_count(&self, t: Slot) -> usize {
        self.awake
            .iter()
            .filter(|row| row.get(t as usize).copied().unwrap_or(false))
            .count()
    }

    pub fn awake_at(&self, t: Slot) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |p| self.is_awake(*p, t))
    }

    /// First slot with nobody awake, if any.
    pub fn first_empty_slot(&self) -> Option<Slot> {
        (0..self.horizon()).find(|&t| self.awake_count(t) == 0)
    }

    /// Next slot `>= t` at which `node` is awake.
    pub fn next_awake(&self, node: NodeId, t: Slot) -> Option<Slot> {
        let row = self.awake.get(node.index())?;
        (t as usize..row.len()).find(|&s| row[s]).map(|s| s as Slot)
    }
}

/// `f(t, T_f, T_b)`: distinct corrupt nodes awake anywhere in `[t - T_f, t + T_b]`,
/// clipped to the horizon.
pub fn corrupt_window_count(
    schedule: &ParticipationSchedule,
    t: Slot,
    t_forward: Window,
    t_backward: Window,
) -> usize {
    let horizon = schedule.horizon();
    if horizon == 0 {
        return 0;
    }
    let last = horizon - 1;
    let lo = t_forward.back_from(t).min(last) as usize;
    let hi = t_backward.forward_from(t, last) as usize;
    schedule
        .corrupt_nodes()
        .filter(|c| schedule.awake[c.index()][lo..=hi].iter().any(|&a| a))
        .count()
}

/// A slot where the corrupt window bound fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityViolation {
    pub slot: Slot,
    pub corrupt_in_window: usize,
    pub awake: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub violations: Vec<AdmissibilityViolation>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every slot with `f(t, T_f, T_b) >= rho * n_t`.
pub fn check_admissible(
    schedule: &ParticipationSchedule,
    t_forward: Window,
    t_backward: Window,
    rho: f64,
) -> AdmissibilityReport {
    let horizon = schedule.horizon();
    let mut report = AdmissibilityReport::default();
    if horizon == 0 {
        return report;
    }
    // prefix[c][s] = awake slots of corrupt c strictly before s
    let prefix: Vec<Vec<u32>> = schedule
        .corrupt_nodes()
        .map(|c| {
            let mut acc = 0u32;
            let mut row = Vec::with_capacity(horizon as usize + 1);
            row.push(0);
            for &a in &schedule.awake[c.index()] {
                acc += a as u32;
                row.push(acc);
            }
            row
        })
        .collect();
    let last = horizon - 1;
    for t in 0..horizon {
        let lo = t_forward.back_from(t) as usize;
        let hi = t_backward.forward_from(t, last) as usize;
        let f = prefix.iter().filter(|p| p[hi + 1] > p[lo]).count();
        let n_t = schedule.awake_count(t);
        if (f as f64) >= rho * n_t as f64 {
            report.violations.push(AdmissibilityViolation {
                slot: t,
                corrupt_in_window: f,
                awake: n_t,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(rows: &[&[u64]], corrupt: &[bool], horizon: usize) -> ParticipationSchedule {
        let awake = rows
            .iter()
            .map(|slots| {
                let mut row = vec![false; horizon];
                for &s in *slots {
                    row[s as usize] = true;
                }
                row
            })
            .collect();
        ParticipationSchedule::new(awake, corrupt.to_vec())
    }

    #[test]
    fn degenerate_window_counts_current_slot() {
        let s = sched(&[&[1], &[2], &[1, 2]], &[true, true, false], 4);
        assert_eq!(
            corrupt_window_count(&s, 1, Window::Finite(0), Window::Finite(0)),
            1
        );
        assert_eq!(
            corrupt_window_count(&s, 3, Window::Finite(0), Window::Finite(0)),
            0
        );
    }

    #[test]
    fn three_spread_corrupt_nodes() {
        let s = sched(&[&[1], &[5], &[9], &[0]], &[true, true, true, false], 12);
        assert_eq!(
            corrupt_window_count(&s, 5, Window::Finite(4), Window::Finite(4)),
            3
        );
        assert_eq!(
            corrupt_window_count(&s, 5, Window::Finite(3), Window::Finite(4)),
            2
        );
        assert_eq!(
            corrupt_window_count(&s, 5, Window::Infinite, Window::Finite(0)),
            2
        );
    }

    #[test]
    fn all_honest_counts_zero() {
        let s = ParticipationSchedule::always_awake(4, 10, vec![false; 4]);
        for t in 0..10 {
            assert_eq!(
                corrupt_window_count(&s, t, Window::Infinite, Window::Infinite),
                0
            );
        }
        assert!(check_admissible(&s, Window::Infinite, Window::Infinite, 0.1).is_admissible());
    }

    #[test]
    fn strict_inequality_at_half() {
        let s = ParticipationSchedule::always_awake(4, 6, vec![true, true, false, false]);
        let r = check_admissible(&s, Window::Finite(1), Window::Finite(1), 0.5);
        assert_eq!(r.violations.len(), 6);
        let s = ParticipationSchedule::always_awake(4, 6, vec![true, false, false, false]);
        assert!(check_admissible(&s, Window::Finite(1), Window::Finite(1), 0.5).is_admissible());
    }
}
