//! Participation-pattern generators.
//!
//! Corrupt rows follow the requested pattern; honest rows are then repaired slot by
//! slot (by waking honest nodes) until the corrupt-window bound holds.

use crate::config::{Pattern, ScenarioConfig};
use crate::error::{Error, Result};
use crate::schedule::ParticipationSchedule;
use crate::types::{Slot, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct GenParams {
    pub pattern: Pattern,
    pub n: usize,
    pub horizon: u64,
    pub corrupt: usize,
    pub t_forward: Window,
    pub t_backward: Window,
    pub rho: f64,
    pub min_session: u64,
    pub admissible: bool,
    pub seed: u64,
}

impl GenParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        GenParams {
            pattern: cfg.schedule.pattern,
            n: cfg.n,
            horizon: cfg.horizon,
            corrupt: cfg.schedule.corrupt,
            t_forward: cfg.t_forward,
            t_backward: cfg.t_backward,
            rho: cfg.rho,
            min_session: cfg.schedule.min_session.unwrap_or(2 * cfg.view_len()),
            admissible: cfg.schedule.admissible,
            seed: cfg.seed,
        }
    }
}

/// Builds the schedule described by `cfg`, generated or explicit.
pub fn schedule_for(cfg: &ScenarioConfig) -> Result<ParticipationSchedule> {
    if cfg.schedule.pattern == Pattern::Explicit {
        let h = cfg.horizon as usize;
        let awake = cfg
            .schedule
            .sessions
            .iter()
            .map(|row| {
                let mut r = vec![false; h];
                for &[a, b] in row {
                    for s in a..b {
                        r[s as usize] = true;
                    }
                }
                r
            })
            .collect();
        return Ok(ParticipationSchedule::new(awake, cfg.corrupt_flags()));
    }
    gen_schedule(&GenParams::from_config(cfg))
}

/// Alternating awake/asleep sessions starting in a random phase.
fn sessions(rng: &mut ChaCha8Rng, horizon: usize, min_on: u64, max_off: u64) -> Vec<bool> {
    let mut row = vec![false; horizon];
    let mut t = 0usize;
    let mut on = rng.gen_bool(0.5);
    while t < horizon {
        let len = if on {
            rng.gen_range(min_on..=3 * min_on)
        } else {
            rng.gen_range(1..=max_off.max(1))
        } as usize;
        let end = (t + len).min(horizon);
        if on {
            row[t..end].iter_mut().for_each(|a| *a = true);
        }
        t = end;
        on = !on;
    }
    row
}

pub fn gen_schedule(p: &GenParams) -> Result<ParticipationSchedule> {
    let h = p.horizon as usize;
    let n = p.n;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5c4e_d01e);
    let corrupt: Vec<bool> = (0..n).map(|i| i >= n - p.corrupt.min(n)).collect();
    let m = p.min_session.max(1);
    let mut awake = vec![vec![false; h]; n];
    for i in 0..n {
        let c = corrupt[i];
        awake[i] = match p.pattern {
            Pattern::Consistent => vec![true; h],
            Pattern::Increasing => {
                let w = if h == 0 { 0 } else { rng.gen_range(0..h) };
                (0..h).map(|s| s >= w).collect()
            }
            Pattern::Decaying if c => {
                let end = if h == 0 { 0 } else { rng.gen_range(1..=h) };
                (0..h).map(|s| s < end).collect()
            }
            Pattern::Decaying | Pattern::FullyFluctuating => sessions(&mut rng, h, m, 2 * m),
            Pattern::Explicit => unreachable!("explicit schedules are not generated"),
        };
    }
    let mut s = ParticipationSchedule::new(awake, corrupt);
    repair(&mut s, p, &mut rng)?;
    Ok(s)
}

fn repair(s: &mut ParticipationSchedule, p: &GenParams, rng: &mut ChaCha8Rng) -> Result<()> {
    let h = s.horizon();
    if h == 0 {
        return Ok(());
    }
    let last = h - 1;
    let prefix: Vec<Vec<u32>> = s
        .corrupt_nodes()
        .map(|c| {
            let mut acc = 0;
            std::iter::once(0)
                .chain(s.awake[c.index()].iter().map(|&a| {
                    acc += a as u32;
                    acc
                }))
                .collect()
        })
        .collect();
    let honest: Vec<usize> = s.honest().map(|p| p.index()).collect();
    for t in 0..h {
        let f = if p.admissible {
            let lo = p.t_forward.back_from(t) as usize;
            let hi = p.t_backward.forward_from(t, last) as usize;
            prefix.iter().filter(|q| q[hi + 1] > q[lo]).count()
        } else {
            0
        };
        loop {
            let n_t = s.awake_count(t);
            if (f as f64) < p.rho * n_t as f64 && n_t > 0 {
                break;
            }
            let asleep: Vec<usize> = honest
                .iter()
                .copied()
                .filter(|&i| !s.awake[i][t as usize])
                .collect();
            if asleep.is_empty() {
                return Err(Error::Unsatisfiable(format!(
                    "slot {t}: {f} corrupt in window but only {n_t} awake with every honest node up"
                )));
            }
            let i = asleep[rng.gen_range(0..asleep.len())];
            let end = match p.pattern {
                Pattern::Increasing => h,
                _ => (t + p.min_session.max(1)).min(h),
            };
            for u in t..end {
                s.awake[i][u as usize] = true;
            }
        }
    }
    Ok(())
}

/// Awake-slot sets of a node as `[start, end)` intervals.
pub fn intervals(row: &[bool]) -> Vec<[Slot; 2]> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &a) in row.iter().enumerate() {
        match (a, start) {
            (true, None) => start = Some(t as Slot),
            (false, Some(s)) => {
                out.push([s, t as Slot]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push([s, row.len() as Slot]);
    }
    out
}
