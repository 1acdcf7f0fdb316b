//! Brute-force reference oracles for tests. They share the keyed PRF with the
//! production code (so hashes and VRF values agree) and nothing else.

use crate::oracle::{Prf, DOM_VRF};
use crate::types::{Digest, Window};
use std::collections::{BTreeSet, HashMap};

/// `f(t, T_f, T_b)` by explicit set union over the window's slots.
/// `awake[node][slot]`, `corrupt[node]`.
pub fn brute_window_count(awake: &[Vec<bool>], corrupt: &[bool], t: u64, tf: Window, tb: Window) -> usize {
    let horizon = awake.first().map_or(0, |r| r.len()) as i64;
    let t = t as i64;
    let lo = match tf {
        Window::Finite(w) => t - w as i64,
        Window::Infinite => i64::MIN,
    };
    let hi = match tb {
        Window::Finite(w) => t + w as i64,
        Window::Infinite => i64::MAX,
    };
    let mut seen = BTreeSet::new();
    for s in 0..horizon {
        if s < lo || s > hi {
            continue;
        }
        for (p, row) in awake.iter().enumerate() {
            if corrupt[p] && row[s as usize] {
                seen.insert(p);
            }
        }
    }
    seen.len()
}

/// Whether `a` extends `b` in the tree given as `(block, parent)` pairs, by walking
/// every path from `a` towards the root.
pub fn brute_ancestor(tree: &[(Digest, Option<Digest>)], a: Digest, b: Digest) -> bool {
    let parent: HashMap<Digest, Option<Digest>> = tree.iter().copied().collect();
    let mut path = vec![a];
    let mut cur = a;
    while let Some(Some(p)) = parent.get(&cur) {
        if path.len() > tree.len() {
            break;
        }
        path.push(*p);
        cur = *p;
    }
    path.contains(&b)
}

/// One GPE view set-up: `n` nodes all awake, the highest `corrupt` ids corrupt and
/// hostile whenever they hold the winning ticket.
#[derive(Clone, Copy, Debug)]
pub struct GpeSetup {
    pub n: usize,
    pub corrupt: usize,
    pub seed: u64,
    pub lambda: u32,
    pub views: u64,
}

fn ticket(prf: &Prf, owner: u32, view: u64, lambda: u32) -> Digest {
    let mut input = b"ticket".to_vec();
    input.extend_from_slice(&view.to_le_bytes());
    prf.eval(DOM_VRF, owner, &input, lambda.clamp(1, 128))
}

/// Per view `1..=views`: whether the lowest ticket belongs to an honest node,
/// which with everyone awake is exactly when every honest node outputs that
/// honest proposal with grade 1.
pub fn brute_gpe_validity(s: &GpeSetup) -> Vec<bool> {
    let prf = Prf::new(s.seed);
    (1..=s.views)
        .map(|v| {
            let (_, winner) = (0..s.n as u32)
                .map(|p| (ticket(&prf, p, v, s.lambda), p))
                .min()
                .expect("n >= 1");
            (winner as usize) < s.n - s.corrupt
        })
        .collect()
}

pub fn frequency(xs: &[bool]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().filter(|&&x| x).count() as f64 / xs.len() as f64
}
