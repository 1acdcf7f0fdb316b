//! Wakeness vectors backed by VDF chains.
//!
//! A holder sets bit `j` for owner `q` once it has verified a depth-`j` link
//! extended by `q`: the link is signed by `q`, its VDF output checks, and its input
//! is either the genesis value (depth 1) or the output of a link the holder has
//! itself verified at depth `j - 1`. Depth never exceeds the slot the link is
//! first sent in, so a bit at `j` proves the owner was awake at some slot `>= j`.

use crate::config::ExtensionPolicy;
use crate::oracle::{OracleHub, SignedMessage};
use crate::protocol::messages::Link;
use crate::schedule::ParticipationSchedule;
use crate::types::{Digest, NodeId, Slot};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub fn genesis_value(hub: &OracleHub) -> Digest {
    hub.hash(b"genesis-vdf")
}

/// `ceil(c * ln(n (t + 2))^2)`, at least 1.
pub fn sample_size(c_sample: f64, n: usize, t: Slot) -> usize {
    let l = ((n as f64) * (t as f64 + 2.0)).ln();
    ((c_sample * l * l).ceil() as usize).max(1)
}

/// A holder's claim that `owner` was awake somewhere in `[lo, hi]`, made at `at`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WakeBit {
    pub holder: NodeId,
    pub owner: NodeId,
    pub lo: Slot,
    pub hi: Slot,
    pub at: Slot,
}

/// A chain of links ending in `value`, as presented to a holder.
#[derive(Clone, Debug)]
pub struct DepthValue {
    pub value: Digest,
    pub prover: NodeId,
    pub depth: u64,
    /// Oldest first; link `i` has depth `i + 1`.
    pub links: Vec<SignedMessage>,
}

/// Checks a depth value against the messages a holder received. Depth 0 is the
/// genesis value itself.
pub fn verify_depth_value(
    hub: &OracleHub,
    genesis: Digest,
    received: &[SignedMessage],
    cand: &DepthValue,
) -> bool {
    if cand.depth == 0 {
        return cand.value == genesis && cand.links.is_empty();
    }
    if cand.links.len() as u64 != cand.depth {
        return false;
    }
    let mut prev = genesis;
    for (i, s) in cand.links.iter().enumerate() {
        if !received.contains(s) || !hub.verify_sig(s) {
            return false;
        }
        let Ok(l) = bincode::deserialize::<Link>(&s.payload) else {
            return false;
        };
        let ok = l.extender == s.signer
            && l.depth == i as u64 + 1
            && l.input == prev
            && hub.vdf_check(&Link::vdf_input(l.input, l.extender), l.value, l.proof);
        if !ok {
            return false;
        }
        prev = l.value;
    }
    let last: Link = bincode::deserialize(&cand.links.last().expect("depth >= 1").payload)
        .expect("decoded above");
    prev == cand.value && last.extender == cand.prover
}

/// One holder's verified links and the vectors derived from them.
#[derive(Clone, Debug)]
pub struct VdfChains {
    pub holder: NodeId,
    genesis: Digest,
    verified: HashMap<Digest, u64>,
    tips: BTreeMap<NodeId, (u64, Digest)>,
    bits: Vec<BTreeSet<u64>>,
    pending: Vec<(Slot, Link)>,
    new_bits: Vec<(NodeId, u64)>,
    max_depth: u64,
}

impl VdfChains {
    pub fn new(holder: NodeId, n: usize, genesis: Digest) -> Self {
        let mut verified = HashMap::new();
        verified.insert(genesis, 0);
        VdfChains {
            holder,
            genesis,
            verified,
            tips: BTreeMap::new(),
            bits: vec![BTreeSet::new(); n],
            pending: Vec::new(),
            new_bits: Vec::new(),
            max_depth: 0,
        }
    }

    pub fn genesis(&self) -> Digest {
        self.genesis
    }

    /// Depth of a verified value.
    pub fn depth_of(&self, value: &Digest) -> Option<u64> {
        self.verified.get(value).copied()
    }

    pub fn max_depth(&self) -> u64 {
        self.max_depth
    }

    /// Deepest verified link extended by `owner`.
    pub fn tip(&self, owner: NodeId) -> Option<(u64, Digest)> {
        self.tips.get(&owner).copied()
    }

    pub fn bits(&self, owner: NodeId) -> &BTreeSet<u64> {
        &self.bits[owner.index()]
    }

    pub fn has_bit_in(&self, owner: NodeId, lo: u64, hi: u64) -> bool {
        lo <= hi && self.bits[owner.index()].range(lo..=hi).next().is_some()
    }

    /// Owners with a bit in `[lo, hi]`.
    pub fn awake_in(&self, lo: u64, hi: u64) -> BTreeSet<NodeId> {
        (0..self.bits.len() as u32)
            .map(NodeId)
            .filter(|&q| self.has_bit_in(q, lo, hi))
            .collect()
    }

    pub fn take_new_bits(&mut self) -> Vec<(NodeId, u64)> {
        std::mem::take(&mut self.new_bits)
    }

    fn try_accept(&mut self, l: &Link) -> bool {
        let want = match self.verified.get(&l.input) {
            Some(&d) => d + 1,
            None => return false,
        };
        if l.depth != want {
            return false;
        }
        self.verified.entry(l.value).or_insert(l.depth);
        let tip = self.tips.entry(l.extender).or_insert((0, self.genesis));
        if l.depth > tip.0 {
            *tip = (l.depth, l.value);
        }
        self.max_depth = self.max_depth.max(l.depth);
        if let Some(row) = self.bits.get_mut(l.extender.index()) {
            if row.insert(l.depth) {
                self.new_bits.push((l.extender, l.depth));
            }
        }
        true
    }

    /// Adds links whose signature and VDF output already check. Links whose input
    /// is not yet verified wait, and are dropped after `keep` slots.
    pub fn ingest(&mut self, t: Slot, links: impl IntoIterator<Item = Link>, keep: u64) {
        self.pending.extend(links.into_iter().map(|l| (t, l)));
        loop {
            let before = self.pending.len();
            let pending = std::mem::take(&mut self.pending);
            for (r, l) in pending {
                if !self.try_accept(&l) {
                    self.pending.push((r, l));
                }
            }
            if self.pending.len() == before {
                break;
            }
        }
        self.pending.retain(|(r, _)| r + keep >= t);
    }

    /// Forgets verified values shallower than `min_depth`. Links built on them are
    /// no longer accepted; their bits would be far outside any window anyway.
    pub fn prune(&mut self, min_depth: u64) {
        let g = self.genesis;
        self.verified.retain(|v, d| *d >= min_depth || *v == g);
    }

    /// Values to extend this slot, deepest first: the holder's own tip, then up to
    /// `k` other provers drawn uniformly from `eligible` whose tips are at least
    /// `min_depth` deep. Falls back to genesis when nothing qualifies.
    pub fn choose_inputs<R: Rng>(
        &self,
        policy: ExtensionPolicy,
        k: usize,
        min_depth: u64,
        eligible: &BTreeSet<NodeId>,
        rng: &mut R,
    ) -> Vec<(Digest, u64)> {
        let mut out: Vec<(Digest, u64)> = Vec::new();
        if let Some((d, v)) = self.tip(self.holder) {
            out.push((v, d));
        }
        if policy == ExtensionPolicy::Sampling {
            let pool: Vec<(Digest, u64)> = eligible
                .iter()
                .filter(|&&q| q != self.holder)
                .filter_map(|&q| self.tip(q))
                .filter(|&(d, _)| d >= min_depth)
                .map(|(d, v)| (v, d))
                .collect();
            let k = k.min(pool.len());
            for i in sample(rng, pool.len(), k).into_iter() {
                out.push(pool[i]);
            }
        }
        if out.is_empty() {
            out.push((self.genesis, 0));
        }
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out.dedup_by_key(|x| x.0);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidityIssue {
    /// The owner was never awake in `[lo - d, at]`.
    Soundness(WakeBit),
    /// An honest owner's link sent at `sent` was still unverified by an honest
    /// holder awake at `slot`.
    Completeness {
        holder: NodeId,
        owner: NodeId,
        depth: u64,
        sent: Slot,
        slot: Slot,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub soundness: u64,
    pub completeness: u64,
    pub bits_checked: u64,
    pub samples: Vec<ValidityIssue>,
}

/// An honest owner's deepest link in a batch sent at `slot`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkSend {
    pub owner: NodeId,
    pub slot: Slot,
    pub depth: u64,
}

/// Soundness: every bit's owner was awake at some slot in `[lo - d, at]`.
/// Completeness: for each honest `LinkSend`, every honest holder has a bit for the
/// owner at that depth by its first awake slot `>= slot + allowance`.
pub fn check_d_valid(
    schedule: &ParticipationSchedule,
    bits: &[WakeBit],
    d: u64,
    sends: &[LinkSend],
    allowance: u64,
) -> ValidityReport {
    let mut r = ValidityReport::default();
    let push = |r: &mut ValidityReport, i: ValidityIssue| {
        if r.samples.len() < 32 {
            r.samples.push(i);
        }
    };
    for b in bits {
        r.bits_checked += 1;
        let from = b.lo.saturating_sub(d);
        let ok = (from..=b.at).any(|s| schedule.is_awake(b.owner, s));
        if !ok {
            r.soundness += 1;
            push(&mut r, ValidityIssue::Soundness(*b));
        }
    }
    if sends.is_empty() {
        return r;
    }
    let mut first: HashMap<(NodeId, NodeId, u64), Slot> = HashMap::new();
    for b in bits {
        for j in b.lo..=b.hi {
            first.entry((b.holder, b.owner, j)).or_insert(b.at);
            if j - b.lo > 4096 {
                break;
            }
        }
    }
    for s in sends.iter().filter(|s| !schedule.is_corrupt(s.owner)) {
        for h in schedule.honest() {
            let Some(slot) = schedule.next_awake(h, s.slot + allowance) else {
                continue;
            };
            let ok = first
                .get(&(h, s.owner, s.depth))
                .is_some_and(|&at| at <= slot);
            if !ok {
                r.completeness += 1;
                push(
                    &mut r,
                    ValidityIssue::Completeness {
                        holder: h,
                        owner: s.owner,
                        depth: s.depth,
                        sent: s.slot,
                        slot,
                    },
                );
            }
        }
    }
    r
}
