//! The base atomic-broadcast protocol: one graded proposal election per view.
//!
//! A view has four phases, each Δ slots apart, starting at `(v - 1) * L`:
//!
//! 0. grade the previous view's second-round votes (decide on grade 1, lock on
//!    any grade), then propose on top of the lock;
//! 1. vote for the lowest-ticket valid proposal extending the lock;
//! 2. snapshot the first-round votes received and forward all of them;
//! 3. certify a block backed by a strict majority of every first-round signer
//!    known so far, and cast a second-round vote for it (or for nothing).
//!
//! Every decision reads only messages admitted by the caller's filter, so a node
//! that deletes non-admitted messages acts identically.

use super::messages::{InnerBody, Packet, ProtoMsg};
use crate::config::ScenarioConfig;
use crate::ledger::{Block, BlockStore, Seed};
use crate::oracle::{OracleHub, VrfOutput};
use crate::types::{Digest, NodeId, Payload, Slot};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

/// Most payloads a single proposal carries.
pub const MAX_BLOCK_PAYLOADS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PiParams {
    pub delta: u64,
    pub view_len: u64,
    pub alpha: u64,
    /// Messages older than this many slots are dropped.
    pub window: u64,
}

impl PiParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        PiParams {
            delta: cfg.delta,
            view_len: cfg.view_len(),
            alpha: cfg.alpha(),
            window: cfg.stateless_window(),
        }
    }

    pub fn view_of(&self, t: Slot) -> u64 {
        t / self.view_len + 1
    }

    pub fn view_start(&self, v: u64) -> Slot {
        (v - 1) * self.view_len
    }
}

pub fn seed_input(view_start: Slot, parent: Digest) -> Vec<u8> {
    let mut b = b"seed".to_vec();
    b.extend_from_slice(&view_start.to_le_bytes());
    b.extend_from_slice(&parent.to_bytes());
    b
}

pub fn ticket_input(view: u64) -> Vec<u8> {
    let mut b = b"ticket".to_vec();
    b.extend_from_slice(&view.to_le_bytes());
    b
}

/// Which received messages a node may act on.
pub trait MsgFilter {
    fn sender(&self, p: NodeId) -> bool;

    fn packet(&self, pkt: &Packet, _blocks: &BlockStore) -> bool {
        self.sender(pkt.sender())
    }
}

/// Admits exactly the listed senders.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SenderSet(pub BTreeSet<NodeId>);

impl MsgFilter for SenderSet {
    fn sender(&self, p: NodeId) -> bool {
        self.0.contains(&p)
    }
}

/// Admits everything.
pub struct AdmitAll;

impl MsgFilter for AdmitAll {
    fn sender(&self, _: NodeId) -> bool {
        true
    }
}

/// Result of one graded proposal election as seen by one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpeOutcome {
    pub view: u64,
    pub block: Option<Digest>,
    pub grade: u8,
}

#[derive(Clone, Debug, Default)]
pub struct PiStep {
    pub sends: Vec<ProtoMsg>,
    pub gpe: Option<GpeOutcome>,
    pub decided_changed: bool,
}

/// Permissibility predicate: the seed is the proposer's VRF on the view start and
/// parent hash, and the block carries the epoch of its view.
pub fn permissible(hub: &OracleHub, params: &PiParams, block: &Block) -> bool {
    let (Some(seed), Some(parent), Some(proposer)) = (block.seed, block.parent, block.proposer) else {
        return false;
    };
    if block.view == 0 {
        return false;
    }
    let start = params.view_start(block.view);
    block.epoch == start / params.alpha
        && hub.vrf_verify(&VrfOutput {
            value: seed.value,
            proof: seed.proof,
            key_owner: proposer,
            input: seed_input(start, parent),
        })
}

#[derive(Clone)]
pub struct Pi {
    pub id: NodeId,
    params: PiParams,
    inbox: Vec<(Slot, Arc<Packet>)>,
    pool: Vec<Payload>,
    pool_set: HashSet<Payload>,
    lock: Digest,
    decided: Digest,
    snapshot: Option<(u64, Vec<Arc<Packet>>)>,
    cert: Option<(u64, Digest)>,
    /// Grade-1 outcomes that conflicted with the decided log and were ignored.
    pub refused: u64,
}

impl Pi {
    pub fn new(id: NodeId, params: PiParams, genesis: Digest) -> Self {
        Pi {
            id,
            params,
            inbox: Vec::new(),
            pool: Vec::new(),
            pool_set: HashSet::new(),
            lock: genesis,
            decided: genesis,
            snapshot: None,
            cert: None,
            refused: 0,
        }
    }

    pub fn params(&self) -> &PiParams {
        &self.params
    }

    pub fn decided(&self) -> Digest {
        self.decided
    }

    pub fn lock(&self) -> Digest {
        self.lock
    }

    pub fn stored(&self) -> impl Iterator<Item = &Arc<Packet>> {
        self.inbox.iter().map(|(_, p)| p)
    }

    pub fn add_inputs(&mut self, payloads: impl IntoIterator<Item = Payload>) {
        for p in payloads {
            if self.pool_set.insert(p.clone()) {
                self.pool.push(p);
            }
        }
    }

    /// Keeps usable base-protocol messages received at `t`.
    pub fn receive(&mut self, t: Slot, pkts: &[Arc<Packet>]) {
        for p in pkts {
            let relevant = matches!(
                p.msg,
                Some(
                    ProtoMsg::Proposal { .. }
                        | ProtoMsg::Vote1 { .. }
                        | ProtoMsg::Forward { .. }
                        | ProtoMsg::Vote2 { .. }
                )
            );
            if relevant && p.sig_ok {
                self.inbox.push((t, p.clone()));
            }
        }
        let w = self.params.window;
        self.inbox.retain(|(r, _)| r + w >= t);
    }

    /// Messages held in the inbox and the phase-2Δ snapshot.
    pub fn held(&self) -> usize {
        self.inbox.len() + self.snapshot.as_ref().map_or(0, |(_, s)| s.len())
    }

    /// Drops every stored message the filter rejects.
    pub fn retain_admitted(&mut self, filter: &dyn MsgFilter, blocks: &BlockStore) {
        self.inbox.retain(|(_, p)| filter.packet(p, blocks));
        if let Some((_, snap)) = &mut self.snapshot {
            snap.retain(|p| filter.packet(p, blocks));
        }
    }

    fn admitted<'a>(
        &'a self,
        filter: &'a dyn MsgFilter,
        blocks: &'a BlockStore,
    ) -> impl Iterator<Item = &'a Arc<Packet>> + 'a {
        self.inbox
            .iter()
            .map(|(_, p)| p)
            .filter(move |p| filter.packet(p, blocks))
    }

    fn extends(blocks: &BlockStore, a: &Digest, b: &Digest) -> bool {
        blocks.extends(a, b).unwrap_or(false)
    }

    /// Runs the phase action due at `t`, if any. `anchor` is a block the caller
    /// already trusts; the lock moves to it when it extends the lock.
    pub fn step(
        &mut self,
        hub: &mut OracleHub,
        blocks: &mut BlockStore,
        t: Slot,
        filter: &dyn MsgFilter,
        anchor: Option<Digest>,
    ) -> PiStep {
        let p = self.params;
        let v = p.view_of(t);
        let start = p.view_start(v);
        let mut out = PiStep::default();
        if t == start {
            if v >= 2 {
                let g = self.grade(blocks, v - 1, filter);
                out.decided_changed = self.apply_grade(blocks, &g);
                out.gpe = Some(g);
            }
            if let Some(a) = anchor {
                if a != self.lock && Self::extends(blocks, &a, &self.lock) {
                    self.lock = a;
                }
            }
            if !Self::extends(blocks, &self.lock, &self.decided) {
                self.lock = self.decided;
            }
            if let Some(m) = self.propose(hub, blocks, v, t) {
                out.sends.push(m);
            }
        } else if t == start + p.delta {
            out.sends.push(self.vote1(hub, blocks, v, filter));
        } else if t == start + 2 * p.delta {
            let snap: Vec<Arc<Packet>> = self
                .admitted(filter, blocks)
                .filter(|pk| matches!(pk.msg, Some(ProtoMsg::Vote1 { view, .. }) if view == v))
                .cloned()
                .collect();
            let votes = snap.iter().map(|pk| pk.signed.clone()).collect();
            self.snapshot = Some((v, snap));
            out.sends.push(ProtoMsg::Forward { view: v, votes });
        } else if t == start + 3 * p.delta {
            if let Some(m) = self.vote2(blocks, v, filter) {
                out.sends.push(m);
            }
        }
        out
    }

    fn grade(&self, blocks: &BlockStore, w: u64, filter: &dyn MsgFilter) -> GpeOutcome {
        let mut by_signer: BTreeMap<NodeId, BTreeSet<Option<Digest>>> = BTreeMap::new();
        for pk in self.admitted(filter, blocks) {
            if let Some(ProtoMsg::Vote2 { view, block }) = pk.msg {
                if view == w {
                    by_signer.entry(pk.sender()).or_default().insert(block);
                }
            }
        }
        let d = by_signer.len();
        let mut count: BTreeMap<Digest, usize> = BTreeMap::new();
        for votes in by_signer.values() {
            if let [Some(b)] = votes.iter().collect::<Vec<_>>()[..] {
                *count.entry(*b).or_default() += 1;
            }
        }
        if let Some((&b, _)) = count.iter().find(|(_, &c)| 2 * c > d) {
            return GpeOutcome {
                view: w,
                block: Some(b),
                grade: 1,
            };
        }
        if let Some((cv, b)) = self.cert {
            if cv == w {
                return GpeOutcome {
                    view: w,
                    block: Some(b),
                    grade: 0,
                };
            }
        }
        let max = count.values().copied().max().unwrap_or(0);
        let top: Vec<Digest> = count.iter().filter(|(_, &c)| c == max).map(|(b, _)| *b).collect();
        GpeOutcome {
            view: w,
            block: if max > 0 && top.len() == 1 { Some(top[0]) } else { None },
            grade: 0,
        }
    }

    /// Returns whether the decided tip moved.
    fn apply_grade(&mut self, blocks: &BlockStore, g: &GpeOutcome) -> bool {
        let Some(b) = g.block else {
            return false;
        };
        if !blocks.contains(&b) {
            return false;
        }
        if !Self::extends(blocks, &b, &self.decided) {
            if g.grade == 1 && !Self::extends(blocks, &self.decided, &b) {
                self.refused += 1;
            }
            return false;
        }
        self.lock = b;
        if g.grade == 1 && b != self.decided {
            self.decided = b;
            return true;
        }
        false
    }

    fn propose(&mut self, hub: &mut OracleHub, blocks: &mut BlockStore, v: u64, t: Slot) -> Option<ProtoMsg> {
        let parent = self.lock;
        let done: HashSet<Payload> = blocks.payloads(&parent).ok()?.into_iter().collect();
        let content: Vec<Payload> = self
            .pool
            .iter()
            .filter(|x| !done.contains(*x))
            .take(MAX_BLOCK_PAYLOADS)
            .cloned()
            .collect();
        let seed = hub.vrf_eval(self.id, self.id, seed_input(t, parent), t).ok()?;
        let ticket = hub.vrf_eval(self.id, self.id, ticket_input(v), t).ok()?;
        let block = Block {
            content,
            parent: Some(parent),
            view: v,
            epoch: t / self.params.alpha,
            seed: Some(Seed {
                value: seed.value,
                proof: seed.proof,
            }),
            proposer: Some(self.id),
        };
        blocks.insert(block.clone()).ok()?;
        Some(ProtoMsg::Proposal { block, ticket })
    }

    fn vote1(&mut self, hub: &OracleHub, blocks: &BlockStore, v: u64, filter: &dyn MsgFilter) -> ProtoMsg {
        let mut by_signer: BTreeMap<NodeId, Vec<(&Block, &VrfOutput)>> = BTreeMap::new();
        for pk in self.admitted(filter, blocks) {
            if let Some(ProtoMsg::Proposal { block, ticket }) = &pk.msg {
                if block.view == v {
                    let e = by_signer.entry(pk.sender()).or_default();
                    if !e.iter().any(|(b, _)| *b == block) {
                        e.push((block, ticket));
                    }
                }
            }
        }
        let mut best: Option<(Digest, NodeId, Digest)> = None;
        let mut seen = Vec::new();
        for (&signer, props) in &by_signer {
            for (b, _) in props {
                seen.extend(b.content.iter().cloned());
            }
            let [(block, ticket)] = props[..] else {
                continue;
            };
            let id = block.id(&blocks.hash_fn());
            let ok = block.proposer == Some(signer)
                && ticket.key_owner == signer
                && ticket.input == ticket_input(v)
                && hub.vrf_verify(ticket)
                && permissible(hub, &self.params, block)
                && blocks.valid(&id).unwrap_or(false)
                && Self::extends(blocks, &id, &self.lock);
            if ok && best.map_or(true, |(tv, ts, _)| (ticket.value, signer) < (tv, ts)) {
                best = Some((ticket.value, signer, id));
            }
        }
        self.add_inputs(seen);
        ProtoMsg::Vote1 {
            view: v,
            block: best.map(|(_, _, id)| id),
        }
    }

    fn vote2(&mut self, blocks: &BlockStore, v: u64, filter: &dyn MsgFilter) -> Option<ProtoMsg> {
        let snap = match &self.snapshot {
            Some((sv, snap)) if *sv == v => snap,
            _ => return None,
        };
        // every first-round vote known from admitted senders, direct or forwarded
        let mut known: BTreeMap<NodeId, BTreeSet<Option<Digest>>> = BTreeMap::new();
        for pk in self.admitted(filter, blocks) {
            match &pk.msg {
                Some(ProtoMsg::Vote1 { view, block }) if *view == v => {
                    known.entry(pk.sender()).or_default().insert(*block);
                }
                Some(ProtoMsg::Forward { view, .. }) if *view == v => {
                    for inner in &pk.inner {
                        if let (true, InnerBody::Vote1 { view, block }) = (inner.ok, &inner.body) {
                            if *view == v && filter.sender(inner.signed.signer) {
                                known.entry(inner.signed.signer).or_default().insert(*block);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        let d = known.len();
        let equivocators: BTreeSet<NodeId> = known
            .iter()
            .filter(|(_, s)| s.len() > 1)
            .map(|(p, _)| *p)
            .collect();
        let mut count: BTreeMap<Digest, BTreeSet<NodeId>> = BTreeMap::new();
        for pk in snap {
            if let Some(ProtoMsg::Vote1 { block: Some(b), .. }) = pk.msg {
                if !equivocators.contains(&pk.sender()) && filter.packet(pk, blocks) {
                    count.entry(b).or_default().insert(pk.sender());
                }
            }
        }
        let certified = count
            .iter()
            .find(|(_, s)| 2 * s.len() > d)
            .map(|(b, _)| *b);
        if let Some(b) = certified {
            self.cert = Some((v, b));
            if Self::extends(blocks, &b, &self.decided) {
                self.lock = b;
            }
        }
        Some(ProtoMsg::Vote2 {
            view: v,
            block: certified,
        })
    }
}
