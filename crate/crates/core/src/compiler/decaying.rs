//! Compiler for decaying participation: epochs of `α` slots, decided blocks
//! re-announced every epoch, and a log rebuilt one epoch at a time from
//! majorities of those announcements.

use super::{Filter, NodeCtx, NodeOutput, PiPlan};
use crate::config::ScenarioConfig;
use crate::ledger::BlockStore;
use crate::protocol::pi::{Pi, SenderSet};
use crate::protocol::{Packet, ProtoMsg};
use crate::types::{Digest, NodeId, Slot};
use crate::wakeness::WakeBit;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

/// Epochs before the window start whose announcements still admit a sender.
pub const EPOCH_SLACK: u64 = 3;

#[derive(Clone)]
pub struct DecayingNode {
    pub pi: Pi,
    alpha: u64,
    /// Slots after an epoch ends before it is recovered: one view plus Δ, so every
    /// honest announcement about it has arrived.
    settle: u64,
    window: u64,
    rebroadcast: u64,
    genesis: Digest,
    /// `recovered[k]`: block of epoch `k` (or the previous entry, if epoch `k`
    /// produced no announcements).
    recovered: Vec<Digest>,
    /// epoch → sender → announced blocks of that epoch
    decides: BTreeMap<u64, BTreeMap<NodeId, BTreeSet<Digest>>>,
    heard: BTreeSet<NodeId>,
    reported: HashSet<(NodeId, u64)>,
    /// Deemed-awake sets computed in `prepare`, reused in `finish`.
    deemed_now: Vec<(u64, BTreeSet<NodeId>)>,
    log: Digest,
    last_rebroadcast: Option<Slot>,
}

impl DecayingNode {
    pub fn new(cfg: &ScenarioConfig, pi: Pi, genesis: Digest) -> Self {
        DecayingNode {
            pi,
            alpha: cfg.alpha(),
            settle: cfg.view_len() + cfg.delta,
            window: cfg.stateless_window(),
            rebroadcast: cfg.rebroadcast(),
            genesis,
            recovered: Vec::new(),
            decides: BTreeMap::new(),
            heard: BTreeSet::new(),
            reported: HashSet::new(),
            deemed_now: Vec::new(),
            log: genesis,
            last_rebroadcast: None,
        }
    }

    pub fn log_tip(&self) -> Digest {
        self.log
    }

    pub fn recovered(&self) -> &[Digest] {
        &self.recovered
    }

    pub fn epoch_of(&self, t: Slot) -> u64 {
        t / self.alpha
    }

    /// Latest recovered block of an epoch before `e`.
    fn base_for(&self, e: u64) -> Digest {
        if e == 0 || self.recovered.is_empty() {
            return self.genesis;
        }
        self.recovered[(e as usize - 1).min(self.recovered.len() - 1)]
    }

    /// Senders that announced an epoch-`e` block extending `base`.
    fn supporters(&self, blocks: &BlockStore, e: u64, base: &Digest) -> BTreeMap<NodeId, Vec<Digest>> {
        let mut out: BTreeMap<NodeId, Vec<Digest>> = BTreeMap::new();
        if let Some(m) = self.decides.get(&e) {
            for (&q, bs) in m {
                for b in bs {
                    if blocks.extends(b, base).unwrap_or(false) && b != base {
                        out.entry(q).or_default().push(*b);
                    }
                }
            }
        }
        out
    }

    /// Nodes deemed awake during epoch `e`.
    pub fn deemed(&self, blocks: &BlockStore, e: u64) -> BTreeSet<NodeId> {
        if e == 0 {
            return self.heard.clone();
        }
        self.supporters(blocks, e, &self.base_for(e))
            .into_keys()
            .collect()
    }

    /// Recovers complete epochs in order while each has a strict-majority block.
    fn update_log(&mut self, blocks: &BlockStore, t: Slot) {
        loop {
            let k = self.recovered.len() as u64;
            if t < (k + 1) * self.alpha + self.settle {
                return;
            }
            let base = if k == 0 { self.genesis } else { self.recovered[k as usize - 1] };
            let sup = self.supporters(blocks, k, &base);
            if sup.is_empty() {
                self.recovered.push(base);
                continue;
            }
            let base_h = blocks.height(&base).unwrap_or(0);
            let mut backers: HashMap<Digest, BTreeSet<NodeId>> = HashMap::new();
            for (&q, bs) in &sup {
                for b in bs {
                    let mut cur = *b;
                    while blocks.height(&cur).unwrap_or(0) > base_h {
                        let is_k = blocks.get(&cur).is_some_and(|s| s.block.epoch == k);
                        if is_k {
                            backers.entry(cur).or_default().insert(q);
                        }
                        cur = blocks.parent(&cur).expect("above base");
                    }
                }
            }
            let d = sup.len();
            let best = backers
                .iter()
                .filter(|(_, s)| 2 * s.len() > d)
                .map(|(b, _)| (blocks.height(b).unwrap_or(0), *b))
                .max();
            match best {
                Some((_, b)) => self.recovered.push(b),
                None => return,
            }
        }
    }

    pub fn prepare(&mut self, ctx: &mut NodeCtx, inbox: &[Arc<Packet>]) -> PiPlan {
        let t = ctx.t;
        for p in inbox.iter().filter(|p| p.usable()) {
            self.heard.insert(p.sender());
            if let Some(ProtoMsg::Decide { block, epoch }) = &p.msg {
                let id = block.id(&ctx.blocks.hash_fn());
                if block.epoch == *epoch && ctx.blocks.contains(&id) {
                    let set = self
                        .decides
                        .entry(*epoch)
                        .or_default()
                        .entry(p.sender())
                        .or_default();
                    // keep only the deepest of each chain a sender announces
                    let b = &*ctx.blocks;
                    if !set.iter().any(|x| b.extends(x, &id).unwrap_or(false)) {
                        set.retain(|x| !b.extends(&id, x).unwrap_or(false));
                        set.insert(id);
                    }
                }
            }
        }
        self.update_log(ctx.blocks, t);
        let hi = self.epoch_of(t);
        let lo = self.epoch_of(t.saturating_sub(self.window)).saturating_sub(EPOCH_SLACK);
        self.deemed_now = (lo..=hi).map(|e| (e, self.deemed(ctx.blocks, e))).collect();
        let s = self.deemed_now.iter().flat_map(|(_, d)| d.iter().copied()).collect();
        PiPlan {
            filter: Filter::Epochs {
                senders: SenderSet(s),
                recovered: self.recovered.clone(),
            },
            anchor: Some(self.log),
        }
    }

    /// Deepest block of each epoch on the path to `tip`, restricted to the blocks
    /// after `from`.
    fn per_epoch(blocks: &BlockStore, from: &Digest, tip: &Digest) -> Vec<(u64, Digest)> {
        let mut out: BTreeMap<u64, Digest> = BTreeMap::new();
        for b in blocks.segment(from, tip).unwrap_or_default() {
            if let Some(s) = blocks.get(&b) {
                out.insert(s.block.epoch, b);
            }
        }
        out.into_iter().collect()
    }

    pub fn finish(&mut self, ctx: &mut NodeCtx, out: &mut NodeOutput) {
        let t = ctx.t;
        let blocks = &*ctx.blocks;
        let old = self.log;
        for cand in [self.recovered.last().copied(), Some(self.pi.decided())].into_iter().flatten() {
            if blocks.extends(&cand, &self.log).unwrap_or(false) {
                self.log = cand;
            }
        }
        let due = self
            .last_rebroadcast
            .map_or(true, |s| t >= s + self.rebroadcast);
        let announce = if due {
            self.last_rebroadcast = Some(t);
            Self::per_epoch(blocks, &self.genesis, &self.log)
        } else if self.log != old {
            Self::per_epoch(blocks, &old, &self.log)
        } else {
            Vec::new()
        };
        for (epoch, b) in announce {
            let block = blocks.get(&b).expect("on own log").block.clone();
            out.sends.push(ProtoMsg::Decide { block, epoch });
        }
        for (e, d) in &self.deemed_now {
            let e = *e;
            for &q in d {
                if self.reported.insert((q, e)) {
                    out.wake.push(WakeBit {
                        holder: self.pi.id,
                        owner: q,
                        lo: e * self.alpha,
                        hi: (e + 1) * self.alpha - 1,
                        at: t,
                    });
                }
            }
        }
    }
}
