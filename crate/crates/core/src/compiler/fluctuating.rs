//! Compiler for fully fluctuating participation: VDF chains give each node a
//! wakeness vector, the base protocol only listens to nodes with a recent bit,
//! and the output log follows strict majorities of recently-awake nodes' tips.
//!
//! Chain depth trails the slot clock (each hand-off between nodes costs the
//! message delay), so "recent" is measured against the deepest depth the holder
//! has verified rather than against `t`.

use super::{Filter, NodeCtx, NodeOutput, PiPlan};
use crate::config::{ExtensionPolicy, ScenarioConfig};
use crate::ledger::BlockStore;
use crate::oracle::OracleHub;
use crate::protocol::messages::{encode_link, InnerBody, Link};
use crate::protocol::pi::{Pi, SenderSet};
use crate::protocol::{Packet, ProtoMsg};
use crate::types::{Digest, NodeId, Slot, Window};
use crate::wakeness::{genesis_value, sample_size, VdfChains, WakeBit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

#[derive(Clone)]
pub struct FluctNode {
    pub pi: Pi,
    pub chains: VdfChains,
    n: usize,
    delta: u64,
    window: u64,
    c_sample: f64,
    policy: ExtensionPolicy,
    seed: u64,
    /// Depth of every value this node has asked the VDF to extend.
    queried: HashMap<Digest, u64>,
    /// Latest decided tip each sender announced, with the slot it arrived.
    tips: BTreeMap<NodeId, (Slot, Digest)>,
    log: Digest,
    deemed_now: BTreeSet<NodeId>,
}

impl FluctNode {
    pub fn new(cfg: &ScenarioConfig, pi: Pi, hub: &OracleHub, genesis: Digest) -> Self {
        let window = match cfg.t_backward {
            Window::Finite(w) => w,
            Window::Infinite => cfg.stateless_window(),
        };
        let id = pi.id;
        FluctNode {
            chains: VdfChains::new(id, cfg.n, genesis_value(hub)),
            pi,
            n: cfg.n,
            delta: cfg.delta,
            window,
            c_sample: cfg.params.c_sample,
            policy: cfg.params.extension,
            seed: cfg.seed,
            queried: HashMap::new(),
            tips: BTreeMap::new(),
            log: genesis,
            deemed_now: BTreeSet::new(),
        }
    }

    pub fn log_tip(&self) -> Digest {
        self.log
    }

    /// Owners with a verified link within `window` of the deepest verified depth.
    pub fn deemed(&self) -> BTreeSet<NodeId> {
        let c = self.chains.max_depth();
        if c == 0 {
            return BTreeSet::new();
        }
        self.chains.awake_in(c.saturating_sub(self.window).max(1), c)
    }

    fn keep(&self) -> u64 {
        self.window + self.delta
    }

    pub fn prepare(&mut self, ctx: &mut NodeCtx, inbox: &[Arc<Packet>]) -> PiPlan {
        let t = ctx.t;
        let mut links = Vec::new();
        for p in inbox.iter().filter(|p| p.usable()) {
            if let Some(ProtoMsg::Links { tip, .. }) = &p.msg {
                for inner in p.inner.iter().filter(|i| i.ok) {
                    if let InnerBody::Link(l) = &inner.body {
                        links.push(l.clone());
                    }
                }
                if let Some(tip) = tip {
                    self.tips.insert(p.sender(), (t, *tip));
                }
            }
        }
        self.chains.ingest(t, links, self.keep());
        self.deemed_now = self.deemed();
        self.adopt_majority_tip(ctx.blocks, t);
        PiPlan {
            filter: Filter::Senders(SenderSet(self.deemed_now.clone())),
            anchor: Some(self.log),
        }
    }

    /// Moves the log to the deepest block extending it that more than half of the
    /// deemed-awake senders' recent tips extend.
    fn adopt_majority_tip(&mut self, blocks: &BlockStore, t: Slot) {
        let s = &self.deemed_now;
        if s.is_empty() {
            return;
        }
        let Ok(h) = blocks.height(&self.log) else {
            return;
        };
        let mut support: HashMap<Digest, usize> = HashMap::new();
        for (q, (at, tip)) in &self.tips {
            if !s.contains(q) || at + self.window < t {
                continue;
            }
            if blocks.ancestor_at(tip, h).ok().flatten() != Some(self.log) {
                continue;
            }
            let mut cur = *tip;
            while blocks.height(&cur).unwrap_or(0) > h {
                *support.entry(cur).or_default() += 1;
                cur = blocks.parent(&cur).expect("above log");
            }
        }
        if let Some((_, b)) = support
            .iter()
            .filter(|(_, &c)| 2 * c > s.len())
            .map(|(b, _)| (blocks.height(b).unwrap_or(0), *b))
            .max()
        {
            self.log = b;
        }
    }

    pub fn finish(&mut self, ctx: &mut NodeCtx, out: &mut NodeOutput) {
        let t = ctx.t;
        let me = self.pi.id;
        let d = self.pi.decided();
        if ctx.blocks.extends(&d, &self.log).unwrap_or(false) {
            self.log = d;
        }

        // links for outputs queried at earlier awake slots
        let mut signed = Vec::new();
        let mut own = Vec::new();
        for o in ctx.hub.vdf_collect(me, t) {
            let input = Digest(u128::from_le_bytes(o.input[..16].try_into().expect("16-byte input")));
            let Some(depth) = self.queried.remove(&input) else {
                continue;
            };
            let l = Link {
                input,
                value: o.value,
                proof: o.proof,
                depth: depth + 1,
                extender: me,
                query_slot: o.query_slot,
            };
            if let Ok(s) = ctx.hub.sign(me, me, encode_link(&l), t) {
                signed.push(s);
                own.push(l);
            }
        }
        self.chains.ingest(t, own, self.keep());
        if t % 64 == 0 {
            let c = self.chains.max_depth();
            self.chains.prune(c.saturating_sub(4 * self.keep()));
        }

        // extend chains for the next slot
        let k = sample_size(self.c_sample, self.n, t).min(self.n.saturating_sub(1));
        let min_depth = self.chains.max_depth().saturating_sub(self.delta + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ((me.0 as u64) << 40) ^ t.wrapping_mul(0x9e37_79b9));
        let inputs = self
            .chains
            .choose_inputs(self.policy, k, min_depth, &self.deemed_now, &mut rng);
        let bytes: Vec<Vec<u8>> = inputs.iter().map(|(v, _)| Link::vdf_input(*v, me)).collect();
        if ctx.hub.vdf_eval(me, bytes, t).is_ok() {
            for (v, depth) in inputs {
                self.queried.insert(v, depth);
            }
        }

        out.sends.push(ProtoMsg::Links {
            links: signed,
            tip: Some(self.log),
        });
        out.wake.extend(self.chains.take_new_bits().into_iter().map(|(owner, depth)| WakeBit {
            holder: me,
            owner,
            lo: depth,
            hi: depth,
            at: t,
        }));
    }
}
