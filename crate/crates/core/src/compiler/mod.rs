//! Per-node runtimes: the base protocol alone, the two participation compilers
//! wrapped around it, and the naive longest-chain strawman.

pub mod decaying;
pub mod fluctuating;

use crate::config::ScenarioConfig;
use crate::ledger::BlockStore;
use crate::oracle::OracleHub;
use crate::protocol::pi::{GpeOutcome, MsgFilter, Pi, PiParams, SenderSet};
use crate::protocol::{Packet, ProtoMsg};
use crate::types::{Digest, NodeId, Payload, ProtocolKind, Slot};
use crate::wakeness::WakeBit;
use std::sync::Arc;

pub use decaying::DecayingNode;
pub use fluctuating::FluctNode;

/// What a node hands back to the engine after one awake slot.
#[derive(Clone, Debug, Default)]
pub struct NodeOutput {
    pub sends: Vec<ProtoMsg>,
    pub gpe: Option<GpeOutcome>,
    /// Senders the base protocol was allowed to act on, when the runtime filters.
    pub filter: Option<Vec<NodeId>>,
    pub wake: Vec<WakeBit>,
}

/// Message filter handed to the base protocol.
#[derive(Clone, Debug)]
pub enum Filter {
    All,
    Senders(SenderSet),
    /// Senders, plus: messages about an epoch-`e` block count only if the block
    /// extends the latest recovered block of an epoch before `e`.
    Epochs { senders: SenderSet, recovered: Vec<Digest> },
}

impl Filter {
    pub fn senders(&self) -> Option<Vec<NodeId>> {
        match self {
            Filter::All => None,
            Filter::Senders(s) | Filter::Epochs { senders: s, .. } => Some(s.0.iter().copied().collect()),
        }
    }
}

fn block_ref(pkt: &Packet, blocks: &BlockStore) -> Option<(Digest, u64)> {
    match &pkt.msg {
        Some(ProtoMsg::Proposal { block, .. }) => Some((block.id(&blocks.hash_fn()), block.epoch)),
        Some(ProtoMsg::Vote1 { block: Some(b), .. }) | Some(ProtoMsg::Vote2 { block: Some(b), .. }) => {
            blocks.get(b).map(|s| (*b, s.block.epoch))
        }
        _ => None,
    }
}

impl MsgFilter for Filter {
    fn sender(&self, p: NodeId) -> bool {
        match self {
            Filter::All => true,
            Filter::Senders(s) | Filter::Epochs { senders: s, .. } => s.sender(p),
        }
    }

    fn packet(&self, pkt: &Packet, blocks: &BlockStore) -> bool {
        if !self.sender(pkt.sender()) {
            return false;
        }
        let Filter::Epochs { recovered, .. } = self else {
            return true;
        };
        let Some((id, e)) = block_ref(pkt, blocks) else {
            return true;
        };
        if e == 0 || recovered.is_empty() {
            return true;
        }
        let idx = (e as usize - 1).min(recovered.len() - 1);
        blocks.extends(&id, &recovered[idx]).unwrap_or(false)
    }
}

/// Borrowed engine state a node may use during its step.
pub struct NodeCtx<'a> {
    pub hub: &'a mut OracleHub,
    pub blocks: &'a mut BlockStore,
    pub t: Slot,
}

/// Base protocol run directly. Its filter admits every stored message, which is
/// the same as admitting exactly the senders heard from within the window.
#[derive(Clone)]
pub struct BaseNode {
    pub pi: Pi,
}

/// Base protocol plus adoption of the longest announced decided chain.
#[derive(Clone)]
pub struct StrawmanNode {
    pub pi: Pi,
    log: Digest,
    announced: Digest,
}

#[derive(Clone)]
pub enum Node {
    Base(BaseNode),
    Decaying(Box<DecayingNode>),
    Fluctuating(Box<FluctNode>),
    Strawman(StrawmanNode),
}

/// Prepared input for the base protocol step.
pub struct PiPlan {
    pub filter: Filter,
    pub anchor: Option<Digest>,
}

impl Node {
    pub fn new(cfg: &ScenarioConfig, id: NodeId, hub: &OracleHub, genesis: Digest) -> Node {
        let pi = Pi::new(id, PiParams::from_config(cfg), genesis);
        match cfg.protocol {
            ProtocolKind::Base => Node::Base(BaseNode { pi }),
            ProtocolKind::Strawman => Node::Strawman(StrawmanNode {
                pi,
                log: genesis,
                announced: genesis,
            }),
            ProtocolKind::DecayingCompiled => Node::Decaying(Box::new(DecayingNode::new(cfg, pi, genesis))),
            ProtocolKind::FluctuatingCompiled => {
                Node::Fluctuating(Box::new(FluctNode::new(cfg, pi, hub, genesis)))
            }
        }
    }

    pub fn pi(&self) -> &Pi {
        match self {
            Node::Base(b) => &b.pi,
            Node::Strawman(s) => &s.pi,
            Node::Decaying(d) => &d.pi,
            Node::Fluctuating(f) => &f.pi,
        }
    }

    fn pi_mut(&mut self) -> &mut Pi {
        match self {
            Node::Base(b) => &mut b.pi,
            Node::Strawman(s) => &mut s.pi,
            Node::Decaying(d) => &mut d.pi,
            Node::Fluctuating(f) => &mut f.pi,
        }
    }

    pub fn id(&self) -> NodeId {
        self.pi().id
    }

    /// Tip of the node's output log.
    pub fn log_tip(&self) -> Digest {
        match self {
            Node::Base(b) => b.pi.decided(),
            Node::Strawman(s) => s.log,
            Node::Decaying(d) => d.log_tip(),
            Node::Fluctuating(f) => f.log_tip(),
        }
    }

    /// Overlay processing that precedes the base protocol's step.
    pub fn prepare(&mut self, ctx: &mut NodeCtx, inbox: &[Arc<Packet>], inputs: Vec<Payload>) -> PiPlan {
        self.pi_mut().add_inputs(inputs);
        match self {
            Node::Base(_) => PiPlan {
                filter: Filter::All,
                anchor: None,
            },
            Node::Strawman(s) => {
                for p in inbox.iter().filter(|p| p.usable()) {
                    if let Some(ProtoMsg::Decide { block, .. }) = &p.msg {
                        let id = block.id(&ctx.blocks.hash_fn());
                        let longer = ctx.blocks.valid(&id).unwrap_or(false)
                            && ctx.blocks.height(&id).unwrap_or(0) > ctx.blocks.height(&s.log).unwrap_or(0);
                        if longer {
                            s.log = id;
                        }
                    }
                }
                PiPlan {
                    filter: Filter::All,
                    anchor: Some(s.log),
                }
            }
            Node::Decaying(d) => d.prepare(ctx, inbox),
            Node::Fluctuating(f) => f.prepare(ctx, inbox),
        }
    }

    /// One awake slot.
    pub fn step(&mut self, ctx: &mut NodeCtx, inbox: &[Arc<Packet>], inputs: Vec<Payload>) -> NodeOutput {
        let plan = self.prepare(ctx, inbox, inputs);
        let t = ctx.t;
        let pi = self.pi_mut();
        pi.receive(t, inbox);
        let step = pi.step(ctx.hub, ctx.blocks, t, &plan.filter, plan.anchor);
        let mut out = NodeOutput {
            filter: plan.filter.senders(),
            gpe: step.gpe,
            ..NodeOutput::default()
        };
        out.sends = step.sends;
        match self {
            Node::Base(_) => {}
            Node::Strawman(s) => {
                let d = s.pi.decided();
                if ctx.blocks.extends(&d, &s.log).unwrap_or(false) {
                    s.log = d;
                }
                if s.log != s.announced {
                    s.announced = s.log;
                    if let Some(b) = ctx.blocks.get(&s.log) {
                        out.sends.push(ProtoMsg::Decide {
                            block: b.block.clone(),
                            epoch: b.block.epoch,
                        });
                    }
                }
            }
            Node::Decaying(d) => d.finish(ctx, &mut out),
            Node::Fluctuating(f) => f.finish(ctx, &mut out),
        }
        out
    }

    /// Runs the base protocol's step twice from this node's state at `ctx.t`: once
    /// on everything received and once after deleting every message its filter
    /// rejects. Returns both action lists and the number of messages deleted.
    pub fn replay_filtered(
        &self,
        ctx: &mut NodeCtx,
        inbox: &[Arc<Packet>],
        inputs: Vec<Payload>,
    ) -> (Vec<ProtoMsg>, Vec<ProtoMsg>, usize) {
        let mut me = self.clone();
        let plan = me.prepare(ctx, inbox, inputs);
        let t = ctx.t;
        let mut a = me.pi().clone();
        let mut b = me.pi().clone();
        a.receive(t, inbox);
        b.receive(t, inbox);
        let before = b.held();
        b.retain_admitted(&plan.filter, ctx.blocks);
        let deleted = before - b.held();
        let mut hub_a = ctx.hub.clone();
        let mut hub_b = ctx.hub.clone();
        let mut blocks_a = ctx.blocks.clone();
        let mut blocks_b = ctx.blocks.clone();
        let sa = a.step(&mut hub_a, &mut blocks_a, t, &plan.filter, plan.anchor);
        let sb = b.step(&mut hub_b, &mut blocks_b, t, &plan.filter, plan.anchor);
        (sa.sends, sb.sends, deleted)
    }
}
