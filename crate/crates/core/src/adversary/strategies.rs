//! Adversary strategies. Corrupt nodes act through the same oracle hub and
//! transport as everyone else; the hub enforces the key-use policy.

use crate::compiler::Node;
use crate::config::{ScenarioConfig, StrategyName};
use crate::engine::SentRecord;
use crate::ledger::BlockStore;
use crate::oracle::{OracleHub, SignedMessage};
use crate::protocol::ProtoMsg;
use crate::schedule::ParticipationSchedule;
use crate::types::{NodeId, Slot};

use super::attacks::{BackwardSim, ForwardSim, KeyTransfer};

/// A message the adversary asks the transport to carry from `via`.
#[derive(Clone, Debug)]
pub struct AdvSend {
    pub via: NodeId,
    pub signed: SignedMessage,
    pub to: Vec<(NodeId, u64)>,
}

/// What the adversary may see and touch at slot `t`. `sent` holds every message
/// sent before `t` (and, inside `corrupt_outgoing`, the ones sent earlier in
/// `t`); `nodes` is read-only and strategies only look at corrupt nodes' state.
pub struct AdvCtx<'a> {
    pub t: Slot,
    pub cfg: &'a ScenarioConfig,
    pub schedule: &'a ParticipationSchedule,
    pub hub: &'a mut OracleHub,
    pub blocks: &'a mut BlockStore,
    pub sent: &'a [SentRecord],
    pub nodes: &'a [Node],
}

impl AdvCtx<'_> {
    pub fn all(&self, delay: u64) -> Vec<(NodeId, u64)> {
        self.schedule.nodes().map(|p| (p, delay)).collect()
    }

    /// Signs `msg` as `key_owner` (through `caller`) and broadcasts it from `caller`.
    pub fn sign_all(&mut self, caller: NodeId, key_owner: NodeId, msg: &ProtoMsg, delay: u64) -> Option<AdvSend> {
        let signed = self.hub.sign(caller, key_owner, msg.encode(), self.t).ok()?;
        Some(AdvSend {
            via: caller,
            signed,
            to: self.all(delay),
        })
    }

    pub fn delta(&self) -> u64 {
        self.cfg.delta
    }
}

pub trait Strategy {
    fn name(&self) -> StrategyName;

    /// Delay the adversary picks for an honest message.
    fn honest_delay(&self, cfg: &ScenarioConfig, _from: NodeId, _to: NodeId) -> u64 {
        cfg.adversary.honest_delay.unwrap_or(cfg.delta).clamp(1, cfg.delta)
    }

    /// Whether an awake corrupt node runs the honest code this slot.
    fn runs_honest_code(&self, _node: NodeId, _t: Slot) -> bool {
        true
    }

    /// Extra actions at the start of slot `t`, before any node steps.
    fn on_slot(&mut self, _ctx: &mut AdvCtx) -> Vec<AdvSend> {
        Vec::new()
    }

    /// Turns what a corrupt node's honest code wants to send into actual sends.
    fn corrupt_outgoing(&mut self, ctx: &mut AdvCtx, node: NodeId, msgs: Vec<ProtoMsg>) -> Vec<AdvSend> {
        let d = self.honest_delay(ctx.cfg, node, node);
        msgs.iter()
            .filter_map(|m| ctx.sign_all(node, node, m, d))
            .collect()
    }
}

pub struct Passive;

impl Strategy for Passive {
    fn name(&self) -> StrategyName {
        StrategyName::Passive
    }
}

pub struct Silent;

impl Strategy for Silent {
    fn name(&self) -> StrategyName {
        StrategyName::Silent
    }

    fn runs_honest_code(&self, _node: NodeId, _t: Slot) -> bool {
        false
    }
}

/// Corrupt nodes run the honest code but split every proposal and vote: one half
/// of the nodes gets the honest message quickly, the other half a conflicting one
/// late.
pub struct Equivocate {
    fast: u64,
}

impl Equivocate {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Equivocate {
            fast: cfg.adversary.fast_delay.unwrap_or(1).clamp(1, cfg.delta),
        }
    }
}

impl Strategy for Equivocate {
    fn name(&self) -> StrategyName {
        StrategyName::Equivocate
    }

    fn corrupt_outgoing(&mut self, ctx: &mut AdvCtx, node: NodeId, msgs: Vec<ProtoMsg>) -> Vec<AdvSend> {
        let n = ctx.cfg.n as u32;
        let slow = ctx.delta();
        let first: Vec<(NodeId, u64)> = (0..n).filter(|i| i % 2 == 0).map(|i| (NodeId(i), self.fast)).collect();
        let second: Vec<(NodeId, u64)> = (0..n).filter(|i| i % 2 == 1).map(|i| (NodeId(i), slow)).collect();
        let mut out = Vec::new();
        for m in msgs {
            let twin = match &m {
                ProtoMsg::Proposal { block, ticket } => {
                    let mut b = block.clone();
                    b.content = vec![format!("equiv-{node}-{}", block.view).into_bytes()];
                    if ctx.blocks.insert(b.clone()).is_err() {
                        None
                    } else {
                        Some(ProtoMsg::Proposal {
                            block: b,
                            ticket: ticket.clone(),
                        })
                    }
                }
                ProtoMsg::Vote1 { view, block: Some(_) } => Some(ProtoMsg::Vote1 { view: *view, block: None }),
                ProtoMsg::Vote2 { view, block: Some(_) } => Some(ProtoMsg::Vote2 { view: *view, block: None }),
                _ => None,
            };
            let Ok(a) = ctx.hub.sign(node, node, m.encode(), ctx.t) else {
                continue;
            };
            match twin {
                Some(tw) => {
                    out.push(AdvSend {
                        via: node,
                        signed: a,
                        to: first.clone(),
                    });
                    if let Ok(b) = ctx.hub.sign(node, node, tw.encode(), ctx.t) {
                        out.push(AdvSend {
                            via: node,
                            signed: b,
                            to: second.clone(),
                        });
                    }
                }
                None => out.push(AdvSend {
                    via: node,
                    signed: a,
                    to: ctx.all(slow),
                }),
            }
        }
        out
    }
}

pub fn build(cfg: &ScenarioConfig) -> Box<dyn Strategy> {
    match cfg.adversary.strategy {
        StrategyName::Passive => Box::new(Passive),
        StrategyName::Silent => Box::new(Silent),
        StrategyName::Equivocate => Box::new(Equivocate::new(cfg)),
        StrategyName::KeyTransfer => Box::new(KeyTransfer::new(cfg)),
        StrategyName::ForwardSim => Box::new(ForwardSim::new(cfg)),
        StrategyName::BackwardSim => Box::new(BackwardSim::new(cfg)),
    }
}
