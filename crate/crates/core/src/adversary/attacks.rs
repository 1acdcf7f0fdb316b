//! Scripted attacks: key transfer, forward simulation and backward simulation.
//! Corrupt nodes otherwise run the honest code.

use super::strategies::{AdvCtx, AdvSend, Strategy};
use crate::compiler::Node;
use crate::config::{ScenarioConfig, StrategyName};
use crate::ledger::{Block, Seed};
use crate::protocol::messages::{encode_link, Link};
use crate::protocol::pi::{seed_input, PiParams};
use crate::protocol::ProtoMsg;
use crate::schedule::ParticipationSchedule;
use crate::types::{Digest, NodeId, Slot};

fn last_awake(s: &ParticipationSchedule, p: NodeId) -> Option<Slot> {
    (0..s.horizon()).rev().find(|&t| s.is_awake(p, t))
}

/// Corrupt node that stays awake longest; it receives everyone's keys.
fn transferee(s: &ParticipationSchedule) -> Option<NodeId> {
    s.corrupt_nodes()
        .filter_map(|p| last_awake(s, p).map(|l| (l, std::cmp::Reverse(p))))
        .max()
        .map(|(_, std::cmp::Reverse(p))| p)
}

/// A block by `proposer` with a genuine seed, inserted into the store.
fn forge_block(
    ctx: &mut AdvCtx,
    proposer: NodeId,
    parent: Digest,
    view: u64,
    content: Vec<u8>,
) -> Option<(Block, Digest)> {
    let p = PiParams::from_config(ctx.cfg);
    let start = p.view_start(view);
    let seed = ctx
        .hub
        .vrf_eval(proposer, proposer, seed_input(start, parent), ctx.t)
        .ok()?;
    let block = Block {
        content: vec![content],
        parent: Some(parent),
        view,
        epoch: start / p.alpha,
        seed: Some(Seed {
            value: seed.value,
            proof: seed.proof,
        }),
        proposer: Some(proposer),
    };
    let id = ctx.blocks.insert(block.clone()).ok()?;
    Some((block, id))
}

/// The longest-awake corrupt node re-signs every vote it sends under the keys of
/// corrupt nodes that are asleep, so they look awake, and announces fake epoch
/// blocks under all of them. Its honest decides are not re-signed: that would put
/// the borrowed keys behind the real chain too.
pub struct KeyTransfer {
    to: Option<NodeId>,
    forger: EpochForger,
}

impl KeyTransfer {
    pub fn new(_cfg: &ScenarioConfig) -> Self {
        KeyTransfer {
            to: None,
            forger: EpochForger::default(),
        }
    }
}

impl Strategy for KeyTransfer {
    fn name(&self) -> StrategyName {
        StrategyName::KeyTransfer
    }

    fn on_slot(&mut self, ctx: &mut AdvCtx) -> Vec<AdvSend> {
        self.forger.on_slot(ctx)
    }

    fn corrupt_outgoing(&mut self, ctx: &mut AdvCtx, node: NodeId, msgs: Vec<ProtoMsg>) -> Vec<AdvSend> {
        let to = *self.to.get_or_insert_with(|| transferee(ctx.schedule).unwrap_or(node));
        let d = self.honest_delay(ctx.cfg, node, node);
        let mut out: Vec<AdvSend> = msgs.iter().filter_map(|m| ctx.sign_all(node, node, m, d)).collect();
        if node != to {
            return out;
        }
        let sleepers: Vec<NodeId> = ctx
            .schedule
            .corrupt_nodes()
            .filter(|&q| q != node && !ctx.schedule.is_awake(q, ctx.t))
            .collect();
        for m in msgs.iter().filter(|m| {
            matches!(
                m,
                ProtoMsg::Vote1 { .. } | ProtoMsg::Vote2 { .. } | ProtoMsg::Forward { .. }
            )
        }) {
            for &q in &sleepers {
                out.extend(ctx.sign_all(node, q, m, d));
            }
        }
        out
    }
}

/// The longest-awake corrupt node announces, under every corrupt key, a fake block
/// on top of each epoch its own decaying compiler has just recovered.
#[derive(Default)]
struct EpochForger {
    to: Option<NodeId>,
}

impl EpochForger {
    fn on_slot(&mut self, ctx: &mut AdvCtx) -> Vec<AdvSend> {
        if self.to.is_none() {
            self.to = transferee(ctx.schedule);
        }
        let alpha = ctx.cfg.alpha();
        let Some(to) = self.to else {
            return Vec::new();
        };
        if ctx.t < alpha || ctx.t % alpha != 0 || !ctx.schedule.is_awake(to, ctx.t) {
            return Vec::new();
        }
        let Node::Decaying(d) = &ctx.nodes[to.index()] else {
            return Vec::new();
        };
        let k = ctx.t / alpha - 1;
        let rec = d.recovered();
        let base = match k {
            0 => ctx.blocks.genesis(),
            _ => match rec.get(k as usize - 1) {
                Some(b) => *b,
                None => return Vec::new(),
            },
        };
        let p = PiParams::from_config(ctx.cfg);
        let view = k * alpha / p.view_len + 1;
        let Some((block, _)) = forge_block(ctx, to, base, view, format!("fake-{k}").into_bytes()) else {
            return Vec::new();
        };
        let m = ProtoMsg::Decide { block, epoch: k };
        let keys: Vec<NodeId> = ctx.schedule.corrupt_nodes().collect();
        keys.into_iter()
            .filter_map(|q| ctx.sign_all(to, q, &m, ctx.cfg.delta))
            .collect()
    }
}

/// Early corrupt nodes sign a fabricated future before going to sleep: second
/// round votes for a fake block in every view and decide announcements for a fake
/// chain, delivered to sleepers when they wake. Later the epoch forger takes over.
pub struct ForwardSim {
    presigned: bool,
    forger: EpochForger,
}

impl ForwardSim {
    pub fn new(_cfg: &ScenarioConfig) -> Self {
        ForwardSim {
            presigned: false,
            forger: EpochForger::default(),
        }
    }

    fn presign(&mut self, ctx: &mut AdvCtx) -> Vec<AdvSend> {
        let s = ctx.schedule;
        let early: Vec<NodeId> = s
            .corrupt_nodes()
            .filter(|&p| s.is_awake(p, ctx.t) && last_awake(s, p).is_some_and(|l| l + 1 < s.horizon()))
            .collect();
        let Some(&lead) = early.first() else {
            return Vec::new();
        };
        self.presigned = true;
        let p = PiParams::from_config(ctx.cfg);
        let g = ctx.blocks.genesis();
        let Some((_, fake)) = forge_block(ctx, lead, g, 1, b"fake-0".to_vec()) else {
            return Vec::new();
        };
        // a fake chain with one block per epoch for the decide announcements
        let epochs = ctx.cfg.horizon / p.alpha + 1;
        let mut chain = Vec::new();
        let mut parent = g;
        for e in 0..epochs {
            let view = e * p.alpha / p.view_len + 1;
            let Some((b, id)) = forge_block(ctx, lead, parent, view, format!("fake-{e}").into_bytes()) else {
                break;
            };
            chain.push(b);
            parent = id;
        }
        let last_view = p.view_of(ctx.cfg.horizon);
        let victims: Vec<(NodeId, u64)> = s.honest().map(|q| (q, ctx.cfg.delta)).collect();
        let mut out = Vec::new();
        for &c in &early {
            for v in 1..=last_view {
                let m = ProtoMsg::Vote2 {
                    view: v,
                    block: Some(fake),
                };
                if let Ok(signed) = ctx.hub.sign(c, c, m.encode(), ctx.t) {
                    out.push(AdvSend {
                        via: c,
                        signed,
                        to: victims.clone(),
                    });
                }
            }
            for b in &chain {
                let m = ProtoMsg::Decide {
                    block: b.clone(),
                    epoch: b.epoch,
                };
                if let Ok(signed) = ctx.hub.sign(c, c, m.encode(), ctx.t) {
                    out.push(AdvSend {
                        via: c,
                        signed,
                        to: victims.clone(),
                    });
                }
            }
        }
        out
    }
}

impl Strategy for ForwardSim {
    fn name(&self) -> StrategyName {
        StrategyName::ForwardSim
    }

    fn on_slot(&mut self, ctx: &mut AdvCtx) -> Vec<AdvSend> {
        let mut out = Vec::new();
        if !self.presigned {
            out.extend(self.presign(ctx));
        }
        out.extend(self.forger.on_slot(ctx));
        out
    }
}

/// Corrupt nodes that only wake late fabricate a long private history from
/// genesis, announce it as decided, and claim deep VDF chains for it.
pub struct BackwardSim {
    done: Vec<NodeId>,
}

impl BackwardSim {
    pub fn new(_cfg: &ScenarioConfig) -> Self {
        BackwardSim { done: Vec::new() }
    }
}

impl Strategy for BackwardSim {
    fn name(&self) -> StrategyName {
        StrategyName::BackwardSim
    }

    fn on_slot(&mut self, ctx: &mut AdvCtx) -> Vec<AdvSend> {
        let s = ctx.schedule;
        let late: Vec<NodeId> = s
            .corrupt_nodes()
            .filter(|&p| !s.is_awake(p, 0) && s.is_awake(p, ctx.t) && !self.done.contains(&p))
            .collect();
        let mut out = Vec::new();
        let p = PiParams::from_config(ctx.cfg);
        for c in late {
            self.done.push(c);
            // one block per elapsed view, plus a margin, so it outgrows the honest chain
            let views = p.view_of(ctx.t) + 4;
            let mut parent = ctx.blocks.genesis();
            let mut tip = None;
            for v in 1..=views {
                match forge_block(ctx, c, parent, v, format!("bsim-{c}-{v}").into_bytes()) {
                    Some((b, id)) => {
                        parent = id;
                        tip = Some(b);
                    }
                    None => break,
                }
            }
            let Some(tip) = tip else {
                continue;
            };
            let half: Vec<(NodeId, u64)> = s.nodes().filter(|q| q.0 % 2 == 0).map(|q| (q, ctx.cfg.delta)).collect();
            let decide = ProtoMsg::Decide {
                epoch: tip.epoch,
                block: tip,
            };
            if let Ok(signed) = ctx.hub.sign(c, c, decide.encode(), ctx.t) {
                out.push(AdvSend {
                    via: c,
                    signed,
                    to: half,
                });
            }
            // links claiming a chain as deep as the current slot without the work
            let fake = Link {
                input: Digest(0xdead),
                value: Digest(0xbeef),
                proof: Digest(0xf00d),
                depth: ctx.t,
                extender: c,
                query_slot: 0,
            };
            let mut links = Vec::new();
            if let Ok(l) = ctx.hub.sign(c, c, encode_link(&fake), ctx.t) {
                links.push(l);
            }
            let m = ProtoMsg::Links {
                links,
                tip: Some(parent),
            };
            out.extend(ctx.sign_all(c, c, &m, ctx.cfg.delta));
        }
        out
    }
}
