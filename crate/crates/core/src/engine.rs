//! Slot-by-slot execution of one scenario.
//!
//! Each slot: the adversary acts on the transcript of earlier slots, then every
//! awake node (in id order) drains its inbox, takes its inputs and runs one step.
//! Everything observable is appended to the trace as it happens.

use crate::adversary::schedules::{intervals, schedule_for};
use crate::adversary::strategies::{build, AdvCtx, AdvSend, Strategy};
use crate::compiler::{Node, NodeCtx};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::ledger::BlockStore;
use crate::net::Network;
use crate::oracle::{OracleHub, SignedMessage};
use crate::protocol::{Packet, ProtoMsg};
use crate::schedule::ParticipationSchedule;
use crate::trace::{Recipient, Record, Trace};
use crate::types::{Digest, NodeId, Payload, Slot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

/// A message on the wire, as the adversary's transcript sees it.
#[derive(Clone, Debug)]
pub struct SentRecord {
    pub id: u64,
    pub slot: Slot,
    pub via: NodeId,
    pub packet: Arc<Packet>,
}

/// A fully resolved scenario: schedule and environment inputs fixed.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub schedule: Arc<ParticipationSchedule>,
    /// `(slot, node, payload)`, sorted by slot.
    pub inputs: Vec<(Slot, NodeId, Payload)>,
}

impl Scenario {
    pub fn resolve(cfg: &ScenarioConfig) -> Result<Scenario> {
        cfg.validate()?;
        let schedule = schedule_for(cfg)?;
        if let Some(slot) = schedule.first_empty_slot() {
            return Err(Error::ScheduleEmpty { slot });
        }
        Ok(Self::with_schedule(cfg, schedule))
    }

    /// Uses a given schedule instead of generating one.
    pub fn with_schedule(cfg: &ScenarioConfig, schedule: ParticipationSchedule) -> Scenario {
        let mut inputs: Vec<(Slot, NodeId, Payload)> = cfg
            .env_inputs
            .iter()
            .map(|x| (x.slot, NodeId(x.node), x.payload.clone().into_bytes()))
            .collect();
        if let Some(every) = cfg.input_every {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a9u64.rotate_left(17));
            for t in (0..cfg.horizon).step_by(every as usize) {
                let awake: Vec<NodeId> = schedule.honest().filter(|&p| schedule.is_awake(p, t)).collect();
                if awake.is_empty() {
                    continue;
                }
                let p = awake[rng.gen_range(0..awake.len())];
                inputs.push((t, p, format!("tx-{t}").into_bytes()));
            }
        }
        inputs.sort_by_key(|x| x.0);
        Scenario {
            cfg: cfg.clone(),
            schedule: Arc::new(schedule),
            inputs,
        }
    }
}

pub struct Engine {
    cfg: ScenarioConfig,
    schedule: Arc<ParticipationSchedule>,
    hub: OracleHub,
    blocks: BlockStore,
    net: Network<Arc<Packet>>,
    nodes: Vec<Node>,
    strategy: Box<dyn Strategy>,
    sent: Vec<SentRecord>,
    inputs: BTreeMap<Slot, Vec<(NodeId, Payload)>>,
    buffered: Vec<Vec<Payload>>,
    tips: Vec<Digest>,
    filters: Vec<Option<Vec<NodeId>>>,
    trace: Trace,
    t: Slot,
}

impl Engine {
    pub fn new(cfg: &ScenarioConfig) -> Result<Engine> {
        Ok(Self::from_scenario(Scenario::resolve(cfg)?))
    }

    pub fn from_scenario(sc: Scenario) -> Engine {
        let cfg = sc.cfg;
        let n = cfg.n;
        let hub = OracleHub::new(cfg.seed, cfg.lambda, cfg.query_budget(), cfg.adversary_mode, sc.schedule.clone());
        let blocks = BlockStore::new(hub.hash_fn());
        let g = blocks.genesis();
        let nodes = (0..n as u32).map(|i| Node::new(&cfg, NodeId(i), &hub, g)).collect();
        let mut inputs: BTreeMap<Slot, Vec<(NodeId, Payload)>> = BTreeMap::new();
        for (t, p, x) in sc.inputs {
            inputs.entry(t).or_default().push((p, x));
        }
        let trace = Trace {
            config_digest: cfg.digest(),
            seed: cfg.seed,
            records: vec![
                Record::Config { toml: cfg.to_toml() },
                Record::Schedule {
                    sessions: sc.schedule.awake.iter().map(|r| intervals(r)).collect(),
                    corrupt: sc.schedule.corrupt.clone(),
                },
            ],
        };
        Engine {
            strategy: build(&cfg),
            net: Network::new(n, cfg.delta),
            schedule: sc.schedule,
            hub,
            blocks,
            nodes,
            sent: Vec::new(),
            inputs,
            buffered: vec![Vec::new(); n],
            tips: vec![g; n],
            filters: vec![None; n],
            trace,
            t: 0,
            cfg,
        }
    }

    pub fn cfg(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &ParticipationSchedule {
        &self.schedule
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn blocks(&self) -> &BlockStore {
        &self.blocks
    }

    pub fn hub(&self) -> &OracleHub {
        &self.hub
    }

    /// Next slot to run.
    pub fn slot(&self) -> Slot {
        self.t
    }

    pub fn done(&self) -> bool {
        self.t >= self.cfg.horizon
    }

    pub fn run(mut self) -> Trace {
        while !self.done() {
            self.step_slot();
        }
        self.finish()
    }

    pub fn finish(mut self) -> Trace {
        self.trace.records.push(Record::End {
            horizon: self.cfg.horizon,
        });
        self.trace
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn transmit(&mut self, via: NodeId, signed: SignedMessage, to: &[(NodeId, u64)]) {
        let t = self.t;
        let id = self.sent.len() as u64;
        let packet = Arc::new(Packet::new(id, signed, &self.hub));
        let order_key = packet.signed.tag;
        match self.net.send(&self.schedule, id, via, order_key, packet.clone(), to, t) {
            Ok(dues) => {
                let to = to
                    .iter()
                    .zip(dues)
                    .map(|(&(node, delay), (_, due))| Recipient { node, delay, due })
                    .collect();
                self.trace.records.push(Record::Send {
                    id,
                    slot: t,
                    via,
                    signed: packet.signed.clone(),
                    sig_ok: packet.sig_ok,
                    to,
                });
                self.sent.push(SentRecord {
                    id,
                    slot: t,
                    via,
                    packet,
                });
            }
            Err(e) => self.trace.records.push(Record::Refused {
                slot: t,
                via,
                reason: e.to_string(),
            }),
        }
    }

    fn adv_sends(&mut self, sends: Vec<AdvSend>) {
        for s in sends {
            self.transmit(s.via, s.signed, &s.to);
        }
    }

    fn adv_ctx<'a>(
        t: Slot,
        cfg: &'a ScenarioConfig,
        schedule: &'a ParticipationSchedule,
        hub: &'a mut OracleHub,
        blocks: &'a mut BlockStore,
        sent: &'a [SentRecord],
        nodes: &'a [Node],
    ) -> AdvCtx<'a> {
        AdvCtx {
            t,
            cfg,
            schedule,
            hub,
            blocks,
            sent,
            nodes,
        }
    }

    /// Packets due for `node` at the current slot, without consuming them.
    pub fn peek_inbox(&self, node: NodeId) -> Vec<Arc<Packet>> {
        self.net
            .peek(node, self.t)
            .into_iter()
            .map(|d| d.item)
            .collect()
    }

    /// Inputs `node` would take at the current slot.
    pub fn peek_inputs(&self, node: NodeId) -> Vec<Payload> {
        let mut v = self.buffered[node.index()].clone();
        if let Some(xs) = self.inputs.get(&self.t) {
            v.extend(xs.iter().filter(|(p, _)| *p == node).map(|(_, x)| x.clone()));
        }
        v
    }

    /// Replays the base protocol's step of `node` at the current slot on all
    /// received messages and on the filtered ones only, plus the number of
    /// messages the filter deleted. `None` if asleep.
    pub fn probe_stateless(&self, node: NodeId) -> Option<(Vec<ProtoMsg>, Vec<ProtoMsg>, usize)> {
        if !self.schedule.is_awake(node, self.t) {
            return None;
        }
        let inbox = self.peek_inbox(node);
        let inputs = self.peek_inputs(node);
        let mut hub = self.hub.clone();
        hub.begin_slot(self.t);
        let mut blocks = self.blocks.clone();
        let mut ctx = NodeCtx {
            hub: &mut hub,
            blocks: &mut blocks,
            t: self.t,
        };
        Some(self.nodes[node.index()].replay_filtered(&mut ctx, &inbox, inputs))
    }

    pub fn step_slot(&mut self) {
        let t = self.t;
        self.hub.begin_slot(t);
        self.trace.records.push(Record::Slot(t));

        let adv = {
            let mut ctx = Self::adv_ctx(
                t,
                &self.cfg,
                &self.schedule,
                &mut self.hub,
                &mut self.blocks,
                &self.sent,
                &self.nodes,
            );
            self.strategy.on_slot(&mut ctx)
        };
        self.adv_sends(adv);

        if let Some(xs) = self.inputs.remove(&t) {
            for (p, x) in xs {
                self.buffered[p.index()].push(x);
            }
        }

        for i in 0..self.nodes.len() {
            let p = NodeId(i as u32);
            if !self.schedule.is_awake(p, t) {
                continue;
            }
            let deliveries = self.net.deliver(&self.schedule, p, t).expect("node is awake");
            if !deliveries.is_empty() {
                self.trace.records.push(Record::Deliver {
                    slot: t,
                    node: p,
                    ids: deliveries.iter().map(|d| d.msg_id).collect(),
                });
            }
            let inbox: Vec<Arc<Packet>> = deliveries.into_iter().map(|d| d.item).collect();
            let inputs = std::mem::take(&mut self.buffered[i]);
            for x in &inputs {
                self.trace.records.push(Record::Input {
                    slot: t,
                    node: p,
                    payload: x.clone(),
                });
            }
            let corrupt = self.schedule.is_corrupt(p);
            if corrupt && !self.strategy.runs_honest_code(p, t) {
                continue;
            }
            let out = {
                let mut ctx = NodeCtx {
                    hub: &mut self.hub,
                    blocks: &mut self.blocks,
                    t,
                };
                self.nodes[i].step(&mut ctx, &inbox, inputs)
            };
            if corrupt {
                let sends = {
                    let mut ctx = Self::adv_ctx(
                        t,
                        &self.cfg,
                        &self.schedule,
                        &mut self.hub,
                        &mut self.blocks,
                        &self.sent,
                        &self.nodes,
                    );
                    self.strategy.corrupt_outgoing(&mut ctx, p, out.sends.clone())
                };
                self.adv_sends(sends);
            } else {
                for m in &out.sends {
                    let Ok(signed) = self.hub.sign(p, p, m.encode(), t) else {
                        continue;
                    };
                    let to: Vec<(NodeId, u64)> = (0..self.nodes.len() as u32)
                        .map(|j| (NodeId(j), self.strategy.honest_delay(&self.cfg, p, NodeId(j))))
                        .collect();
                    self.transmit(p, signed, &to);
                }
            }
            self.record_node(p, out);
        }

        for q in self.hub.take_query_log() {
            self.trace.records.push(Record::Query(q));
        }
        self.t += 1;
    }

    fn record_node(&mut self, p: NodeId, out: crate::compiler::NodeOutput) {
        let t = self.t;
        let i = p.index();
        if let Some(g) = out.gpe {
            self.trace.records.push(Record::Gpe {
                slot: t,
                node: p,
                outcome: g,
            });
        }
        for b in out.wake {
            self.trace.records.push(Record::Wake(b));
        }
        if out.filter.is_some() && out.filter != self.filters[i] {
            self.trace.records.push(Record::Filter {
                slot: t,
                node: p,
                senders: out.filter.clone().unwrap_or_default(),
            });
            self.filters[i] = out.filter;
        }
        let new = self.nodes[i].log_tip();
        let old = self.tips[i];
        if new != old {
            let b = &self.blocks;
            let (keep, from) = if b.extends(&new, &old).unwrap_or(false) {
                (None, old)
            } else {
                let m = b.meet(&new, &old).expect("both tips are stored");
                (Some(b.height(&m).expect("stored")), m)
            };
            let blocks = b
                .segment(&from, &new)
                .expect("tip descends from meet")
                .iter()
                .map(|id| b.get(id).expect("stored").block.clone())
                .collect();
            self.trace.records.push(Record::Log {
                slot: t,
                node: p,
                keep,
                blocks,
            });
            self.tips[i] = new;
        }
    }
}

/// Runs a configuration to completion.
pub fn run_config(cfg: &ScenarioConfig) -> Result<Trace> {
    Ok(Engine::new(cfg)?.run())
}
