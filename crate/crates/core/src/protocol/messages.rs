//! Wire messages and the verified, decoded packet every recipient shares.

use crate::ledger::Block;
use crate::oracle::{OracleHub, SignedMessage, VrfOutput};
use crate::types::{Digest, NodeId, Slot};
use serde::{Deserialize, Serialize};

/// One VDF chain link: `value = VDF(input || extender)`, `depth` links from genesis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub input: Digest,
    pub value: Digest,
    pub proof: Digest,
    pub depth: u64,
    pub extender: NodeId,
    pub query_slot: Slot,
}

impl Link {
    pub fn vdf_input(input: Digest, extender: NodeId) -> Vec<u8> {
        let mut b = input.to_bytes().to_vec();
        b.extend_from_slice(&extender.0.to_le_bytes());
        b
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtoMsg {
    Proposal { block: Block, ticket: VrfOutput },
    Vote1 { view: u64, block: Option<Digest> },
    /// Every first-round vote the sender had received by the forwarding phase.
    Forward { view: u64, votes: Vec<SignedMessage> },
    Vote2 { view: u64, block: Option<Digest> },
    /// Latest block of `epoch` in the sender's decided log.
    Decide { block: Block, epoch: u64 },
    /// Individually signed VDF links plus the sender's current decided tip.
    Links { links: Vec<SignedMessage>, tip: Option<Digest> },
}

/// Stable tags of `ProtoMsg` variants, as they appear in the encoding's first
/// four bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MsgKind {
    Proposal,
    Vote1,
    Forward,
    Vote2,
    Decide,
    Links,
}

impl MsgKind {
    pub fn of_payload(payload: &[u8]) -> Option<MsgKind> {
        let tag = u32::from_le_bytes(payload.get(..4)?.try_into().ok()?);
        Some(match tag {
            0 => MsgKind::Proposal,
            1 => MsgKind::Vote1,
            2 => MsgKind::Forward,
            3 => MsgKind::Vote2,
            4 => MsgKind::Decide,
            5 => MsgKind::Links,
            _ => return None,
        })
    }

    /// Messages that belong to the participation overlay rather than the base
    /// protocol.
    pub fn is_overlay(self) -> bool {
        matches!(self, MsgKind::Decide | MsgKind::Links)
    }
}

impl ProtoMsg {
    pub fn encode(&self) -> Vec<u8> {
        bincode::serialize(self).expect("messages serialize")
    }

    pub fn decode(bytes: &[u8]) -> Option<ProtoMsg> {
        bincode::deserialize(bytes).ok()
    }

    pub fn kind(&self) -> MsgKind {
        match self {
            ProtoMsg::Proposal { .. } => MsgKind::Proposal,
            ProtoMsg::Vote1 { .. } => MsgKind::Vote1,
            ProtoMsg::Forward { .. } => MsgKind::Forward,
            ProtoMsg::Vote2 { .. } => MsgKind::Vote2,
            ProtoMsg::Decide { .. } => MsgKind::Decide,
            ProtoMsg::Links { .. } => MsgKind::Links,
        }
    }
}

/// Decoded content of a message nested in a `Forward` or `Links` message.
#[derive(Clone, Debug)]
pub enum InnerBody {
    Vote1 { view: u64, block: Option<Digest> },
    Link(Link),
    Other,
}

#[derive(Clone, Debug)]
pub struct Inner {
    pub signed: SignedMessage,
    pub body: InnerBody,
    /// Signature verifies and, for links, the VDF output and signer match.
    pub ok: bool,
}

/// A sent message, verified and decoded once and shared by all recipients.
#[derive(Clone, Debug)]
pub struct Packet {
    pub id: u64,
    pub signed: SignedMessage,
    pub msg: Option<ProtoMsg>,
    pub sig_ok: bool,
    pub inner: Vec<Inner>,
}

impl Packet {
    pub fn new(id: u64, signed: SignedMessage, hub: &OracleHub) -> Packet {
        let sig_ok = hub.verify_sig(&signed);
        let msg = ProtoMsg::decode(&signed.payload);
        let inner = match &msg {
            Some(ProtoMsg::Forward { votes, .. }) => votes
                .iter()
                .map(|s| {
                    let body = match ProtoMsg::decode(&s.payload) {
                        Some(ProtoMsg::Vote1 { view, block }) => InnerBody::Vote1 { view, block },
                        _ => InnerBody::Other,
                    };
                    let ok = hub.verify_sig(s) && !matches!(body, InnerBody::Other);
                    Inner {
                        signed: s.clone(),
                        body,
                        ok,
                    }
                })
                .collect(),
            Some(ProtoMsg::Links { links, .. }) => links
                .iter()
                .map(|s| {
                    let link: Option<Link> = bincode::deserialize(&s.payload).ok();
                    let ok = link.as_ref().is_some_and(|l| {
                        l.extender == s.signer
                            && l.depth >= 1
                            && hub.verify_sig(s)
                            && hub.vdf_check(&Link::vdf_input(l.input, l.extender), l.value, l.proof)
                    });
                    Inner {
                        signed: s.clone(),
                        body: link.map_or(InnerBody::Other, InnerBody::Link),
                        ok,
                    }
                })
                .collect(),
            _ => Vec::new(),
        };
        Packet {
            id,
            signed,
            msg,
            sig_ok,
            inner,
        }
    }

    pub fn sender(&self) -> NodeId {
        self.signed.signer
    }

    /// Usable at all: signature verifies and the payload decodes.
    pub fn usable(&self) -> bool {
        self.sig_ok && self.msg.is_some()
    }
}

pub fn encode_link(link: &Link) -> Vec<u8> {
    bincode::serialize(link).expect("links serialize")
}
