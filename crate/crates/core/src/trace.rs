//! Execution traces: everything needed to recompute every metric after the fact.
//!
//! File layout:
//!
//! ```text
//! SLEEPY-TRACE 1\n
//! config-sha256 <64 hex>\n
//! seed <decimal>\n
//! \n
//! records: u32 LE length, then that many bytes of bincode(Record)
//! trailer: u32 0xFFFF_FFFF, then SHA-256 of every preceding byte
//! ```

use crate::error::{Error, Result};
use crate::ledger::Block;
use crate::oracle::{QueryRecord, SignedMessage};
use crate::protocol::pi::GpeOutcome;
use crate::types::{NodeId, Payload, Slot};
use crate::wakeness::WakeBit;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::fmt::Write as _;

pub const MAGIC: &str = "SLEEPY-TRACE 1";
const TRAILER: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipient {
    pub node: NodeId,
    pub delay: u64,
    pub due: Slot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Record {
    Config { toml: String },
    /// Resolved participation: awake intervals per node and corruption flags.
    Schedule { sessions: Vec<Vec<[Slot; 2]>>, corrupt: Vec<bool> },
    Slot(Slot),
    Input { slot: Slot, node: NodeId, payload: Payload },
    Send {
        id: u64,
        slot: Slot,
        /// Node whose link carried the message; differs from the signer when a
        /// message is relayed.
        via: NodeId,
        signed: SignedMessage,
        sig_ok: bool,
        to: Vec<Recipient>,
    },
    /// Adversary send refused by the transport.
    Refused { slot: Slot, via: NodeId, reason: String },
    Deliver { slot: Slot, node: NodeId, ids: Vec<u64> },
    Query(QueryRecord),
    /// Log change: cut to `keep` blocks (if set), then append `blocks`.
    Log { slot: Slot, node: NodeId, keep: Option<u64>, blocks: Vec<Block> },
    Wake(WakeBit),
    Filter { slot: Slot, node: NodeId, senders: Vec<NodeId> },
    Gpe { slot: Slot, node: NodeId, outcome: GpeOutcome },
    End { horizon: Slot },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub config_digest: [u8; 32],
    pub seed: u64,
    pub records: Vec<Record>,
}

fn hex(b: &[u8]) -> String {
    b.iter().fold(String::with_capacity(b.len() * 2), |mut s, x| {
        let _ = write!(s, "{x:02x}");
        s
    })
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptTrace(msg.into())
}

impl Trace {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "{MAGIC}\nconfig-sha256 {}\nseed {}\n\n",
            hex(&self.config_digest),
            self.seed
        )
        .into_bytes();
        for r in &self.records {
            let b = bincode::serialize(r).expect("records serialize");
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(&b);
        }
        out.extend_from_slice(&TRAILER.to_le_bytes());
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Trace> {
        if bytes.len() < 36 {
            return Err(corrupt("truncated trace"));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(corrupt("checksum mismatch"));
        }
        let mut lines = 0;
        let mut pos = 0;
        while lines < 4 {
            let nl = body[pos..]
                .iter()
                .position(|&c| c == b'\n')
                .ok_or_else(|| corrupt("missing header"))?;
            pos += nl + 1;
            lines += 1;
        }
        let header = std::str::from_utf8(&body[..pos]).map_err(|_| corrupt("header is not UTF-8"))?;
        let mut it = header.lines();
        if it.next() != Some(MAGIC) {
            return Err(corrupt("bad magic"));
        }
        let digest_hex = it
            .next()
            .and_then(|l| l.strip_prefix("config-sha256 "))
            .ok_or_else(|| corrupt("missing config digest"))?;
        let seed = it
            .next()
            .and_then(|l| l.strip_prefix("seed "))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("missing seed"))?;
        let mut config_digest = [0u8; 32];
        if digest_hex.len() != 64 {
            return Err(corrupt("bad config digest"));
        }
        for (i, d) in config_digest.iter_mut().enumerate() {
            *d = u8::from_str_radix(&digest_hex[2 * i..2 * i + 2], 16).map_err(|_| corrupt("bad config digest"))?;
        }
        let mut records = Vec::new();
        loop {
            let len_bytes = body.get(pos..pos + 4).ok_or_else(|| corrupt("missing trailer"))?;
            let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes"));
            pos += 4;
            if len == TRAILER {
                break;
            }
            let rec = body
                .get(pos..pos + len as usize)
                .ok_or_else(|| corrupt("record runs past end"))?;
            records.push(bincode::deserialize(rec).map_err(|e| corrupt(format!("record {}: {e}", records.len())))?);
            pos += len as usize;
        }
        if pos != body.len() {
            return Err(corrupt("bytes after trailer"));
        }
        Ok(Trace {
            config_digest,
            seed,
            records,
        })
    }

    pub fn config_toml(&self) -> Option<&str> {
        self.records.iter().find_map(|r| match r {
            Record::Config { toml } => Some(toml.as_str()),
            _ => None,
        })
    }

    /// One line per record, for eyeballing.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = match r {
                Record::Config { .. } => writeln!(s, "config"),
                Record::Schedule { corrupt, .. } => writeln!(s, "schedule n={}", corrupt.len()),
                Record::Slot(t) => writeln!(s, "slot {t}"),
                Record::Input { node, payload, .. } => {
                    writeln!(s, "  input {node} {:?}", String::from_utf8_lossy(payload))
                }
                Record::Send { id, via, signed, to, sig_ok, .. } => writeln!(
                    s,
                    "  send #{id} {via} signer={} kind={:?} bytes={} to={} ok={sig_ok}",
                    signed.signer,
                    crate::protocol::MsgKind::of_payload(&signed.payload),
                    signed.payload.len(),
                    to.len()
                ),
                Record::Refused { via, reason, .. } => writeln!(s, "  refused {via}: {reason}"),
                Record::Deliver { node, ids, .. } => writeln!(s, "  deliver {node} {ids:?}"),
                Record::Query(q) => writeln!(s, "  query {} {:?} key={} {:?}", q.caller, q.oracle, q.key_owner, q.outcome),
                Record::Log { node, keep, blocks, .. } => {
                    writeln!(s, "  log {node} keep={keep:?} +{}", blocks.len())
                }
                Record::Wake(b) => writeln!(s, "  wake {} {} [{}, {}]", b.holder, b.owner, b.lo, b.hi),
                Record::Filter { node, senders, .. } => writeln!(s, "  filter {node} {}", senders.len()),
                Record::Gpe { node, outcome, .. } => writeln!(
                    s,
                    "  gpe {node} view={} grade={} {:?}",
                    outcome.view, outcome.grade, outcome.block
                ),
                Record::End { horizon } => writeln!(s, "end {horizon}"),
            };
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            config_digest: [7; 32],
            seed: 42,
            records: vec![
                Record::Config { toml: "x = 1".into() },
                Record::Slot(0),
                Record::Input {
                    slot: 0,
                    node: NodeId(1),
                    payload: b"in".to_vec(),
                },
                Record::End { horizon: 1 },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let b = t.to_bytes();
        assert_eq!(Trace::from_bytes(&b).unwrap(), t);
        assert!(t.to_text().contains("slot 0"));
    }

    #[test]
    fn flipped_byte_detected() {
        let mut b = sample().to_bytes();
        let k = b.len() / 2;
        b[k] ^= 1;
        assert!(matches!(Trace::from_bytes(&b), Err(Error::CorruptTrace(_))));
        assert!(Trace::from_bytes(&b[..10]).is_err());
    }
}
