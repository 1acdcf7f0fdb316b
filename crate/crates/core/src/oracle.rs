//! Idealized signing, VRF and VDF oracles as seeded keyed PRFs.
//!
//! Every output is a function of `(master_seed, oracle, key_owner, input)` only, so
//! verification is recomputation. Access control and rate limits live here too:
//! the hub is the only way a node (honest or not) can obtain a fresh tag.

use crate::error::OracleError;
use crate::schedule::ParticipationSchedule;
use crate::types::{AdversaryMode, Digest, NodeId, Slot};
use serde::{Deserialize, Serialize};
use siphasher::sip128::{Hasher128, SipHasher24};
use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;
use std::sync::Arc;

/// Oracle identifiers, also used as PRF domain tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OracleKind {
    Sign,
    Vrf,
    Vdf,
}

pub const DOM_SIGN: u8 = 1;
pub const DOM_VRF: u8 = 2;
pub const DOM_VRF_PROOF: u8 = 3;
pub const DOM_VDF: u8 = 4;
pub const DOM_VDF_PROOF: u8 = 5;
pub const DOM_HASH: u8 = 6;

/// Hash outputs never drop below this many bits, even when λ is smaller.
/// Block identities are content addressed and 32-bit ids collide at sweep scale.
pub const HASH_MIN_BITS: u32 = 64;

/// Raw keyed PRF shared by the hub and by independent test oracles.
#[derive(Clone, Copy, Debug)]
pub struct Prf {
    k0: u64,
    k1: u64,
}

impl Prf {
    pub fn new(master_seed: u64) -> Self {
        Prf {
            k0: master_seed,
            k1: master_seed.rotate_left(32) ^ 0x736c_6565_7079_6d64,
        }
    }

    pub fn eval(&self, domain: u8, owner: u32, input: &[u8], bits: u32) -> Digest {
        let mut h = SipHasher24::new_with_keys(self.k0, self.k1);
        h.write_u8(domain);
        h.write_u32(owner);
        h.write_u64(input.len() as u64);
        h.write(input);
        Digest(h.finish128().as_u128() & mask(bits))
    }
}

/// The public hash function `H`, detached from any hub so pure code can use it.
#[derive(Clone, Copy, Debug)]
pub struct HashFn {
    prf: Prf,
    bits: u32,
}

impl HashFn {
    pub fn new(master_seed: u64, lambda: u32) -> Self {
        HashFn {
            prf: Prf::new(master_seed),
            bits: lambda.clamp(1, 128).max(HASH_MIN_BITS),
        }
    }

    pub fn hash(&self, input: &[u8]) -> Digest {
        self.prf.eval(DOM_HASH, 0, input, self.bits)
    }
}

fn mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// A payload signed under `signer`'s key. The tag covers the claimed slot too.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedMessage {
    pub payload: Vec<u8>,
    pub signer: NodeId,
    pub tag: Digest,
    pub claimed_slot: Slot,
}

impl SignedMessage {
    pub fn signing_bytes(payload: &[u8], claimed_slot: Slot) -> Vec<u8> {
        let mut b = Vec::with_capacity(payload.len() + 8);
        b.extend_from_slice(&claimed_slot.to_le_bytes());
        b.extend_from_slice(payload);
        b
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VrfOutput {
    pub value: Digest,
    pub proof: Digest,
    pub key_owner: NodeId,
    pub input: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VdfOutput {
    pub value: Digest,
    pub proof: Digest,
    pub input: Vec<u8>,
    pub query_slot: Slot,
    pub response_slot: Slot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryOutcome {
    Ok,
    PolicyViolation,
    AsleepCaller,
    BudgetExceeded,
    RateLimited,
}

impl From<&OracleError> for QueryOutcome {
    fn from(e: &OracleError) -> Self {
        match e {
            OracleError::PolicyViolation { .. } => QueryOutcome::PolicyViolation,
            OracleError::AsleepCaller { .. } => QueryOutcome::AsleepCaller,
            OracleError::BudgetExceeded { .. } => QueryOutcome::BudgetExceeded,
            OracleError::RateLimited { .. } => QueryOutcome::RateLimited,
        }
    }
}

/// One entry of the hub's query log. `input` is a hash of the query bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub slot: Slot,
    pub caller: NodeId,
    pub oracle: OracleKind,
    pub key_owner: NodeId,
    pub input: Digest,
    /// Number of inputs covered (VDF batches count each input).
    pub count: u32,
    pub outcome: QueryOutcome,
}

/// `external`: only the owner may use a key. `standard`: additionally any corrupt
/// caller may use any corrupt key, whatever the owner's awake status.
pub fn key_access_allowed(
    mode: AdversaryMode,
    caller: NodeId,
    key_owner: NodeId,
    corrupt: &[bool],
) -> bool {
    if caller == key_owner {
        return true;
    }
    match mode {
        AdversaryMode::External => false,
        AdversaryMode::Standard => {
            let c = |p: NodeId| corrupt.get(p.index()).copied().unwrap_or(false);
            c(caller) && c(key_owner)
        }
    }
}

#[derive(Clone)]
pub struct OracleHub {
    prf: Prf,
    lambda: u32,
    budget: u32,
    mode: AdversaryMode,
    schedule: Arc<ParticipationSchedule>,
    slot: Slot,
    counts: BTreeMap<NodeId, u32>,
    vdf_called: BTreeSet<NodeId>,
    pending_vdf: BTreeMap<NodeId, Vec<VdfOutput>>,
    log: Vec<QueryRecord>,
}

impl OracleHub {
    pub fn new(
        master_seed: u64,
        lambda: u32,
        budget: u32,
        mode: AdversaryMode,
        schedule: Arc<ParticipationSchedule>,
    ) -> Self {
        OracleHub {
            prf: Prf::new(master_seed),
            lambda: lambda.clamp(1, 128),
            budget,
            mode,
            schedule,
            slot: 0,
            counts: BTreeMap::new(),
            vdf_called: BTreeSet::new(),
            pending_vdf: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn mode(&self) -> AdversaryMode {
        self.mode
    }

    pub fn prf(&self) -> Prf {
        self.prf
    }

    /// Resets per-slot counters. Called by the engine at every slot boundary.
    pub fn begin_slot(&mut self, t: Slot) {
        self.slot = t;
        self.counts.clear();
        self.vdf_called.clear();
    }

    pub fn query_log(&self) -> &[QueryRecord] {
        &self.log
    }

    pub fn take_query_log(&mut self) -> Vec<QueryRecord> {
        std::mem::take(&mut self.log)
    }

    pub fn hash(&self, input: &[u8]) -> Digest {
        self.prf
            .eval(DOM_HASH, 0, input, self.lambda.max(HASH_MIN_BITS))
    }

    pub fn hash_fn(&self) -> HashFn {
        HashFn {
            prf: self.prf,
            bits: self.lambda.max(HASH_MIN_BITS),
        }
    }

    fn admit(
        &mut self,
        caller: NodeId,
        key_owner: NodeId,
        oracle: OracleKind,
        input: &[u8],
        count: u32,
        t: Slot,
    ) -> Result<(), OracleError> {
        let outcome = self.check(caller, key_owner, oracle, count, t);
        let rec = QueryRecord {
            slot: t,
            caller,
            oracle,
            key_owner,
            input: self.hash(input),
            count,
            outcome: outcome.as_ref().err().map_or(QueryOutcome::Ok, QueryOutcome::from),
        };
        self.log.push(rec);
        if outcome.is_ok() {
            *self.counts.entry(caller).or_insert(0) += count;
            if oracle == OracleKind::Vdf {
                self.vdf_called.insert(caller);
            }
        }
        outcome
    }

    fn check(
        &self,
        caller: NodeId,
        key_owner: NodeId,
        oracle: OracleKind,
        count: u32,
        t: Slot,
    ) -> Result<(), OracleError> {
        if !self.schedule.is_awake(caller, t) {
            return Err(OracleError::AsleepCaller { caller, slot: t });
        }
        if !key_access_allowed(self.mode, caller, key_owner, &self.schedule.corrupt) {
            return Err(OracleError::PolicyViolation { caller, key_owner });
        }
        if oracle == OracleKind::Vdf && self.vdf_called.contains(&caller) {
            return Err(OracleError::RateLimited { caller, slot: t });
        }
        let used = self.counts.get(&caller).copied().unwrap_or(0);
        if used + count > self.budget {
            return Err(OracleError::BudgetExceeded {
                caller,
                slot: t,
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn tag(&self, signer: NodeId, payload: &[u8], claimed_slot: Slot) -> Digest {
        let bytes = SignedMessage::signing_bytes(payload, claimed_slot);
        self.prf.eval(DOM_SIGN, signer.0, &bytes, self.lambda)
    }

    pub fn sign(
        &mut self,
        caller: NodeId,
        key_owner: NodeId,
        payload: Vec<u8>,
        t: Slot,
    ) -> Result<SignedMessage, OracleError> {
        self.sign_claiming(caller, key_owner, payload, t, t)
    }

    /// Signs with an arbitrary claimed slot. Honest code always claims `t`.
    pub fn sign_claiming(
        &mut self,
        caller: NodeId,
        key_owner: NodeId,
        payload: Vec<u8>,
        t: Slot,
        claimed_slot: Slot,
    ) -> Result<SignedMessage, OracleError> {
        let bytes = SignedMessage::signing_bytes(&payload, claimed_slot);
        self.admit(caller, key_owner, OracleKind::Sign, &bytes, 1, t)?;
        Ok(SignedMessage {
            tag: self.tag(key_owner, &payload, claimed_slot),
            payload,
            signer: key_owner,
            claimed_slot,
        })
    }

    pub fn verify_sig(&self, msg: &SignedMessage) -> bool {
        self.tag(msg.signer, &msg.payload, msg.claimed_slot) == msg.tag
    }

    pub fn vrf_eval(
        &mut self,
        caller: NodeId,
        key_owner: NodeId,
        input: Vec<u8>,
        t: Slot,
    ) -> Result<VrfOutput, OracleError> {
        self.admit(caller, key_owner, OracleKind::Vrf, &input, 1, t)?;
        Ok(self.vrf_compute(key_owner, input))
    }

    fn vrf_compute(&self, key_owner: NodeId, input: Vec<u8>) -> VrfOutput {
        VrfOutput {
            value: self.prf.eval(DOM_VRF, key_owner.0, &input, self.lambda),
            proof: self.prf.eval(DOM_VRF_PROOF, key_owner.0, &input, self.lambda),
            key_owner,
            input,
        }
    }

    pub fn vrf_verify(&self, out: &VrfOutput) -> bool {
        self.prf.eval(DOM_VRF, out.key_owner.0, &out.input, self.lambda) == out.value
            && self.prf.eval(DOM_VRF_PROOF, out.key_owner.0, &out.input, self.lambda) == out.proof
    }

    /// Queues one VDF batch; the outputs become collectable at `t + 1`.
    /// Returns the response slot.
    pub fn vdf_eval(
        &mut self,
        caller: NodeId,
        inputs: Vec<Vec<u8>>,
        t: Slot,
    ) -> Result<Slot, OracleError> {
        let mut all = Vec::new();
        for i in &inputs {
            all.extend_from_slice(&(i.len() as u64).to_le_bytes());
            all.extend_from_slice(i);
        }
        self.admit(caller, caller, OracleKind::Vdf, &all, inputs.len() as u32, t)?;
        let queue = self.pending_vdf.entry(caller).or_default();
        for input in inputs {
            queue.push(VdfOutput {
                value: self.prf.eval(DOM_VDF, 0, &input, self.lambda),
                proof: self.prf.eval(DOM_VDF_PROOF, 0, &input, self.lambda),
                input,
                query_slot: t,
                response_slot: t + 1,
            });
        }
        Ok(t + 1)
    }

    /// Hands over every queued output with `response_slot <= t`.
    pub fn vdf_collect(&mut self, caller: NodeId, t: Slot) -> Vec<VdfOutput> {
        let Some(queue) = self.pending_vdf.get_mut(&caller) else {
            return Vec::new();
        };
        let (ready, rest): (Vec<_>, Vec<_>) =
            queue.drain(..).partition(|o| o.response_slot <= t);
        *queue = rest;
        ready
    }

    pub fn vdf_verify(&self, out: &VdfOutput) -> bool {
        self.vdf_check(&out.input, out.value, out.proof)
    }

    pub fn vdf_check(&self, input: &[u8], value: Digest, proof: Digest) -> bool {
        self.prf.eval(DOM_VDF, 0, input, self.lambda) == value
            && self.prf.eval(DOM_VDF_PROOF, 0, input, self.lambda) == proof
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hub(mode: AdversaryMode, corrupt: Vec<bool>) -> OracleHub {
        let n = corrupt.len();
        let mut awake = vec![vec![true; 10]; n];
        // p3 sleeps from slot 2 on
        if n > 3 {
            for s in 2..10 {
                awake[3][s] = false;
            }
        }
        let s = ParticipationSchedule::new(awake, corrupt);
        OracleHub::new(7, 32, 64 * n as u32, mode, Arc::new(s))
    }

    #[test]
    fn sign_round_trip_and_tamper() {
        let mut h = hub(AdversaryMode::External, vec![false; 4]);
        let m = h.sign(NodeId(0), NodeId(0), b"hello".to_vec(), 0).unwrap();
        assert!(h.verify_sig(&m));
        let mut flipped = m.clone();
        flipped.tag = Digest(flipped.tag.0 ^ 1);
        assert!(!h.verify_sig(&flipped));
        let mut other = m.clone();
        other.signer = NodeId(1);
        assert!(!h.verify_sig(&other));
        let mut moved = m;
        moved.claimed_slot = 5;
        assert!(!h.verify_sig(&moved));
    }

    #[test]
    fn external_blocks_cross_key() {
        let mut h = hub(AdversaryMode::External, vec![false, false, true, true]);
        let err = h.sign(NodeId(2), NodeId(3), b"x".to_vec(), 3).unwrap_err();
        assert!(matches!(err, OracleError::PolicyViolation { .. }));
        assert!(h.vrf_eval(NodeId(2), NodeId(3), b"x".to_vec(), 3).is_err());
        assert_eq!(h.query_log().len(), 2);
        assert!(h
            .query_log()
            .iter()
            .all(|r| r.outcome == QueryOutcome::PolicyViolation));
    }

    #[test]
    fn standard_allows_corrupt_keys() {
        let mut h = hub(AdversaryMode::Standard, vec![false, false, true, true]);
        let m = h.sign(NodeId(2), NodeId(3), b"x".to_vec(), 3).unwrap();
        assert_eq!(m.signer, NodeId(3));
        assert!(h.verify_sig(&m));
        assert!(h.sign(NodeId(2), NodeId(0), b"x".to_vec(), 3).is_err());
        assert!(h.sign(NodeId(0), NodeId(2), b"x".to_vec(), 3).is_err());
    }

    #[test]
    fn key_access_table() {
        let c = [false, true, true];
        use AdversaryMode::*;
        assert!(key_access_allowed(External, NodeId(1), NodeId(1), &c));
        assert!(!key_access_allowed(External, NodeId(1), NodeId(2), &c));
        assert!(key_access_allowed(Standard, NodeId(1), NodeId(2), &c));
        assert!(!key_access_allowed(Standard, NodeId(0), NodeId(2), &c));
        assert!(!key_access_allowed(Standard, NodeId(1), NodeId(0), &c));
    }

    #[test]
    fn asleep_caller_rejected() {
        let mut h = hub(AdversaryMode::External, vec![false; 4]);
        let err = h.sign(NodeId(3), NodeId(3), vec![], 4).unwrap_err();
        assert!(matches!(err, OracleError::AsleepCaller { .. }));
    }

    #[test]
    fn vrf_determinism_and_verify() {
        let mut h = hub(AdversaryMode::External, vec![false; 4]);
        let a = h.vrf_eval(NodeId(1), NodeId(1), b"in".to_vec(), 0).unwrap();
        let b = h.vrf_eval(NodeId(1), NodeId(1), b"in".to_vec(), 1).unwrap();
        let c = h.vrf_eval(NodeId(1), NodeId(1), b"in2".to_vec(), 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.value, c.value);
        assert!(h.vrf_verify(&a));
        let mut wrong = a.clone();
        wrong.key_owner = NodeId(2);
        assert!(!h.vrf_verify(&wrong));
    }

    #[test]
    fn vdf_rate_and_delay() {
        let mut h = hub(AdversaryMode::External, vec![false; 4]);
        for t in 0..3 {
            h.begin_slot(t);
            assert!(h.vdf_collect(NodeId(0), t).len() == usize::from(t > 0));
            assert_eq!(h.vdf_eval(NodeId(0), vec![vec![t as u8]], t), Ok(t + 1));
            assert!(matches!(
                h.vdf_eval(NodeId(0), vec![vec![9]], t),
                Err(OracleError::RateLimited { .. })
            ));
        }
        h.begin_slot(3);
        let out = h.vdf_collect(NodeId(0), 3);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].query_slot, out[0].response_slot), (2, 3));
        assert!(h.vdf_verify(&out[0]));
    }

    #[test]
    fn vdf_batch_single_response_slot() {
        let mut h = hub(AdversaryMode::External, vec![false; 4]);
        h.begin_slot(4);
        h.vdf_eval(NodeId(1), (0..5u8).map(|i| vec![i]).collect(), 4)
            .unwrap();
        assert!(h.vdf_collect(NodeId(1), 4).is_empty());
        let out = h.vdf_collect(NodeId(1), 5);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|o| o.response_slot == 5));
    }

    #[test]
    fn budget_enforced() {
        let s = ParticipationSchedule::always_awake(1, 2, vec![false]);
        let mut h = OracleHub::new(1, 32, 2, AdversaryMode::External, Arc::new(s));
        h.sign(NodeId(0), NodeId(0), vec![1], 0).unwrap();
        h.sign(NodeId(0), NodeId(0), vec![2], 0).unwrap();
        assert!(matches!(
            h.sign(NodeId(0), NodeId(0), vec![3], 0),
            Err(OracleError::BudgetExceeded { .. })
        ));
        h.begin_slot(1);
        assert!(h.sign(NodeId(0), NodeId(0), vec![3], 1).is_ok());
    }

    #[test]
    fn hash_properties() {
        let h = hub(AdversaryMode::External, vec![false; 4]);
        assert_eq!(h.hash(b"a"), h.hash(b"a"));
        let _ = h.hash(b"");
        let mut seen = std::collections::HashSet::new();
        for i in 0u32..10_000 {
            assert!(seen.insert(h.hash(&i.to_le_bytes())));
        }
    }

    #[test]
    fn lambda_masks_outputs() {
        let s = ParticipationSchedule::always_awake(1, 1, vec![false]);
        let mut h = OracleHub::new(3, 16, 64, AdversaryMode::External, Arc::new(s));
        for i in 0..50u8 {
            let v = h.vrf_eval(NodeId(0), NodeId(0), vec![i], 0).unwrap();
            assert!(v.value.0 < (1 << 16));
        }
    }
}
