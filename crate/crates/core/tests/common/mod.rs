#![allow(dead_code)]

use sleepy_core::oracle::{OracleHub, SignedMessage};
use sleepy_core::protocol::messages::encode_link;
use sleepy_core::protocol::Link;
use sleepy_core::schedule::ParticipationSchedule;
use sleepy_core::wakeness::{genesis_value, verify_depth_value, DepthValue, VdfChains};
use sleepy_core::{AdversaryMode, Digest, NodeId, Slot};
use sleepy_core::config::ExtensionPolicy;
use std::collections::BTreeSet;
use std::sync::Arc;

pub const P1: NodeId = NodeId(0);
pub const P2: NodeId = NodeId(1);
pub const P3: NodeId = NodeId(2);

/// What the late node p2 concluded about p1's depth-2 value.
#[derive(Debug)]
pub struct ThreeNode {
    /// p2 holds a depth-2 bit for p1.
    pub p2_bit: bool,
    /// p2 accepts p1's depth-2 value built on p3's withheld link.
    pub p2_accepts_via_p3: bool,
    /// p1 accepts the same value (control: p1 saw every link).
    pub p1_accepts_via_p3: bool,
    /// p2 accepts p1's depth-2 value built on p2's own chain, if p1 made one.
    pub p2_accepts_via_p2: Option<bool>,
}

fn awake(slots: &[Slot], horizon: usize) -> Vec<bool> {
    (0..horizon as u64).map(|t| slots.contains(&t)).collect()
}

fn collect_links(hub: &mut OracleHub, me: NodeId, t: Slot, depth_of_input: &dyn Fn(Digest) -> u64) -> Vec<(Link, SignedMessage)> {
    hub.vdf_collect(me, t)
        .into_iter()
        .map(|o| {
            let input = Digest(u128::from_le_bytes(o.input[..16].try_into().unwrap()));
            let l = Link {
                input,
                value: o.value,
                proof: o.proof,
                depth: depth_of_input(input) + 1,
                extender: me,
                query_slot: o.query_slot,
            };
            let s = hub.sign(me, me, encode_link(&l), t).unwrap();
            (l, s)
        })
        .collect()
}

/// The three-node scenario, shifted by one slot because VDF answers arrive one
/// slot after the query: corrupt p3 computes a depth-1 value and shows it to p1
/// only; p1 extends what it has; p2 wakes afterwards.
///
/// Without the extension rule p1 extends exactly p3's value, and p2 is asleep
/// throughout. With `Sampling`, p1 samples among every prover it heard from, and
/// an honest p2 that was also awake at slot 0 has its own chain in the pool.
pub fn three_node(policy: Option<ExtensionPolicy>) -> ThreeNode {
    let h = 4;
    let p2_slots: &[Slot] = if policy.is_some() { &[0, 1, 2, 3] } else { &[2, 3] };
    let schedule = ParticipationSchedule::new(
        vec![awake(&[1, 2], h), awake(p2_slots, h), awake(&[0, 1], h)],
        vec![false, false, true],
    );
    let mut hub = OracleHub::new(11, 32, 192, AdversaryMode::External, Arc::new(schedule));
    let g = genesis_value(&hub);
    let mut c1 = VdfChains::new(P1, 3, g);
    let mut c2 = VdfChains::new(P2, 3, g);
    let mut recv1: Vec<SignedMessage> = Vec::new();
    let mut recv2: Vec<SignedMessage> = Vec::new();

    // slot 0: p3 (and p2 when awake) start chains from genesis
    hub.begin_slot(0);
    hub.vdf_eval(P3, vec![Link::vdf_input(g, P3)], 0).unwrap();
    if policy.is_some() {
        hub.vdf_eval(P2, vec![Link::vdf_input(g, P2)], 0).unwrap();
    }

    // slot 1: p3's depth-1 link goes to p1 only; p2's goes to everyone
    hub.begin_slot(1);
    let l3 = collect_links(&mut hub, P3, 1, &|_| 0);
    recv1.extend(l3.iter().map(|x| x.1.clone()));
    let mut l2own = Vec::new();
    if policy.is_some() {
        l2own = collect_links(&mut hub, P2, 1, &|_| 0);
        recv1.extend(l2own.iter().map(|x| x.1.clone()));
        recv2.extend(l2own.iter().map(|x| x.1.clone()));
        c2.ingest(1, l2own.iter().map(|x| x.0.clone()), 8);
    }
    c1.ingest(1, l3.iter().chain(&l2own).map(|x| x.0.clone()), 8);
    let inputs: Vec<(Digest, u64)> = match policy {
        None => l3.iter().map(|x| (x.0.value, 1)).collect(),
        Some(p) => {
            let eligible: BTreeSet<NodeId> = [P2, P3].into_iter().collect();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
            c1.choose_inputs(p, 2, 0, &eligible, &mut rng)
        }
    };
    hub.vdf_eval(P1, inputs.iter().map(|(v, _)| Link::vdf_input(*v, P1)).collect(), 1)
        .unwrap();

    // slot 2: p1 broadcasts its depth-2 links
    hub.begin_slot(2);
    let depth = |v: Digest| inputs.iter().find(|x| x.0 == v).map_or(0, |x| x.1);
    let l1 = collect_links(&mut hub, P1, 2, &depth);
    recv1.extend(l1.iter().map(|x| x.1.clone()));
    recv2.extend(l1.iter().map(|x| x.1.clone()));
    c1.ingest(2, l1.iter().map(|x| x.0.clone()), 8);
    hub.begin_slot(3);
    c2.ingest(3, l1.iter().map(|x| x.0.clone()), 8);

    let via = |first: &[(Link, SignedMessage)]| -> Option<DepthValue> {
        let (a, sa) = first.first()?;
        let (b, sb) = l1.iter().find(|(l, _)| l.input == a.value)?;
        Some(DepthValue {
            value: b.value,
            prover: P1,
            depth: 2,
            links: vec![sa.clone(), sb.clone()],
        })
    };
    let v3 = via(&l3).expect("p1 extended p3's value");
    ThreeNode {
        p2_bit: c2.bits(P1).contains(&2),
        p2_accepts_via_p3: verify_depth_value(&hub, g, &recv2, &v3),
        p1_accepts_via_p3: verify_depth_value(&hub, g, &recv1, &v3),
        p2_accepts_via_p2: via(&l2own).map(|v| verify_depth_value(&hub, g, &recv2, &v)),
    }
}
