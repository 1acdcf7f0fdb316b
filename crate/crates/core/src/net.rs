//! Synchronous point-to-point transport with sleeper buffering.

use crate::error::NetError;
use crate::schedule::ParticipationSchedule;
use crate::types::{Digest, NodeId, Slot};
use std::collections::BTreeMap;

/// A message as seen by its recipient.
#[derive(Clone, Debug)]
pub struct Delivery<T> {
    pub msg_id: u64,
    pub sender: NodeId,
    pub send_slot: Slot,
    pub order_key: Digest,
    pub item: T,
}

/// Per-node inboxes keyed by the slot at which a message becomes due.
pub struct Network<T> {
    delta: u64,
    inbox: Vec<BTreeMap<Slot, Vec<Delivery<T>>>>,
}

impl<T: Clone> Network<T> {
    pub fn new(n: usize, delta: u64) -> Self {
        Network {
            delta,
            inbox: (0..n).map(|_| BTreeMap::new()).collect(),
        }
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    /// Slot from which `recipient` may receive a message sent at `t` with `delay`.
    /// A recipient asleep at `t + delay` gets it at its first awake slot `>= t + Δ`.
    pub fn due_slot(
        &self,
        schedule: &ParticipationSchedule,
        recipient: NodeId,
        t: Slot,
        delay: u64,
    ) -> Slot {
        if schedule.is_awake(recipient, t + delay) {
            t + delay
        } else {
            t + self.delta
        }
    }

    /// Queues one message for each `(recipient, delay)` pair. Validates everything
    /// before queuing anything.
    #[allow(clippy::too_many_arguments)]
    pub fn send(
        &mut self,
        schedule: &ParticipationSchedule,
        msg_id: u64,
        sender: NodeId,
        order_key: Digest,
        item: T,
        recipients: &[(NodeId, u64)],
        t: Slot,
    ) -> Result<Vec<(NodeId, Slot)>, NetError> {
        if !schedule.is_awake(sender, t) {
            return Err(NetError::AsleepSender { sender, slot: t });
        }
        if let Some(&(_, delay)) = recipients
            .iter()
            .find(|(_, d)| *d < 1 || *d > self.delta)
        {
            return Err(NetError::DelayOutOfRange {
                delay,
                delta: self.delta,
            });
        }
        let mut dues = Vec::with_capacity(recipients.len());
        for &(r, delay) in recipients {
            let due = self.due_slot(schedule, r, t, delay);
            self.inbox[r.index()]
                .entry(due)
                .or_default()
                .push(Delivery {
                    msg_id,
                    sender,
                    send_slot: t,
                    order_key,
                    item: item.clone(),
                });
            dues.push((r, due));
        }
        Ok(dues)
    }

    /// Drains everything due at or before `t`, ordered by (send slot, sender, key).
    pub fn deliver(
        &mut self,
        schedule: &ParticipationSchedule,
        node: NodeId,
        t: Slot,
    ) -> Result<Vec<Delivery<T>>, NetError> {
        if !schedule.is_awake(node, t) {
            return Err(NetError::AsleepRecipient {
                recipient: node,
                slot: t,
            });
        }
        let queue = &mut self.inbox[node.index()];
        let later = queue.split_off(&(t + 1));
        let due = std::mem::replace(queue, later);
        let mut out: Vec<Delivery<T>> = due.into_values().flatten().collect();
        out.sort_by_key(|d| (d.send_slot, d.sender, d.order_key, d.msg_id));
        Ok(out)
    }

    /// What `deliver` would return at `t`, without draining.
    pub fn peek(&self, node: NodeId, t: Slot) -> Vec<Delivery<T>> {
        let mut out: Vec<Delivery<T>> = self.inbox[node.index()]
            .range(..=t)
            .flat_map(|(_, v)| v.iter().cloned())
            .collect();
        out.sort_by_key(|d| (d.send_slot, d.sender, d.order_key, d.msg_id));
        out
    }

    /// Messages still queued (never delivered so far).
    pub fn pending(&self) -> usize {
        self.inbox
            .iter()
            .map(|q| q.values().map(Vec::len).sum::<usize>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net_and_sched(awake: Vec<Vec<bool>>, delta: u64) -> (Network<u8>, ParticipationSchedule) {
        let n = awake.len();
        (
            Network::new(n, delta),
            ParticipationSchedule::new(awake, vec![false; n]),
        )
    }

    #[test]
    fn max_delay_delivery() {
        let (mut net, s) = net_and_sched(vec![vec![true; 20]; 2], 3);
        net.send(&s, 0, NodeId(0), Digest(1), 7, &[(NodeId(1), 3)], 2)
            .unwrap();
        for t in 2..5 {
            assert!(net.deliver(&s, NodeId(1), t).unwrap().is_empty());
        }
        assert_eq!(net.deliver(&s, NodeId(1), 5).unwrap().len(), 1);
    }

    #[test]
    fn sleeper_gets_message_on_wake() {
        let delta = 2;
        let t = 1;
        let wake = t + delta + 6;
        let mut row = vec![true; 20];
        for s in t..wake {
            row[s as usize] = false;
        }
        let (mut net, s) = net_and_sched(vec![vec![true; 20], row], delta);
        net.send(&s, 0, NodeId(0), Digest(1), 7, &[(NodeId(1), 1)], t)
            .unwrap();
        let got = net.deliver(&s, NodeId(1), wake).unwrap();
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn delay_bounds() {
        let (mut net, s) = net_and_sched(vec![vec![true; 5]; 2], 2);
        assert!(matches!(
            net.send(&s, 0, NodeId(0), Digest(0), 1, &[(NodeId(1), 3)], 0),
            Err(NetError::DelayOutOfRange { delay: 3, delta: 2 })
        ));
        assert!(net
            .send(&s, 0, NodeId(0), Digest(0), 1, &[(NodeId(1), 0)], 0)
            .is_err());
        net.send(&s, 0, NodeId(0), Digest(0), 1, &[(NodeId(1), 1)], 0)
            .unwrap();
        assert_eq!(net.deliver(&s, NodeId(1), 1).unwrap().len(), 1);
    }

    #[test]
    fn asleep_endpoints_rejected() {
        let (mut net, s) = net_and_sched(vec![vec![false, true], vec![true, true]], 1);
        assert!(matches!(
            net.send(&s, 0, NodeId(0), Digest(0), 1, &[(NodeId(1), 1)], 0),
            Err(NetError::AsleepSender { .. })
        ));
        assert!(matches!(
            net.deliver(&s, NodeId(0), 0),
            Err(NetError::AsleepRecipient { .. })
        ));
    }

    #[test]
    fn delivery_order_is_deterministic() {
        let (mut net, s) = net_and_sched(vec![vec![true; 10]; 3], 2);
        net.send(&s, 0, NodeId(2), Digest(5), 0, &[(NodeId(0), 2)], 1)
            .unwrap();
        net.send(&s, 1, NodeId(1), Digest(9), 1, &[(NodeId(0), 1)], 1)
            .unwrap();
        net.send(&s, 2, NodeId(1), Digest(3), 2, &[(NodeId(0), 2)], 0)
            .unwrap();
        let got: Vec<u8> = net
            .deliver(&s, NodeId(0), 3)
            .unwrap()
            .into_iter()
            .map(|d| d.item)
            .collect();
        assert_eq!(got, vec![2, 1, 0]);
        assert_eq!(net.pending(), 0);
    }
}
