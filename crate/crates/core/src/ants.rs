//! Notification tickets.
//!
//! A node that abandons its parent because of low trust launches a ticket
//! naming the parent as suspect. The ticket climbs the routing tree one
//! unicast at a time; every node that receives it broadcasts a one-hop notice
//! naming itself, so that its neighbours give it a refractory period instead
//! of distrusting the traffic it is about to absorb.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::NodeId;

/// Serialized size of a ticket: suspect, reporter and slot as 32-bit words.
pub const ANT_WIRE_BYTES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ant {
    pub suspect: NodeId,
    pub reporter: NodeId,
    pub created_slot: u32,
    pub hops_unicast: u32,
    pub hops_broadcast: u32,
}

impl Ant {
    pub fn new(suspect: NodeId, reporter: NodeId, created_slot: u32) -> Self {
        debug_assert_ne!(suspect, reporter);
        Ant {
            suspect,
            reporter,
            created_slot,
            hops_unicast: 0,
            hops_broadcast: 0,
        }
    }

    /// Defence messages attributable to this ticket so far, counting its spawn.
    pub fn messages(&self) -> u32 {
        1 + self.hops_unicast + self.hops_broadcast
    }

    /// Big-endian wire record. Hop counters are bookkeeping and are not sent.
    pub fn to_bytes(&self) -> [u8; ANT_WIRE_BYTES] {
        let mut out = [0u8; ANT_WIRE_BYTES];
        out[0..4].copy_from_slice(&self.suspect.0.to_be_bytes());
        out[4..8].copy_from_slice(&self.reporter.0.to_be_bytes());
        out[8..12].copy_from_slice(&self.created_slot.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; ANT_WIRE_BYTES]) -> Self {
        let word = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        Ant::new(NodeId(word(0)), NodeId(word(4)), word(8))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntParams {
    pub refractory_slots: u32,
    /// Slots during which a reporter will not accuse the same suspect again.
    pub hold_slots: u32,
    /// Slots a ticket may wait at a node without a route.
    pub ttl_slots: u32,
    /// Minimum trust multiplier on the abandoned parent for a switch to count
    /// as trust-induced.
    pub trigger_tau: f64,
    pub refractory_enabled: bool,
}

impl Default for AntParams {
    fn default() -> Self {
        AntParams {
            refractory_slots: 2,
            hold_slots: 10,
            ttl_slots: 5,
            trigger_tau: 1.1,
            refractory_enabled: true,
        }
    }
}

/// Per-neighbour refractory deadlines held by one node.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefractoryState {
    until: BTreeMap<NodeId, u32>,
}

impl RefractoryState {
    /// Starts (or extends) a refractory period for `node` on a notice heard in `slot`.
    pub fn notify(&mut self, node: NodeId, slot: u32, params: &AntParams) {
        if !params.refractory_enabled {
            return;
        }
        let until = slot + params.refractory_slots;
        let e = self.until.entry(node).or_insert(0);
        *e = (*e).max(until);
    }

    pub fn is_active(&self, node: NodeId, slot: u32) -> bool {
        self.until.get(&node).is_some_and(|&u| slot < u)
    }
}

/// Remembers which suspects this node has already reported.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AntReporter {
    last_report: BTreeMap<NodeId, u32>,
}

impl AntReporter {
    /// Decides whether a parent switch away from `old_parent` produces a ticket.
    pub fn maybe_spawn(
        &mut self,
        reporter: NodeId,
        old_parent: NodeId,
        old_parent_tau: f64,
        slot: u32,
        refractory: &RefractoryState,
        params: &AntParams,
    ) -> Option<Ant> {
        if old_parent == reporter || old_parent_tau <= params.trigger_tau {
            return None;
        }
        if refractory.is_active(old_parent, slot) {
            return None;
        }
        if let Some(&last) = self.last_report.get(&old_parent) {
            if slot < last + params.hold_slots {
                return None;
            }
        }
        self.last_report.insert(old_parent, slot);
        Some(Ant::new(old_parent, reporter, slot))
    }
}

/// One-hop broadcast a ticket triggers at each node it reaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntNotice {
    /// The node whose traffic is about to change.
    pub hop: NodeId,
}

/// What a node does with a ticket it holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HopAction {
    Forward { ant: Ant, to: NodeId },
    /// No route right now; keep the ticket until `expires_slot`.
    Buffer { ant: Ant, expires_slot: u32 },
    /// The ticket reached the root.
    Deliver(Ant),
}

/// Notice a node broadcasts when a ticket arrives at it.
pub fn arrival_notice(ant: &mut Ant, at_node: NodeId) -> AntNotice {
    ant.hops_broadcast += 1;
    AntNotice { hop: at_node }
}

/// Routes a ticket held by `at_node`.
pub fn ant_hop(
    ant: Ant,
    is_root: bool,
    parent: Option<NodeId>,
    slot: u32,
    params: &AntParams,
) -> HopAction {
    if is_root {
        return HopAction::Deliver(ant);
    }
    match parent {
        Some(to) => HopAction::Forward { ant, to },
        None => HopAction::Buffer {
            ant,
            expires_slot: slot + params.ttl_slots,
        },
    }
}

/// Base-station ingestion record for a delivered ticket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntRecord {
    pub suspect: NodeId,
    pub reporter: NodeId,
    pub slot: u32,
}

pub fn deliver_ant(ant: &Ant, slot: u32) -> AntRecord {
    AntRecord {
        suspect: ant.suspect,
        reporter: ant.reporter,
        slot,
    }
}

/// Tickets waiting at a node without a route.
#[derive(Clone, Debug, Default)]
pub struct AntBuffer {
    waiting: Vec<(Ant, u32)>,
}

impl AntBuffer {
    pub fn push(&mut self, ant: Ant, expires_slot: u32) {
        self.waiting.push((ant, expires_slot));
    }

    pub fn len(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty()
    }

    /// Removes every ticket. Returns them with their expiry slots.
    pub fn drain(&mut self) -> Vec<(Ant, u32)> {
        std::mem::take(&mut self.waiting)
    }

    /// Splits out tickets whose deadline has passed at `slot`.
    pub fn expire(&mut self, slot: u32) -> Vec<Ant> {
        let (dead, alive): (Vec<_>, Vec<_>) = self.waiting.drain(..).partition(|(_, e)| slot >= *e);
        self.waiting = alive;
        dead.into_iter().map(|(a, _)| a).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_record_fits_a_data_packet() {
        let ant = Ant::new(NodeId(5), NodeId(9), 77);
        let bytes = ant.to_bytes();
        assert_eq!(bytes.len(), ANT_WIRE_BYTES);
        assert!(bytes.len() <= 160);
        assert_eq!(Ant::from_bytes(&bytes), ant);
    }

    #[test]
    fn spawn_requires_trust_trigger() {
        let p = AntParams::default();
        let mut r = AntReporter::default();
        let refr = RefractoryState::default();
        assert_eq!(r.maybe_spawn(NodeId(1), NodeId(2), 1.0, 10, &refr, &p), None);
        let ant = r.maybe_spawn(NodeId(1), NodeId(2), 1e6, 10, &refr, &p).unwrap();
        assert_eq!((ant.suspect, ant.reporter, ant.created_slot), (NodeId(2), NodeId(1), 10));
    }

    #[test]
    fn duplicate_reports_are_held() {
        let p = AntParams::default();
        let mut r = AntReporter::default();
        let refr = RefractoryState::default();
        assert!(r.maybe_spawn(NodeId(1), NodeId(2), 5.0, 10, &refr, &p).is_some());
        assert!(r.maybe_spawn(NodeId(1), NodeId(2), 5.0, 19, &refr, &p).is_none());
        assert!(r.maybe_spawn(NodeId(1), NodeId(3), 5.0, 19, &refr, &p).is_some());
        assert!(r.maybe_spawn(NodeId(1), NodeId(2), 5.0, 20, &refr, &p).is_some());
    }

    #[test]
    fn refractory_blocks_spawn_and_expires() {
        let p = AntParams::default();
        let mut refr = RefractoryState::default();
        refr.notify(NodeId(2), 10, &p);
        assert!(refr.is_active(NodeId(2), 10));
        assert!(refr.is_active(NodeId(2), 11));
        assert!(!refr.is_active(NodeId(2), 12));
        let mut r = AntReporter::default();
        assert!(r.maybe_spawn(NodeId(1), NodeId(2), 9.0, 11, &refr, &p).is_none());
        assert!(r.maybe_spawn(NodeId(1), NodeId(2), 9.0, 12, &refr, &p).is_some());
    }

    #[test]
    fn disabled_refractory_never_activates() {
        let p = AntParams {
            refractory_enabled: false,
            ..AntParams::default()
        };
        let mut refr = RefractoryState::default();
        refr.notify(NodeId(2), 10, &p);
        assert!(!refr.is_active(NodeId(2), 10));
    }

    #[test]
    fn line_route_costs_two_z_plus_one() {
        // Reporter 3 -> 2 -> 1 -> root 0.
        let p = AntParams::default();
        let parents = [None, Some(NodeId(0)), Some(NodeId(1)), Some(NodeId(2))];
        let mut ant = Ant::new(NodeId(4), NodeId(3), 0);
        let mut at = NodeId(3);
        loop {
            match ant_hop(ant, at.0 == 0, parents[at.index()], 0, &p) {
                HopAction::Forward { ant: a, to } => {
                    ant = a;
                    ant.hops_unicast += 1;
                    at = to;
                    arrival_notice(&mut ant, at);
                }
                HopAction::Deliver(a) => {
                    ant = a;
                    break;
                }
                HopAction::Buffer { .. } => unreachable!(),
            }
        }
        assert_eq!((ant.hops_unicast, ant.hops_broadcast), (3, 3));
        assert_eq!(ant.messages(), 7);
        let rec = deliver_ant(&ant, 4);
        assert_eq!((rec.suspect, rec.reporter, rec.slot), (NodeId(4), NodeId(3), 4));
    }

    #[test]
    fn detached_holder_buffers_until_ttl() {
        let p = AntParams::default();
        let ant = Ant::new(NodeId(4), NodeId(3), 0);
        let HopAction::Buffer { expires_slot, .. } = ant_hop(ant, false, None, 7, &p) else {
            panic!("expected buffering");
        };
        assert_eq!(expires_slot, 12);
        let mut buf = AntBuffer::default();
        buf.push(ant, expires_slot);
        assert!(buf.expire(11).is_empty());
        assert_eq!(buf.expire(12), vec![ant]);
        assert!(buf.is_empty());
    }
}
