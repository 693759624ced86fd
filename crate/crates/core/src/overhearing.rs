//! Per-neighbour metric collection from overheard radio envelopes.
//!
//! The accumulator never sees a payload: an event carries only the sender,
//! the addressee and the frame class. Routing beacons additionally expose the
//! advertised rank, which is how the rank metric is sampled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kernel::MetricVector;
use crate::NodeId;

/// Class of an overheard frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FrameClass {
    Data,
    Beacon { rank: f64 },
    Hello,
    Ant,
    AntNotice,
}

/// Envelope of one radio transmission as seen by an observer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioEvent {
    pub sender: NodeId,
    /// `None` for broadcasts.
    pub receiver: Option<NodeId>,
    pub class: FrameClass,
}

/// Which envelopes count towards the transmission metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverhearingPolicy {
    /// Routing beacons are periodic and content-free for the forwarding
    /// picture; by default they feed only the rank metric.
    pub beacons_count_as_tx: bool,
}

impl Default for OverhearingPolicy {
    fn default() -> Self {
        OverhearingPolicy {
            beacons_count_as_tx: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Counters {
    tx_heard: u32,
    rx_heard: u32,
    rank_sum: f64,
    rank_samples: u32,
}

/// Slot-local counters for every tracked neighbour of one observer.
#[derive(Clone, Debug)]
pub struct SlotAccumulator {
    observer: NodeId,
    capacity: usize,
    policy: OverhearingPolicy,
    counters: BTreeMap<NodeId, Counters>,
    last_rank: BTreeMap<NodeId, f64>,
}

impl SlotAccumulator {
    pub fn new(observer: NodeId, capacity: usize, policy: OverhearingPolicy) -> Self {
        SlotAccumulator {
            observer,
            capacity,
            policy,
            counters: BTreeMap::new(),
            last_rank: BTreeMap::new(),
        }
    }

    pub fn tracked(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.counters.keys().copied()
    }

    pub fn is_tracked(&self, id: NodeId) -> bool {
        self.counters.contains_key(&id)
    }

    /// Starts tracking `id` if capacity allows. Returns whether it is tracked.
    pub fn admit(&mut self, id: NodeId) -> bool {
        if id == self.observer {
            return false;
        }
        if self.counters.contains_key(&id) {
            return true;
        }
        if self.counters.len() >= self.capacity {
            return false;
        }
        self.counters.insert(id, Counters::default());
        true
    }

    /// Stops tracking a neighbour (table eviction).
    pub fn forget(&mut self, id: NodeId) {
        self.counters.remove(&id);
        self.last_rank.remove(&id);
    }

    /// Records one overheard envelope. `in_range` says whether a node lies
    /// within the observer's reception range.
    ///
    /// Returns false when the event left the counters untouched.
    pub fn observe(&mut self, event: &RadioEvent, in_range: impl Fn(NodeId) -> bool) -> bool {
        let mut touched = false;
        if event.sender == self.observer {
            // Own unicasts are known receptions at the addressee.
            if let Some(rx) = event.receiver {
                if self.admit(rx) {
                    self.counters.get_mut(&rx).unwrap().rx_heard += 1;
                    touched = true;
                }
            }
            return touched;
        }
        if !in_range(event.sender) {
            return false;
        }
        if self.admit(event.sender) {
            let c = self.counters.get_mut(&event.sender).unwrap();
            match event.class {
                FrameClass::Beacon { rank } => {
                    c.rank_sum += rank;
                    c.rank_samples += 1;
                    if self.policy.beacons_count_as_tx {
                        c.tx_heard += 1;
                    }
                }
                _ => c.tx_heard += 1,
            }
            touched = true;
        }
        if let Some(rx) = event.receiver {
            if rx != self.observer && in_range(rx) && self.admit(rx) {
                self.counters.get_mut(&rx).unwrap().rx_heard += 1;
                touched = true;
            }
        }
        touched
    }

    /// Turns the slot's counters into one metric vector per tracked neighbour
    /// and resets them.
    ///
    /// A neighbour with no beacon in the slot keeps its last known rank.
    pub fn close_slot(&mut self) -> Vec<(NodeId, MetricVector)> {
        let mut out = Vec::with_capacity(self.counters.len());
        for (&id, c) in self.counters.iter_mut() {
            let rank = if c.rank_samples > 0 {
                let r = c.rank_sum / c.rank_samples as f64;
                self.last_rank.insert(id, r);
                r
            } else {
                self.last_rank.get(&id).copied().unwrap_or(0.0)
            };
            let tx = c.tx_heard as f64;
            let ratio = c.rx_heard as f64 / tx.max(1.0);
            out.push((id, MetricVector::new(tx, ratio, rank)));
            *c = Counters::default();
        }
        out
    }
}
