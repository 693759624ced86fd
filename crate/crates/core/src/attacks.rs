//! Malicious behaviour overrides.
//!
//! An attacker runs the honest stack and, once its plan is active, has parts
//! of that behaviour replaced: the advertised rank, the forwarding decision,
//! an extra hello timer, or (for the ticket-forging variant) a stream of
//! fabricated notification tickets.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::routing::BeaconMessage;
use crate::topology::Topology;
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Sinkhole,
    Blackhole,
    HelloFlood,
    /// Honest routing, but the node injects fabricated tickets accusing its
    /// parent. Exercises the compromised-ticket branch of the filter.
    AntForgery,
}

impl AttackKind {
    pub const ROUTING_ATTACKS: [AttackKind; 3] = [
        AttackKind::Sinkhole,
        AttackKind::Blackhole,
        AttackKind::HelloFlood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Sinkhole => "sinkhole",
            AttackKind::Blackhole => "blackhole",
            AttackKind::HelloFlood => "hello_flood",
            AttackKind::AntForgery => "ant_forgery",
        }
    }

    pub fn falsifies_rank(self) -> bool {
        matches!(self, AttackKind::Sinkhole | AttackKind::Blackhole)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => AttackKind::None,
            "sinkhole" => AttackKind::Sinkhole,
            "blackhole" => AttackKind::Blackhole,
            "hello_flood" | "hello" => AttackKind::HelloFlood,
            "ant_forgery" => AttackKind::AntForgery,
            other => {
                return Err(ConfigError::invalid(
                    "attack_kind",
                    format!("unknown attack `{other}`"),
                ))
            }
        })
    }
}

/// How attackers are drawn when no explicit ids are configured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerPlacement {
    /// Uniform over nodes that are neither the root nor adjacent to it.
    Random,
    /// As `Random`, restricted to nodes that relay traffic for at least one
    /// other node in the minimum-hop tree (falls back to `Random` if none).
    Relay,
}

impl FromStr for AttackerPlacement {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(AttackerPlacement::Random),
            "relay" => Ok(AttackerPlacement::Relay),
            other => Err(ConfigError::invalid(
                "attacker_placement",
                format!("expected `random` or `relay`, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for AttackerPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackerPlacement::Random => "random",
            AttackerPlacement::Relay => "relay",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub kind: AttackKind,
    pub attacker_ids: Vec<NodeId>,
    /// Onset, in seconds of simulated time.
    pub start_time: f64,
    /// Spacing of flood hellos, in seconds.
    pub hello_interval: f64,
    /// Fabricated tickets per slot for the forging variant.
    pub forged_per_slot: u32,
}

impl AttackPlan {
    pub fn none() -> Self {
        AttackPlan {
            kind: AttackKind::None,
            attacker_ids: Vec::new(),
            start_time: f64::INFINITY,
            hello_interval: 0.1,
            forged_per_slot: 0,
        }
    }

    pub fn is_attacker(&self, id: NodeId) -> bool {
        self.kind != AttackKind::None && self.attacker_ids.contains(&id)
    }

    pub fn is_active(&self, id: NodeId, now: f64) -> bool {
        self.is_attacker(id) && now >= self.start_time
    }

    pub fn behavior(&self, id: NodeId, now: f64, root_rank: f64) -> Behavior {
        if !self.is_active(id, now) {
            return Behavior::HONEST;
        }
        match self.kind {
            AttackKind::None => Behavior::HONEST,
            AttackKind::Sinkhole => sinkhole_step(root_rank),
            AttackKind::Blackhole => blackhole_step(root_rank),
            AttackKind::HelloFlood => hello_flood_step(self.hello_interval),
            AttackKind::AntForgery => Behavior {
                forged_tickets: self.forged_per_slot,
                ..Behavior::HONEST
            },
        }
    }

    /// Checks the plan against a concrete topology.
    pub fn validate(&self, topology: &Topology) -> Result<(), ConfigError> {
        for &a in &self.attacker_ids {
            if a == topology.root() {
                return Err(ConfigError::invalid("attacker_ids", "the root cannot attack"));
            }
            if a.index() >= topology.node_count() {
                return Err(ConfigError::invalid(
                    "attacker_ids",
                    format!("node {a} does not exist"),
                ));
            }
        }
        if self.kind == AttackKind::HelloFlood && !(self.hello_interval > 0.0) {
            return Err(ConfigError::invalid("hello_interval", "must be > 0"));
        }
        Ok(())
    }
}

/// What an active attacker does differently from an honest node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    /// Rank written into every beacon instead of the true one.
    pub beacon_rank: Option<f64>,
    pub drop_forwarded: bool,
    pub hello_interval: Option<f64>,
    pub forged_tickets: u32,
}

impl Behavior {
    pub const HONEST: Behavior = Behavior {
        beacon_rank: None,
        drop_forwarded: false,
        hello_interval: None,
        forged_tickets: 0,
    };

    /// Applies the rank override to an honest beacon. An attacker that lies
    /// about its rank beacons even while it has no route itself.
    pub fn beacon(&self, id: NodeId, honest: Option<BeaconMessage>) -> Option<BeaconMessage> {
        match self.beacon_rank {
            Some(rank) => Some(BeaconMessage { sender: id, rank }),
            None => honest,
        }
    }
}

/// Advertise the root rank, forward normally.
pub fn sinkhole_step(root_rank: f64) -> Behavior {
    Behavior {
        beacon_rank: Some(root_rank),
        ..Behavior::HONEST
    }
}

/// Advertise the root rank and silently discard relayed data.
pub fn blackhole_step(root_rank: f64) -> Behavior {
    Behavior {
        beacon_rank: Some(root_rank),
        drop_forwarded: true,
        ..Behavior::HONEST
    }
}

/// Keep honest duties and add one-hop hellos every `interval` seconds.
pub fn hello_flood_step(interval: f64) -> Behavior {
    Behavior {
        hello_interval: Some(interval),
        ..Behavior::HONEST
    }
}

/// Nodes that may be compromised: everything outside the root's radio range.
pub fn eligible_attackers(topology: &Topology) -> Vec<NodeId> {
    let root = topology.root();
    topology
        .nodes()
        .filter(|&n| n != root && !topology.in_range(n, root))
        .collect()
}

/// Draws `count` attackers from the nodes that are neither the root nor one
/// of its direct neighbours. `tree` maps each node to its current parent;
/// relay placement prefers nodes that have at least one child in it.
pub fn select_attackers<R: Rng>(
    topology: &Topology,
    tree: &[Option<NodeId>],
    count: usize,
    placement: AttackerPlacement,
    rng: &mut R,
) -> Result<Vec<NodeId>, ConfigError> {
    let eligible = eligible_attackers(topology);
    let pool = match placement {
        AttackerPlacement::Random => eligible,
        AttackerPlacement::Relay => {
            let relays: Vec<NodeId> = eligible
                .iter()
                .copied()
                .filter(|n| tree.iter().any(|p| *p == Some(*n)))
                .collect();
            if relays.len() >= count {
                relays
            } else {
                eligible
            }
        }
    };
    if pool.len() < count {
        return Err(ConfigError::invalid(
            "attackers",
            format!(
                "{count} attackers requested but only {} nodes are outside the root's range",
                pool.len()
            ),
        ));
    }
    let mut chosen: Vec<NodeId> = pool.choose_multiple(rng, count).copied().collect();
    chosen.sort();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plan(kind: AttackKind) -> AttackPlan {
        AttackPlan {
            kind,
            attacker_ids: vec![NodeId(3)],
            start_time: 100.0,
            hello_interval: 0.1,
            forged_per_slot: 4,
        }
    }

    #[test]
    fn inactive_before_onset() {
        for kind in AttackKind::ROUTING_ATTACKS {
            let p = plan(kind);
            assert_eq!(p.behavior(NodeId(3), 99.9, 0.0), Behavior::HONEST);
            assert_ne!(p.behavior(NodeId(3), 100.0, 0.0), Behavior::HONEST);
            assert_eq!(p.behavior(NodeId(4), 500.0, 0.0), Behavior::HONEST);
        }
    }

    #[test]
    fn falsified_rank_is_root_rank() {
        let honest = Some(BeaconMessage {
            sender: NodeId(3),
            rank: 4.2,
        });
        for kind in [AttackKind::Sinkhole, AttackKind::Blackhole] {
            let b = plan(kind).behavior(NodeId(3), 200.0, 0.0);
            assert_eq!(b.beacon(NodeId(3), honest).unwrap().rank, 0.0);
            assert_eq!(b.beacon(NodeId(3), None).unwrap().rank, 0.0);
            assert!(kind.falsifies_rank());
        }
        let b = plan(AttackKind::HelloFlood).behavior(NodeId(3), 200.0, 0.0);
        assert_eq!(b.beacon(NodeId(3), honest), honest);
        assert_eq!(b.hello_interval, Some(0.1));
    }

    #[test]
    fn only_blackhole_drops() {
        assert!(plan(AttackKind::Blackhole).behavior(NodeId(3), 200.0, 0.0).drop_forwarded);
        assert!(!plan(AttackKind::Sinkhole).behavior(NodeId(3), 200.0, 0.0).drop_forwarded);
    }

    #[test]
    fn hello_rate_arithmetic() {
        let b = hello_flood_step(0.1);
        let per_slot = (20.0 / b.hello_interval.unwrap()).round() as u32;
        assert_eq!(per_slot, 200);
    }

    #[test]
    fn kind_round_trips_through_text() {
        for kind in [
            AttackKind::None,
            AttackKind::Sinkhole,
            AttackKind::Blackhole,
            AttackKind::HelloFlood,
            AttackKind::AntForgery,
        ] {
            assert_eq!(kind.as_str().parse::<AttackKind>().unwrap(), kind);
        }
        assert!("wormhole".parse::<AttackKind>().is_err());
    }

    #[test]
    fn selection_avoids_root_and_its_neighbors() {
        let mut positions = vec![(50.0, 50.0)];
        for i in 0..24 {
            positions.push(((i % 5) as f64 * 25.0, (i / 5) as f64 * 25.0));
        }
        let topo = Topology::from_positions(positions, NodeId(0), 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chosen = select_attackers(&topo, &topo.min_hop_parents(), 2, AttackerPlacement::Random, &mut rng).unwrap();
        assert_eq!(chosen.len(), 2);
        for a in chosen {
            assert_ne!(a, NodeId(0));
            assert!(!topo.in_range(a, NodeId(0)));
        }
        assert!(select_attackers(&topo, &topo.min_hop_parents(), 25, AttackerPlacement::Random, &mut rng).is_err());
    }
}
