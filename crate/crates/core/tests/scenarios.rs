use std::collections::BTreeMap;

use trustmesh::attacks::AttackKind;
use trustmesh::config::ScenarioConfig;
use trustmesh::metrics::summarize_default;
use trustmesh::runlog::{Record, RunLog};
use trustmesh::sim::{self, Simulation};
use trustmesh::topology::Topology;
use trustmesh::NodeId;

fn short(nodes: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        node_count: nodes,
        sim_duration: 1200.0,
        seed,
        ..ScenarioConfig::default()
    }
}

fn defense_messages(log: &RunLog) -> u32 {
    log.records
        .iter()
        .map(|r| match r {
            Record::SlotStats {
                ant, notice, spawn, ..
            } => ant + notice + spawn,
            _ => 0,
        })
        .sum()
}

#[test]
fn same_seed_same_digest() {
    let mut cfg = short(25, 4);
    cfg.attack_kind = AttackKind::Sinkhole;
    cfg.attack_start = Some(600.0);
    let a = sim::run(&cfg).unwrap();
    let b = sim::run(&cfg).unwrap();
    assert_eq!(a.digest(), b.digest());
    cfg.seed = 5;
    assert_ne!(sim::run(&cfg).unwrap().digest(), a.digest());
}

#[test]
fn quiet_network_spawns_no_tickets() {
    for seed in [1, 2] {
        let log = sim::run(&short(25, seed)).unwrap();
        let spawned = log
            .records
            .iter()
            .filter(|r| matches!(r, Record::AntSpawned { .. }))
            .count();
        assert_eq!(spawned, 0, "seed {seed}");
        assert_eq!(defense_messages(&log), 0);
    }
}

#[test]
fn every_packet_ends_at_most_once() {
    let mut cfg = short(25, 3);
    cfg.attack_kind = AttackKind::Blackhole;
    cfg.attack_start = Some(600.0);
    let log = sim::run(&cfg).unwrap();
    let mut fate: BTreeMap<u64, u32> = BTreeMap::new();
    let mut sent = 0usize;
    for r in &log.records {
        match r {
            Record::Sent { id, .. } => {
                sent += 1;
                fate.entry(*id).or_insert(0);
            }
            Record::Delivered { id, .. } | Record::Dropped { id, .. } => {
                *fate.get_mut(id).expect("outcome for an unsent packet") += 1;
            }
            _ => {}
        }
    }
    assert_eq!(fate.len(), sent, "packet ids are unique");
    assert!(fate.values().all(|&n| n <= 1));
    let s = summarize_default(&log).unwrap();
    assert!(s.delivered <= s.sent);
    assert!((0.0..=1.0).contains(&s.data_loss));
}

#[test]
fn routes_reach_the_root_without_attack() {
    let log = sim::run(&short(25, 7)).unwrap();
    let s = summarize_default(&log).unwrap();
    assert!(s.sent > 0);
    assert!(s.data_loss < 0.05, "loss {}", s.data_loss);
}

/// Root 0, relay 1, then two depth-2 nodes (2 and 4) that both reach node 3.
/// Node 3 hears 4 first and settles on it.
fn diamond_line() -> Topology {
    Topology::from_positions(
        vec![(0.0, 0.0), (45.0, 0.0), (90.0, 20.0), (135.0, 0.0), (90.0, 0.0)],
        NodeId(0),
        50.0,
    )
}

fn forced_switch(link_p: Option<f64>) -> RunLog {
    let cfg = ScenarioConfig {
        sim_duration: 1200.0,
        link_p,
        ..ScenarioConfig::default()
    };
    let mut sim = Simulation::with_topology(&cfg, diamond_line()).unwrap();
    sim.force_distrust(NodeId(3), NodeId(4), 600.0);
    sim.run()
}

#[test]
fn forced_switch_costs_two_z_plus_one_messages() {
    let log = forced_switch(Some(1.0));
    let switches: Vec<_> = log
        .records
        .iter()
        .filter_map(|r| match r {
            Record::ParentChange {
                node, old, new, ..
            } if *node == NodeId(3) && old.is_some() => Some((*old, *new)),
            _ => None,
        })
        .collect();
    assert_eq!(switches, vec![(Some(NodeId(4)), Some(NodeId(2)))]);
    assert_eq!(defense_messages(&log), 7);
    let delivered = log
        .records
        .iter()
        .find_map(|r| match r {
            Record::AntDelivered {
                suspect, reporter, ..
            } => Some((*suspect, *reporter)),
            _ => None,
        });
    assert_eq!(delivered, Some((NodeId(4), NodeId(3))));
}

/// Nodes 1 and 2 both next to the root, four children (3 to 6) that reach
/// both and first settle on 2, and two onlookers (7, 8) in range of node 1
/// and the children.
fn terminal_neighborhood() -> Topology {
    Topology::from_positions(
        vec![
            (0.0, 0.0),
            (40.0, 0.0),
            (0.0, 40.0),
            (40.0, 40.0),
            (45.0, 35.0),
            (35.0, 45.0),
            (42.0, 42.0),
            (20.0, 20.0),
            (25.0, 15.0),
        ],
        NodeId(0),
        50.0,
    )
}

fn onlooker_flags_on_new_parent(refractory: bool) -> usize {
    let cfg = ScenarioConfig {
        sim_duration: 1200.0,
        link_p: Some(1.0),
        tx_scale: Some(25.0),
        fwd_scale: 1.0,
        refractory,
        ..ScenarioConfig::default()
    };
    let mut sim = Simulation::with_topology(&cfg, terminal_neighborhood()).unwrap();
    for child in 3..=6 {
        sim.force_distrust(NodeId(child), NodeId(2), 600.0);
    }
    let log = sim.run();
    let moved = log
        .records
        .iter()
        .filter(|r| {
            matches!(r, Record::ParentChange { old: Some(NodeId(2)), new: Some(NodeId(1)), .. })
        })
        .count();
    assert_eq!(moved, 4, "all children move to the new parent");
    log.records
        .iter()
        .filter(|r| {
            matches!(r, Record::Flag { observer, suspect: NodeId(1), .. }
                if *observer == NodeId(7) || *observer == NodeId(8))
        })
        .count()
}

#[test]
fn refractory_stops_distrust_spreading_to_the_new_parent() {
    assert!(onlooker_flags_on_new_parent(false) > 0);
    assert_eq!(onlooker_flags_on_new_parent(true), 0);
}
