//! Random unit-disk deployments.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::NodeId;

/// Resampling budget before a deployment is declared infeasible.
pub const MAX_TOPOLOGY_ATTEMPTS: u32 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    root: NodeId,
    tx_range: f64,
    adjacency: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Builds the unit-disk graph over fixed positions. Node ids are indices.
    pub fn from_positions(positions: Vec<(f64, f64)>, root: NodeId, tx_range: f64) -> Self {
        let n = positions.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if dist(positions[i], positions[j]) <= tx_range {
                    adjacency[i].push(NodeId(j as u32));
                    adjacency[j].push(NodeId(i as u32));
                }
            }
        }
        Topology {
            positions,
            root,
            tx_range,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.positions.len() as u32).map(NodeId)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn tx_range(&self) -> f64 {
        self.tx_range
    }

    pub fn position(&self, id: NodeId) -> (f64, f64) {
        self.positions[id.index()]
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    /// Neighbours of `id`, sorted by id.
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id.index()]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        dist(self.positions[a.index()], self.positions[b.index()])
    }

    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.distance(a, b) <= self.tx_range
    }

    /// Hop distance from the root, `None` for unreachable nodes.
    pub fn hop_depths(&self) -> Vec<Option<u32>> {
        let mut depth = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        depth[self.root.index()] = Some(0);
        queue.push_back(self.root);
        while let Some(u) = queue.pop_front() {
            let d = depth[u.index()].unwrap();
            for &v in self.neighbors(u) {
                if depth[v.index()].is_none() {
                    depth[v.index()] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        depth
    }

    /// Parent of every node in a breadth-first minimum-hop tree (lowest id wins ties).
    pub fn min_hop_parents(&self) -> Vec<Option<NodeId>> {
        let depth = self.hop_depths();
        self.nodes()
            .map(|n| {
                let d = depth[n.index()]?;
                if d == 0 {
                    return None;
                }
                self.neighbors(n)
                    .iter()
                    .copied()
                    .find(|m| depth[m.index()] == Some(d - 1))
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.hop_depths().iter().all(Option::is_some)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Places the root at the centre of a square and the other nodes uniformly
/// at random, resampling until the graph is connected and (for networks of
/// 25 nodes or more) the root has at least two neighbours.
pub fn generate_topology(
    node_count: usize,
    area_side: f64,
    tx_range: f64,
    seed: u64,
) -> Result<Topology, ConfigError> {
    if node_count < 2 {
        return Err(ConfigError::invalid("node_count", "need at least 2 nodes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x7090);
    let root = NodeId(0);
    let min_root_degree = if node_count >= 25 { 2 } else { 1 };
    let mut worst = String::new();
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        let mut positions = Vec::with_capacity(node_count);
        positions.push((area_side / 2.0, area_side / 2.0));
        for _ in 1..node_count {
            positions.push((
                rng.random_range(0.0..=area_side),
                rng.random_range(0.0..=area_side),
            ));
        }
        let topo = Topology::from_positions(positions, root, tx_range);
        let reachable = topo.hop_depths().iter().filter(|d| d.is_some()).count();
        let root_degree = topo.neighbors(root).len();
        if reachable == node_count && root_degree >= min_root_degree {
            return Ok(topo);
        }
        worst = format!("last sample: {reachable}/{node_count} reachable, root degree {root_degree}");
    }
    Err(ConfigError::Connectivity {
        attempts: MAX_TOPOLOGY_ATTEMPTS,
        detail: worst,
    })
}
