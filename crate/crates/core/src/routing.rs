//! Distance-vector routing with a trust-weighted, hysteresis-damped objective.
//!
//! A node's rank is the cheapest `p_hat(y) + rank(y)` over its usable
//! neighbours, where `p_hat` is the smoothed, trust-weighted ETX penalty of the
//! link. The root always holds the root rank.

use serde::{Deserialize, Serialize};

use crate::detect::NeighborDetector;
use crate::trust::LinkPenaltyState;
use crate::NodeId;

/// Maximum number of neighbour records per node.
pub const NEIGHBOR_TABLE_CAP: usize = 50;
/// ETX sample for a slot in which every attempt failed, and the upper clamp.
pub const ETX_FAIL_CAP: f64 = 8.0;
/// ETX assumed for a link that has never been used.
pub const ETX_UNKNOWN: f64 = 2.0;
/// Rank of a node without a route.
pub const UNREACHABLE_RANK: f64 = 65535.0;

/// Blends one slot of link-layer statistics into the running ETX.
pub fn estimate_etx(attempts: u32, successes: u32, prev_etx: f64) -> f64 {
    debug_assert!(successes <= attempts);
    let sample = if successes > 0 {
        attempts as f64 / successes as f64
    } else {
        ETX_FAIL_CAP
    };
    (0.7 * prev_etx + 0.3 * sample).clamp(1.0, ETX_FAIL_CAP)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingParams {
    pub root_rank: f64,
    /// Improvement a new parent must offer before an ordinary switch.
    pub hysteresis: f64,
    /// Above this trust multiplier on the current parent, hysteresis is waived.
    pub trust_switch_tau: f64,
    /// A neighbour not heard for longer than this (seconds) is not a candidate.
    pub neighbor_timeout: f64,
}

impl Default for RoutingParams {
    fn default() -> Self {
        RoutingParams {
            root_rank: 0.0,
            hysteresis: 0.5,
            trust_switch_tau: 1.1,
            neighbor_timeout: 10.0,
        }
    }
}

/// Everything a node knows about one neighbour.
#[derive(Clone, Debug)]
pub struct NeighborRecord {
    pub id: NodeId,
    /// Last rank heard in a beacon, if any.
    pub advertised_rank: Option<f64>,
    pub etx: f64,
    pub slot_attempts: u32,
    pub slot_successes: u32,
    pub penalty: LinkPenaltyState,
    pub detector: NeighborDetector,
    /// Trust multiplier applied to this link's penalty (1 when trust is not used).
    pub tau: f64,
    /// Time (seconds) of the last frame heard from this neighbour.
    pub last_heard: f64,
    /// The neighbour relayed data through us until this time, so it is a
    /// child and must not be chosen as parent.
    pub child_until: f64,
    pub blacklisted: bool,
}

impl NeighborRecord {
    pub fn new(id: NodeId, feature_len: usize, now: f64) -> Self {
        NeighborRecord {
            id,
            advertised_rank: None,
            etx: ETX_UNKNOWN,
            slot_attempts: 0,
            slot_successes: 0,
            penalty: LinkPenaltyState::default(),
            detector: NeighborDetector::new(feature_len),
            tau: 1.0,
            last_heard: now,
            child_until: f64::NEG_INFINITY,
            blacklisted: false,
        }
    }

    /// Cost of reaching the root through this neighbour.
    pub fn candidate_cost(&self) -> Option<f64> {
        let rank = self.advertised_rank?;
        if rank >= UNREACHABLE_RANK {
            return None;
        }
        Some(self.penalty.value_or(self.etx) + rank)
    }

    fn usable(&self, now: f64, params: &RoutingParams) -> bool {
        !self.blacklisted && now - self.last_heard <= params.neighbor_timeout && now >= self.child_until
    }
}

/// Bounded neighbour table, kept sorted by id.
#[derive(Clone, Debug, Default)]
pub struct NeighborTable {
    records: Vec<NeighborRecord>,
}

impl NeighborTable {
    pub fn new() -> Self {
        NeighborTable::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborRecord> {
        self.records.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NeighborRecord> {
        self.records.iter_mut()
    }

    pub fn get(&self, id: NodeId) -> Option<&NeighborRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn get_mut(&mut self, id: NodeId) -> Option<&mut NeighborRecord> {
        match self.records.binary_search_by_key(&id, |r| r.id) {
            Ok(i) => Some(&mut self.records[i]),
            Err(_) => None,
        }
    }

    /// Returns the record for `id`, inserting a fresh one if needed.
    ///
    /// When the table is full the stalest record other than `protect` is
    /// evicted; its id is reported in the second tuple field.
    pub fn upsert(
        &mut self,
        id: NodeId,
        feature_len: usize,
        now: f64,
        protect: Option<NodeId>,
    ) -> (Option<&mut NeighborRecord>, Option<NodeId>) {
        let mut evicted = None;
        let idx = match self.records.binary_search_by_key(&id, |r| r.id) {
            Ok(i) => i,
            Err(_) => {
                if self.records.len() >= NEIGHBOR_TABLE_CAP {
                    let victim = self
                        .records
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| Some(r.id) != protect)
                        .min_by(|(_, a), (_, b)| {
                            a.last_heard.total_cmp(&b.last_heard).then(a.id.cmp(&b.id))
                        })
                        .map(|(i, _)| i);
                    match victim {
                        Some(v) => {
                            evicted = Some(self.records.remove(v).id);
                        }
                        None => return (None, None),
                    }
                }
                let pos = self
                    .records
                    .binary_search_by_key(&id, |r| r.id)
                    .unwrap_err();
                self.records
                    .insert(pos, NeighborRecord::new(id, feature_len, now));
                pos
            }
        };
        (Some(&mut self.records[idx]), evicted)
    }
}

/// A node's position in the routing tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankState {
    pub own_rank: f64,
    pub parent: Option<NodeId>,
    pub is_root: bool,
}

impl RankState {
    pub fn root(root_rank: f64) -> Self {
        RankState {
            own_rank: root_rank,
            parent: None,
            is_root: true,
        }
    }

    pub fn detached() -> Self {
        RankState {
            own_rank: UNREACHABLE_RANK,
            parent: None,
            is_root: false,
        }
    }

    pub fn is_detached(&self) -> bool {
        !self.is_root && self.parent.is_none()
    }
}

/// Recomputes rank and parent from the neighbour table.
pub fn compute_rank(
    table: &NeighborTable,
    state: &RankState,
    params: &RoutingParams,
    now: f64,
) -> RankState {
    if state.is_root {
        return RankState::root(params.root_rank);
    }
    let mut best: Option<(NodeId, f64)> = None;
    let mut current: Option<(f64, f64)> = None;
    for r in table.iter() {
        if !r.usable(now, params) {
            continue;
        }
        let Some(cost) = r.candidate_cost() else {
            continue;
        };
        if Some(r.id) == state.parent {
            current = Some((cost, r.tau));
        }
        // Records are sorted by id, so strict comparison keeps the lowest id on ties.
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((r.id, cost));
        }
    }
    let Some((best_id, best_cost)) = best else {
        return RankState::detached();
    };
    let (parent, rank) = match (state.parent, current) {
        (Some(p), Some((cur_cost, cur_tau))) if p != best_id => {
            let margin = if cur_tau > params.trust_switch_tau {
                0.0
            } else {
                params.hysteresis
            };
            if best_cost < cur_cost - margin {
                (best_id, best_cost)
            } else {
                (p, cur_cost)
            }
        }
        _ => (best_id, best_cost),
    };
    RankState {
        own_rank: rank,
        parent: Some(parent),
        is_root: false,
    }
}

/// Periodic routing advertisement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeaconMessage {
    pub sender: NodeId,
    pub rank: f64,
}

/// The beacon an honest node sends, or `None` while detached.
pub fn emit_beacon(id: NodeId, state: &RankState) -> Option<BeaconMessage> {
    if state.is_detached() {
        return None;
    }
    Some(BeaconMessage {
        sender: id,
        rank: state.own_rank,
    })
}

/// Where an upward data packet goes next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NextHop {
    Parent(NodeId),
    /// The packet reached the root.
    Deliver,
    /// No route; the packet is lost.
    Drop,
}

pub fn forward_data(state: &RankState) -> NextHop {
    if state.is_root {
        NextHop::Deliver
    } else {
        match state.parent {
            Some(p) => NextHop::Parent(p),
            None => NextHop::Drop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neighbor(id: u32, p_hat: f64, rank: f64) -> NeighborRecord {
        let mut r = NeighborRecord::new(NodeId(id), 4, 0.0);
        r.advertised_rank = Some(rank);
        r.penalty = LinkPenaltyState {
            p_hat,
            initialized: true,
        };
        r
    }

    fn table(records: Vec<NeighborRecord>) -> NeighborTable {
        let mut t = NeighborTable::new();
        for r in records {
            let id = r.id;
            let (slot, _) = t.upsert(id, 4, 0.0, None);
            *slot.unwrap() = r;
        }
        t
    }

    #[test]
    fn etx_examples() {
        assert_eq!(estimate_etx(10, 10, 1.0), 1.0);
        assert!((estimate_etx(10, 5, 2.0) - 2.0).abs() < 1e-12);
        assert!((estimate_etx(3, 0, 2.0) - 3.8).abs() < 1e-12);
    }

    #[test]
    fn picks_dominant_neighbor() {
        let t = table(vec![neighbor(1, 1.0, 0.0), neighbor(2, 1.0, 2.0)]);
        let s = compute_rank(&t, &RankState::detached(), &RoutingParams::default(), 0.0);
        assert_eq!(s.parent, Some(NodeId(1)));
        assert_eq!(s.own_rank, 1.0);
    }

    #[test]
    fn hysteresis_keeps_parent() {
        let t = table(vec![neighbor(1, 1.0, 2.0), neighbor(2, 1.0, 1.8)]);
        let cur = RankState {
            own_rank: 3.0,
            parent: Some(NodeId(1)),
            is_root: false,
        };
        let s = compute_rank(&t, &cur, &RoutingParams::default(), 0.0);
        assert_eq!(s.parent, Some(NodeId(1)));
        assert_eq!(s.own_rank, 3.0);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let t = table(vec![neighbor(7, 1.0, 1.0), neighbor(3, 1.0, 1.0)]);
        let s = compute_rank(&t, &RankState::detached(), &RoutingParams::default(), 0.0);
        assert_eq!(s.parent, Some(NodeId(3)));
    }

    #[test]
    fn empty_table_detaches() {
        let s = compute_rank(
            &NeighborTable::new(),
            &RankState::detached(),
            &RoutingParams::default(),
            0.0,
        );
        assert!(s.is_detached());
        assert_eq!(s.own_rank, UNREACHABLE_RANK);
        assert_eq!(forward_data(&s), NextHop::Drop);
        assert_eq!(emit_beacon(NodeId(4), &s), None);
    }

    #[test]
    fn stale_and_blacklisted_neighbors_are_skipped() {
        let mut a = neighbor(1, 1.0, 0.0);
        a.blacklisted = true;
        let mut b = neighbor(2, 1.0, 1.0);
        b.last_heard = -100.0;
        let c = neighbor(3, 1.0, 4.0);
        let t = table(vec![a, b, c]);
        let s = compute_rank(&t, &RankState::detached(), &RoutingParams::default(), 0.0);
        assert_eq!(s.parent, Some(NodeId(3)));
    }

    #[test]
    fn root_state_and_beacons() {
        let t = table(vec![neighbor(1, 1.0, 0.0)]);
        let s = compute_rank(&t, &RankState::root(0.0), &RoutingParams::default(), 0.0);
        assert_eq!(s, RankState::root(0.0));
        assert_eq!(emit_beacon(NodeId(0), &s).unwrap().rank, 0.0);
        assert_eq!(forward_data(&s), NextHop::Deliver);
        let child = RankState {
            own_rank: 1.0,
            parent: Some(NodeId(0)),
            is_root: false,
        };
        assert_eq!(forward_data(&child), NextHop::Parent(NodeId(0)));
    }

    #[test]
    fn eviction_spares_parent() {
        let mut t = NeighborTable::new();
        for i in 0..NEIGHBOR_TABLE_CAP as u32 {
            t.upsert(NodeId(i), 4, i as f64, None);
        }
        // Node 0 is the stalest but is the parent.
        let (rec, evicted) = t.upsert(NodeId(999), 4, 100.0, Some(NodeId(0)));
        assert!(rec.is_some());
        assert_eq!(evicted, Some(NodeId(1)));
        assert!(t.get(NodeId(0)).is_some());
        assert_eq!(t.len(), NEIGHBOR_TABLE_CAP);
    }

    #[test]
    fn distrusted_parent_is_dropped_without_hysteresis() {
        let mut old = neighbor(1, 1.0, 2.0);
        old.tau = 1.5;
        let t = table(vec![old, neighbor(2, 1.0, 1.8)]);
        let cur = RankState {
            own_rank: 3.0,
            parent: Some(NodeId(1)),
            is_root: false,
        };
        let s = compute_rank(&t, &cur, &RoutingParams::default(), 0.0);
        assert_eq!(s.parent, Some(NodeId(2)));
        assert!((s.own_rank - 2.8).abs() < 1e-12);
    }

    #[test]
    fn child_is_not_a_parent_candidate() {
        let mut c = neighbor(1, 1.0, 0.0);
        c.child_until = 5.0;
        let t = table(vec![c, neighbor(2, 1.0, 3.0)]);
        let s = compute_rank(&t, &RankState::detached(), &RoutingParams::default(), 1.0);
        assert_eq!(s.parent, Some(NodeId(2)));
        let s = compute_rank(&t, &RankState::detached(), &RoutingParams::default(), 5.0);
        assert_eq!(s.parent, Some(NodeId(1)));
    }

    /// Shortest distance to node 0 with `w[v][u]` the cost of v using u.
    fn dijkstra(adj: &[Vec<usize>], w: &[Vec<f64>]) -> Vec<f64> {
        let n = adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[0] = 0.0;
        for _ in 0..n {
            let Some(u) = (0..n)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            else {
                break;
            };
            done[u] = true;
            for &v in &adj[u] {
                let d = dist[u] + w[v][u];
                if d < dist[v] {
                    dist[v] = d;
                }
            }
        }
        dist
    }

    #[test]
    fn converged_ranks_equal_shortest_paths() {
        use crate::topology::generate_topology;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        let params = RoutingParams {
            hysteresis: 0.0,
            ..RoutingParams::default()
        };
        for seed in 0..50u64 {
            let topo = generate_topology(25, 100.0, 50.0, seed).unwrap();
            let n = topo.node_count();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let adj: Vec<Vec<usize>> = topo
                .nodes()
                .map(|v| topo.neighbors(v).iter().map(|u| u.0 as usize).collect())
                .collect();
            let w: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(1.0..ETX_FAIL_CAP)).collect())
                .collect();
            let mut states: Vec<RankState> = (0..n)
                .map(|i| {
                    if i == 0 {
                        RankState::root(0.0)
                    } else {
                        RankState::detached()
                    }
                })
                .collect();
            let mut tables: Vec<NeighborTable> = (0..n)
                .map(|v| {
                    let mut t = NeighborTable::new();
                    for &u in &adj[v] {
                        let (r, _) = t.upsert(NodeId(u as u32), 4, 0.0, None);
                        r.unwrap().etx = w[v][u];
                    }
                    t
                })
                .collect();
            for _ in 0..n {
                for v in 0..n {
                    for &u in &adj[v] {
                        let rank = states[u].own_rank;
                        let r = tables[v].get_mut(NodeId(u as u32)).unwrap();
                        r.advertised_rank = Some(rank);
                    }
                    states[v] = compute_rank(&tables[v], &states[v], &params, 0.0);
                }
            }
            let want = dijkstra(&adj, &w);
            for v in 0..n {
                assert!(
                    (states[v].own_rank - want[v]).abs() <= 1e-9,
                    "seed {seed} node {v}: {} vs {}",
                    states[v].own_rank,
                    want[v]
                );
            }
        }
    }
}
