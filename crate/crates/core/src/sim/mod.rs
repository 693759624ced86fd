//! Deterministic discrete-event simulation of one scenario.
//!
//! Every source of randomness is a ChaCha stream derived from the scenario
//! seed and a fixed purpose tag (per node where it matters), so a
//! configuration fully determines the run log, and switching the defence on or
//! off does not reshuffle unrelated draws.

pub mod event;
pub mod mac;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ants::{
    ant_hop, arrival_notice, deliver_ant, Ant, AntBuffer, AntNotice, AntParams, AntReporter,
    HopAction, RefractoryState,
};
use crate::attacks::{eligible_attackers, select_attackers, AttackKind, AttackPlan};
use crate::basestation::{AdminAction, BaseStation};
use crate::config::ScenarioConfig;
use crate::detect::DetectorParams;
use crate::error::{ConfigError, Error};
use crate::kernel::{MetricScales, RandomFeatureMap};
use crate::overhearing::{RadioEvent, SlotAccumulator};
use crate::routing::{
    compute_rank, emit_beacon, estimate_etx, NeighborTable, RankState, RoutingParams,
    NEIGHBOR_TABLE_CAP,
};
use crate::runlog::{AntOutcome, DropReason, Record, RunLog, RunMeta};
use crate::topology::{generate_topology, Topology};
use crate::trust::trust_weighted_penalty;
use crate::NodeId;

use event::EventQueue;
use mac::{backoff, link_success_prob, DataPacket, Frame, MacParams, Payload};

const STREAM_ATTACKERS: u64 = 0xA77A;
const STREAM_NODE_BASE: u64 = 1 << 32;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seed of the feature map a node uses for all of its neighbours.
pub fn feature_seed(scenario_seed: u64, node: NodeId) -> u64 {
    splitmix64(scenario_seed ^ splitmix64(node.0 as u64 + 1))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    AppSend(NodeId),
    Beacon(NodeId),
    Hello(NodeId),
    TxStart(NodeId),
    TxEnd(NodeId),
    SlotTick(u32),
    AttackOnset,
    Revoke(NodeId),
}

#[derive(Clone, Copy, Debug, Default)]
struct SlotCounters {
    data: u32,
    beacon: u32,
    hello: u32,
    ant: u32,
    notice: u32,
    spawn: u32,
}

struct Node {
    id: NodeId,
    is_root: bool,
    alive: bool,
    table: NeighborTable,
    rank: RankState,
    acc: SlotAccumulator,
    map: RandomFeatureMap,
    refractory: RefractoryState,
    reporter: AntReporter,
    ant_buffer: AntBuffer,
    mac_queue: VecDeque<Frame>,
    transmitting: bool,
    mac_rng: ChaCha8Rng,
    timer_rng: ChaCha8Rng,
    /// Neighbours this node has been told (by a test hook) to distrust, with the start time.
    forced_distrust: Vec<(NodeId, f64)>,
}

/// One configured, ready-to-run scenario.
pub struct Simulation {
    cfg: ScenarioConfig,
    topo: Topology,
    plan: AttackPlan,
    nodes: Vec<Node>,
    queue: EventQueue<Event>,
    now: f64,
    log: RunLog,
    bs: BaseStation,
    scales: MetricScales,
    detector: DetectorParams,
    routing: RoutingParams,
    ants: AntParams,
    mac: MacParams,
    channel_free: Vec<f64>,
    next_packet_id: u64,
    counters: SlotCounters,
}

impl Simulation {
    /// Generates the topology and draws attackers from the configuration.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let topo = generate_topology(
            cfg.node_count,
            cfg.effective_area_side(),
            cfg.tx_range,
            cfg.seed,
        )?;
        Self::with_topology(cfg, topo)
    }

    /// Runs the scenario on a fixed topology. `node_count` is taken from the topology.
    pub fn with_topology(cfg: &ScenarioConfig, topo: Topology) -> Result<Self, Error> {
        let mut cfg = cfg.clone();
        cfg.node_count = topo.node_count();
        cfg.validate()?;
        // Unless fixed by the configuration, attackers are drawn at onset from
        // the routing tree as it stands then.
        let attacker_ids = cfg.attacker_ids.clone();
        if cfg.attack_kind != AttackKind::None && attacker_ids.is_empty() {
            let pool = eligible_attackers(&topo).len();
            if pool < cfg.attackers {
                return Err(ConfigError::invalid(
                    "attackers",
                    format!(
                        "{} attackers requested but only {pool} nodes are outside the root's range",
                        cfg.attackers
                    ),
                )
                .into());
            }
        }
        let plan = cfg.attack_plan(attacker_ids);
        plan.validate(&topo)?;

        let policy = cfg.overhearing_policy();
        let mut nodes = Vec::with_capacity(topo.node_count());
        for id in topo.nodes() {
            let is_root = id == topo.root();
            let map = RandomFeatureMap::new(cfg.m, cfg.sigma_sq, feature_seed(cfg.seed, id))?;
            nodes.push(Node {
                id,
                is_root,
                alive: true,
                table: NeighborTable::new(),
                rank: if is_root {
                    RankState::root(cfg.root_rank)
                } else {
                    RankState::detached()
                },
                acc: SlotAccumulator::new(id, NEIGHBOR_TABLE_CAP, policy),
                map,
                refractory: RefractoryState::default(),
                reporter: AntReporter::default(),
                ant_buffer: AntBuffer::default(),
                mac_queue: VecDeque::new(),
                transmitting: false,
                mac_rng: stream(cfg.seed, STREAM_NODE_BASE + 4 * id.0 as u64),
                timer_rng: stream(cfg.seed, STREAM_NODE_BASE + 4 * id.0 as u64 + 1),
                forced_distrust: Vec::new(),
            });
        }

        let scales = cfg.metric_scales()?;
        let n = topo.node_count();
        let mut sim = Simulation {
            detector: cfg.detector_params(),
            routing: cfg.routing_params(),
            ants: cfg.ant_params(),
            mac: MacParams {
                service_time: cfg.service_time,
                backoff_min: cfg.backoff_min,
                backoff_max: cfg.backoff_max,
                max_attempts: cfg.max_attempts,
            },
            bs: BaseStation::new(cfg.filter_params()),
            cfg,
            topo,
            plan,
            nodes,
            queue: EventQueue::new(),
            now: 0.0,
            log: RunLog::new(),
            scales,
            channel_free: vec![0.0; n],
            next_packet_id: 0,
            counters: SlotCounters::default(),
        };
        sim.schedule_initial();
        Ok(sim)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn plan(&self) -> &AttackPlan {
        &self.plan
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// From `from_time` on, `observer` gives `suspect` the maximum trust
    /// penalty regardless of what it measures.
    pub fn force_distrust(&mut self, observer: NodeId, suspect: NodeId, from_time: f64) {
        self.nodes[observer.index()]
            .forced_distrust
            .push((suspect, from_time));
    }

    fn schedule_initial(&mut self) {
        for i in 0..self.nodes.len() {
            let id = self.nodes[i].id;
            let (min, max) = (self.cfg.beacon_min, self.cfg.beacon_max);
            let first_beacon = self.nodes[i].timer_rng.random_range(min..=max);
            self.queue.push(first_beacon, Event::Beacon(id));
            if !self.nodes[i].is_root {
                let offset = self.nodes[i]
                    .timer_rng
                    .random_range(0.0..self.cfg.traffic_period);
                self.queue.push(offset, Event::AppSend(id));
            }
        }
        if self.cfg.slot_count() >= 1 {
            self.queue.push(self.cfg.slot_seconds, Event::SlotTick(1));
        }
        if self.plan.kind != AttackKind::None && self.plan.start_time <= self.cfg.sim_duration {
            self.queue.push(self.plan.start_time, Event::AttackOnset);
        }
    }

    fn meta(&self) -> RunMeta {
        let attackers = self.plan.attacker_ids.clone();
        let attacker_neighbors = attackers
            .iter()
            .map(|&a| {
                self.topo
                    .neighbors(a)
                    .iter()
                    .copied()
                    .filter(|&n| n != self.topo.root() && !attackers.contains(&n))
                    .collect()
            })
            .collect();
        RunMeta {
            config: self.cfg.to_kv(),
            node_count: self.topo.node_count(),
            seed: self.cfg.seed,
            root: self.topo.root(),
            attack_kind: self.plan.kind,
            attack_start: (self.plan.kind != AttackKind::None).then_some(self.plan.start_time),
            attackers,
            attacker_neighbors,
            alpha: self.cfg.alpha,
            slot_seconds: self.cfg.slot_seconds,
            sim_duration: self.cfg.sim_duration,
            measure_start: self.cfg.measure_start,
            defense: self.cfg.defense,
        }
    }

    /// Executes the event loop to the configured duration.
    pub fn run(mut self) -> RunLog {
        while let Some(t) = self.queue.peek_time() {
            if t > self.cfg.sim_duration {
                break;
            }
            let (t, ev) = self.queue.pop().unwrap();
            self.now = t;
            self.dispatch(ev);
        }
        self.now = self.cfg.sim_duration;
        self.finish();
        // Written last so that it can name attackers drawn during the run.
        let meta = self.meta();
        self.log.records.insert(0, Record::Meta(meta));
        self.log
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::AppSend(n) => self.app_send(n),
            Event::Beacon(n) => self.beacon(n),
            Event::Hello(n) => self.hello(n),
            Event::TxStart(n) => self.tx_start(n),
            Event::TxEnd(n) => self.tx_end(n),
            Event::SlotTick(k) => self.slot_tick(k),
            Event::AttackOnset => self.attack_onset(),
            Event::Revoke(n) => self.revoke(n),
        }
    }

    fn slot_of(&self, t: f64) -> u32 {
        (t / self.cfg.slot_seconds).floor() as u32
    }

    fn advertised_rank(&self, i: usize) -> f64 {
        let node = &self.nodes[i];
        self.plan
            .behavior(node.id, self.now, self.cfg.root_rank)
            .beacon_rank
            .unwrap_or(node.rank.own_rank)
    }

    // ---- traffic and timers ----

    fn app_send(&mut self, n: NodeId) {
        let i = n.index();
        if !self.nodes[i].alive {
            return;
        }
        self.queue
            .push(self.now + self.cfg.traffic_period, Event::AppSend(n));
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        self.log.push(Record::Sent {
            id,
            src: n,
            time: self.now,
        });
        let pkt = DataPacket {
            id,
            src: n,
            created: self.now,
            hops: 0,
            sender_rank: f64::INFINITY,
            rank_error: false,
        };
        self.enqueue(i, Frame::new(Payload::Data(pkt)));
    }

    fn beacon(&mut self, n: NodeId) {
        let i = n.index();
        if !self.nodes[i].alive {
            return;
        }
        let (min, max) = (self.cfg.beacon_min, self.cfg.beacon_max);
        let next = self.now + self.nodes[i].timer_rng.random_range(min..=max);
        self.queue.push(next, Event::Beacon(n));
        let behavior = self.plan.behavior(n, self.now, self.cfg.root_rank);
        let honest = emit_beacon(n, &self.nodes[i].rank);
        if let Some(b) = behavior.beacon(n, honest) {
            self.enqueue(i, Frame::new(Payload::Beacon { rank: b.rank }));
        }
    }

    fn hello(&mut self, n: NodeId) {
        let i = n.index();
        if !self.nodes[i].alive {
            return;
        }
        let behavior = self.plan.behavior(n, self.now, self.cfg.root_rank);
        if let Some(interval) = behavior.hello_interval {
            self.queue.push(self.now + interval, Event::Hello(n));
            self.enqueue(i, Frame::new(Payload::Hello));
        }
    }

    fn attack_onset(&mut self) {
        if self.plan.attacker_ids.is_empty() {
            let tree: Vec<Option<NodeId>> = self
                .nodes
                .iter()
                .map(|n| if n.alive { n.rank.parent } else { None })
                .collect();
            let mut rng = stream(self.cfg.seed, STREAM_ATTACKERS);
            self.plan.attacker_ids = select_attackers(
                &self.topo,
                &tree,
                self.cfg.attackers,
                self.cfg.attacker_placement,
                &mut rng,
            )
            .expect("attacker pool checked at construction");
        }
        self.log.push(Record::AttackOnset {
            time: self.now,
            attackers: self.plan.attacker_ids.clone(),
        });
        if self.plan.kind == AttackKind::HelloFlood {
            for a in self.plan.attacker_ids.clone() {
                self.queue.push(self.now, Event::Hello(a));
            }
        }
    }

    // ---- MAC ----

    /// Appends a frame to a node's transmit queue. Returns false on overflow,
    /// in which case the frame's loss has already been accounted.
    fn enqueue(&mut self, i: usize, frame: Frame) -> bool {
        if self.nodes[i].mac_queue.len() >= self.cfg.queue_capacity {
            self.frame_lost(i, frame, DropReason::QueueOverflow);
            return false;
        }
        self.nodes[i].mac_queue.push_back(frame);
        self.kick(i);
        true
    }

    fn kick(&mut self, i: usize) {
        let node = &mut self.nodes[i];
        if node.transmitting || node.mac_queue.is_empty() || !node.alive {
            return;
        }
        node.transmitting = true;
        let start = self.now.max(self.channel_free[i]);
        self.queue.push(start, Event::TxStart(node.id));
    }

    fn frame_lost(&mut self, i: usize, frame: Frame, reason: DropReason) {
        match frame.payload {
            Payload::Data(p) => self.log.push(Record::Dropped {
                id: p.id,
                time: self.now,
                node: self.nodes[i].id,
                reason,
            }),
            Payload::Ant(a) => self.ant_final(a, AntOutcome::Lost),
            _ => {}
        }
    }

    fn tx_start(&mut self, n: NodeId) {
        let i = n.index();
        if !self.nodes[i].alive {
            return;
        }
        if self.channel_free[i] > self.now {
            self.queue.push(self.channel_free[i], Event::TxStart(n));
            return;
        }
        let Some(frame) = self.nodes[i].mac_queue.front().copied() else {
            self.nodes[i].transmitting = false;
            return;
        };
        if frame.attempts == 0 {
            let mut frame = frame;
            if frame.payload.is_upward() {
                let parent = if self.nodes[i].is_root {
                    None
                } else {
                    self.nodes[i].rank.parent
                };
                match parent {
                    Some(p) => frame.dest = Some(p),
                    None => {
                        self.nodes[i].mac_queue.pop_front();
                        self.nodes[i].transmitting = false;
                        match frame.payload {
                            Payload::Ant(ant) => {
                                let slot = self.slot_of(self.now);
                                self.nodes[i]
                                    .ant_buffer
                                    .push(ant, slot + self.ants.ttl_slots);
                            }
                            _ => self.frame_lost(i, frame, DropReason::Detached),
                        }
                        self.kick(i);
                        return;
                    }
                }
            }
            match &mut frame.payload {
                Payload::Data(p) => {
                    p.sender_rank = self.advertised_rank(i);
                    self.counters.data += 1;
                }
                Payload::Beacon { .. } => self.counters.beacon += 1,
                Payload::Hello => self.counters.hello += 1,
                Payload::Ant(a) => {
                    a.hops_unicast += 1;
                    self.counters.ant += 1;
                }
                // Counted when the notice was created.
                Payload::Notice(_) => {}
            }
            *self.nodes[i].mac_queue.front_mut().unwrap() = frame;
        }
        let end = self.now + self.mac.service_time;
        self.channel_free[i] = self.channel_free[i].max(end);
        for &m in self.topo.neighbors(n) {
            let f = &mut self.channel_free[m.index()];
            *f = f.max(end);
        }
        self.queue.push(end, Event::TxEnd(n));
    }

    fn tx_end(&mut self, n: NodeId) {
        let i = n.index();
        if !self.nodes[i].alive {
            return;
        }
        let Some(mut frame) = self.nodes[i].mac_queue.front().copied() else {
            self.nodes[i].transmitting = false;
            return;
        };
        frame.attempts += 1;
        let event = RadioEvent {
            sender: n,
            receiver: frame.dest,
            class: frame.payload.class(),
        };
        self.overhear(n, &event);
        match frame.dest {
            Some(d) => {
                let p = if self.nodes[d.index()].alive {
                    self.link_p(n, d)
                } else {
                    0.0
                };
                let ok = self.nodes[i].mac_rng.random::<f64>() < p;
                if let Some(r) = self.nodes[i].table.get_mut(d) {
                    r.slot_attempts += 1;
                    if ok {
                        r.slot_successes += 1;
                    }
                }
                if ok {
                    self.nodes[i].mac_queue.pop_front();
                    self.receive(d, n, frame.payload);
                } else if frame.attempts < self.mac.max_attempts {
                    *self.nodes[i].mac_queue.front_mut().unwrap() = frame;
                    let wait = backoff(frame.attempts, &self.mac, &mut self.nodes[i].mac_rng);
                    self.queue.push(self.now + wait, Event::TxStart(n));
                    return;
                } else {
                    self.nodes[i].mac_queue.pop_front();
                    self.frame_lost(i, frame, DropReason::LinkRetries);
                }
            }
            None => {
                self.nodes[i].mac_queue.pop_front();
                let neighbors = self.topo.neighbors(n).to_vec();
                for m in neighbors {
                    if !self.nodes[m.index()].alive {
                        continue;
                    }
                    let p = self.link_p(n, m);
                    if self.nodes[i].mac_rng.random::<f64>() < p {
                        self.receive(m, n, frame.payload);
                    }
                }
            }
        }
        self.nodes[i].transmitting = false;
        self.kick(i);
    }

    fn link_p(&self, a: NodeId, b: NodeId) -> f64 {
        link_success_prob(
            self.topo.distance(a, b),
            self.topo.tx_range(),
            self.cfg.link_loss,
            self.cfg.link_p,
        )
    }

    /// Lets every live neighbour of the sender (and the sender itself) account
    /// the envelope.
    fn overhear(&mut self, sender: NodeId, event: &RadioEvent) {
        let topo = &self.topo;
        let now = self.now;
        let feature_len = 2 * self.cfg.m;
        {
            let node = &mut self.nodes[sender.index()];
            if !node.is_root {
                let me = node.id;
                node.acc.observe(event, |x| topo.in_range(me, x));
            }
        }
        for &m in topo.neighbors(sender) {
            let node = &mut self.nodes[m.index()];
            if !node.alive || node.is_root {
                continue;
            }
            let protect = node.rank.parent;
            let (rec, evicted) = node.table.upsert(sender, feature_len, now, protect);
            if let Some(rec) = rec {
                rec.last_heard = now;
            }
            if let Some(e) = evicted {
                node.acc.forget(e);
            }
            node.acc.observe(event, |x| topo.in_range(m, x));
        }
    }

    // ---- reception ----

    fn receive(&mut self, to: NodeId, from: NodeId, payload: Payload) {
        let y = to.index();
        match payload {
            Payload::Beacon { rank } => {
                if self.nodes[y].is_root {
                    return;
                }
                let feature_len = 2 * self.cfg.m;
                let node = &mut self.nodes[y];
                let protect = node.rank.parent;
                let (rec, evicted) = node.table.upsert(from, feature_len, self.now, protect);
                if let Some(rec) = rec {
                    rec.advertised_rank = Some(rank);
                }
                if let Some(e) = evicted {
                    node.acc.forget(e);
                }
                self.recompute_rank(y);
            }
            Payload::Hello => {}
            Payload::Data(pkt) => self.receive_data(y, from, pkt),
            Payload::Ant(ant) => self.receive_ant(y, ant),
            Payload::Notice(AntNotice { hop }) => {
                if !self.nodes[y].is_root {
                    let slot = self.slot_of(self.now);
                    self.nodes[y].refractory.notify(hop, slot, &self.ants);
                }
            }
        }
    }

    fn receive_data(&mut self, y: usize, from: NodeId, mut pkt: DataPacket) {
        let id = self.nodes[y].id;
        let drop = |sim: &mut Simulation, reason| {
            sim.log.push(Record::Dropped {
                id: pkt.id,
                time: sim.now,
                node: id,
                reason,
            })
        };
        if self.nodes[y].is_root {
            self.log.push(Record::Delivered {
                id: pkt.id,
                time: self.now,
                hops: pkt.hops + 1,
            });
            return;
        }
        let hold = self.now + self.cfg.neighbor_timeout;
        if let Some(r) = self.nodes[y].table.get_mut(from) {
            r.child_until = hold;
        }
        let behavior = self.plan.behavior(id, self.now, self.cfg.root_rank);
        if behavior.drop_forwarded {
            drop(self, DropReason::Blackhole);
            return;
        }
        pkt.hops += 1;
        if pkt.hops >= self.cfg.hop_limit {
            drop(self, DropReason::HopLimit);
            return;
        }
        // A node lying about its rank does not police others' ranks.
        if behavior.beacon_rank.is_none() && pkt.sender_rank <= self.nodes[y].rank.own_rank {
            if pkt.rank_error {
                drop(self, DropReason::Loop);
                return;
            }
            pkt.rank_error = true;
        }
        self.enqueue(y, Frame::new(Payload::Data(pkt)));
    }

    fn receive_ant(&mut self, y: usize, mut ant: Ant) {
        let id = self.nodes[y].id;
        let notice = arrival_notice(&mut ant, id);
        if self.enqueue(y, Frame::new(Payload::Notice(notice))) {
            self.counters.notice += 1;
        } else {
            ant.hops_broadcast -= 1;
        }
        self.route_ant(y, ant);
    }

    fn route_ant(&mut self, y: usize, ant: Ant) {
        let slot = self.slot_of(self.now);
        let node = &self.nodes[y];
        let parent = node.rank.parent;
        match ant_hop(ant, node.is_root, parent, slot, &self.ants) {
            HopAction::Deliver(ant) => {
                let rec = deliver_ant(&ant, slot);
                self.bs.ingest(&rec);
                self.log.push(Record::AntDelivered {
                    time: self.now,
                    slot,
                    suspect: ant.suspect,
                    reporter: ant.reporter,
                });
                self.ant_final(ant, AntOutcome::Delivered);
            }
            // Same bound as data, so a ticket cannot circle an attacker and
            // the parent it attracted forever.
            HopAction::Forward { ant, .. } if ant.hops_unicast >= self.cfg.hop_limit => {
                self.ant_final(ant, AntOutcome::Lost);
            }
            HopAction::Forward { ant, .. } => {
                // The destination is fixed when the frame first goes on air.
                self.enqueue(y, Frame::new(Payload::Ant(ant)));
            }
            HopAction::Buffer { ant, expires_slot } => {
                self.nodes[y].ant_buffer.push(ant, expires_slot);
            }
        }
    }

    fn ant_final(&mut self, ant: Ant, outcome: AntOutcome) {
        self.log.push(Record::AntFinal {
            time: self.now,
            suspect: ant.suspect,
            reporter: ant.reporter,
            outcome,
            unicast: ant.hops_unicast,
            broadcast: ant.hops_broadcast,
        });
    }

    // ---- routing ----

    fn recompute_rank(&mut self, y: usize) {
        let node = &mut self.nodes[y];
        if node.is_root || !node.alive {
            return;
        }
        let old = node.rank;
        let new = compute_rank(&node.table, &old, &self.routing, self.now);
        node.rank = new;
        if old.parent != new.parent {
            self.parent_changed(y, old.parent, new.parent);
        }
    }

    fn parent_changed(&mut self, y: usize, old: Option<NodeId>, new: Option<NodeId>) {
        let slot = self.slot_of(self.now);
        let node = &mut self.nodes[y];
        let old_rec = old.and_then(|p| node.table.get(p));
        let old_tau = old_rec.map_or(1.0, |r| r.tau);
        let old_blacklisted = old_rec.is_some_and(|r| r.blacklisted);
        self.log.push(Record::ParentChange {
            time: self.now,
            node: node.id,
            old,
            new,
            old_tau,
        });
        // Attackers do not report.
        let honest = !self.plan.is_active(node.id, self.now);
        if let (Some(p), true, false, true) = (old, self.cfg.defense, old_blacklisted, honest) {
            let spawned = node.reporter.maybe_spawn(
                node.id,
                p,
                old_tau,
                slot,
                &node.refractory,
                &self.ants,
            );
            if let Some(ant) = spawned {
                if let Some(r) = node.table.get_mut(p) {
                    r.blacklisted = true;
                }
                self.log.push(Record::AntSpawned {
                    time: self.now,
                    suspect: ant.suspect,
                    reporter: ant.reporter,
                });
                self.counters.spawn += 1;
                self.route_ant(y, ant);
            }
        }
        if new.is_some() {
            self.flush_ant_buffer(y);
        }
    }

    fn flush_ant_buffer(&mut self, y: usize) {
        if self.nodes[y].ant_buffer.is_empty() {
            return;
        }
        for (ant, _) in self.nodes[y].ant_buffer.drain() {
            self.enqueue(y, Frame::new(Payload::Ant(ant)));
        }
    }

    // ---- slot boundary ----

    fn slot_tick(&mut self, k: u32) {
        let closing = k - 1;
        if k < self.cfg.slot_count() {
            self.queue
                .push((k + 1) as f64 * self.cfg.slot_seconds, Event::SlotTick(k + 1));
        }

        for (verdict, action) in self.bs.close_slot(closing) {
            self.log.push(Record::Verdict {
                slot: closing,
                suspect: verdict.suspect,
                verdict: verdict.class,
            });
            if let AdminAction::Revoke {
                node,
                effective_slot,
            } = action
            {
                if self.cfg.revocation && node != self.topo.root() {
                    let at = (effective_slot + 1) as f64 * self.cfg.slot_seconds;
                    self.queue.push(at, Event::Revoke(node));
                }
            }
        }

        for y in 0..self.nodes.len() {
            if !self.nodes[y].alive || self.nodes[y].is_root {
                continue;
            }
            self.close_node_slot(y, closing);
            self.recompute_rank(y);
            let slot = self.slot_of(self.now);
            let expired = self.nodes[y].ant_buffer.expire(slot);
            for ant in expired {
                self.ant_final(ant, AntOutcome::Expired);
            }
            if self.nodes[y].rank.parent.is_some() {
                self.flush_ant_buffer(y);
            }
            self.forge_tickets(y);
        }

        let c = std::mem::take(&mut self.counters);
        self.log.push(Record::SlotStats {
            slot: closing,
            data: c.data,
            beacon: c.beacon,
            hello: c.hello,
            ant: c.ant,
            notice: c.notice,
            spawn: c.spawn,
        });
    }

    /// Scores every tracked neighbour, then refreshes ETX and link penalties.
    fn close_node_slot(&mut self, y: usize, closing: u32) {
        let metrics = self.nodes[y].acc.close_slot();
        let defense = self.cfg.defense;
        let tau_max = self.cfg.tau_max;
        let now = self.now;
        let node = &mut self.nodes[y];
        let mut honest = 0u32;
        for (nb, raw) in metrics {
            let Some(rec) = node.table.get_mut(nb) else {
                continue;
            };
            let in_refractory = node.refractory.is_active(nb, closing);
            let eligible = rec.detector.kea().is_initialized()
                && rec.detector.scored_slots() >= self.detector.warmup_slots
                && !in_refractory;
            let a = match rec
                .detector
                .assess(&raw, &self.scales, &node.map, &self.detector, in_refractory)
            {
                Ok(a) => a,
                // Non-finite metrics: the slot sample is treated as missing.
                Err(_) => continue,
            };
            if eligible && !self.plan.is_attacker(nb) {
                honest += 1;
            }
            if a.flagged {
                self.log.push(Record::Flag {
                    slot: closing,
                    observer: node.id,
                    suspect: nb,
                    eta: a.eta,
                    tau: a.tau,
                });
            }
            rec.tau = if defense { a.tau } else { 1.0 };
        }
        for &(suspect, from) in &node.forced_distrust {
            if now >= from {
                if let Some(rec) = node.table.get_mut(suspect) {
                    rec.tau = tau_max;
                }
            }
        }
        if honest > 0 {
            self.log.push(Record::Assessed {
                slot: closing,
                observer: node.id,
                honest,
            });
        }
        let trust = self.detector.trust;
        for rec in node.table.iter_mut() {
            if rec.slot_attempts > 0 {
                rec.etx = estimate_etx(rec.slot_attempts, rec.slot_successes, rec.etx);
            }
            rec.slot_attempts = 0;
            rec.slot_successes = 0;
            rec.penalty = trust_weighted_penalty(rec.penalty, rec.tau, rec.etx, &trust);
        }
    }

    fn forge_tickets(&mut self, y: usize) {
        let id = self.nodes[y].id;
        let behavior = self.plan.behavior(id, self.now, self.cfg.root_rank);
        let Some(parent) = self.nodes[y].rank.parent else {
            return;
        };
        let slot = self.slot_of(self.now);
        for _ in 0..behavior.forged_tickets {
            let ant = Ant::new(parent, id, slot);
            self.log.push(Record::AntSpawned {
                time: self.now,
                suspect: ant.suspect,
                reporter: ant.reporter,
            });
            self.counters.spawn += 1;
            self.route_ant(y, ant);
        }
    }

    // ---- administration ----

    fn revoke(&mut self, n: NodeId) {
        let i = n.index();
        if !self.nodes[i].alive {
            return;
        }
        self.nodes[i].alive = false;
        self.nodes[i].transmitting = false;
        self.log.push(Record::Revoked {
            time: self.now,
            node: n,
        });
        let frames: Vec<Frame> = self.nodes[i].mac_queue.drain(..).collect();
        for f in frames {
            self.frame_lost(i, f, DropReason::Revoked);
        }
        for (ant, _) in self.nodes[i].ant_buffer.drain() {
            self.ant_final(ant, AntOutcome::Lost);
        }
        // Revocations reach every node out of band.
        for y in 0..self.nodes.len() {
            if let Some(r) = self.nodes[y].table.get_mut(n) {
                r.blacklisted = true;
            }
            self.recompute_rank(y);
        }
    }

    fn finish(&mut self) {
        for i in 0..self.nodes.len() {
            let frames: Vec<Frame> = self.nodes[i].mac_queue.iter().copied().collect();
            for f in frames {
                if let Payload::Ant(a) = f.payload {
                    self.ant_final(a, AntOutcome::InFlight);
                }
            }
            for (ant, _) in self.nodes[i].ant_buffer.drain() {
                self.ant_final(ant, AntOutcome::InFlight);
            }
        }
        self.log.push(Record::End { time: self.now });
    }
}

/// Builds and runs a scenario from its configuration.
pub fn run(cfg: &ScenarioConfig) -> Result<RunLog, Error> {
    Ok(Simulation::new(cfg)?.run())
}
