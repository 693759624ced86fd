//! Scenario configuration: a flat `key = value` file with `#` comments.
//!
//! Values are applied in order (defaults, then file, then command-line
//! overrides), so later sources win. Unknown keys are errors.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ants::AntParams;
use crate::attacks::{AttackKind, AttackPlan, AttackerPlacement};
use crate::basestation::FilterParams;
use crate::detect::DetectorParams;
use crate::error::ConfigError;
use crate::kernel::MetricScales;
use crate::overhearing::OverhearingPolicy;
use crate::routing::RoutingParams;
use crate::trust::TrustParams;
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    // world
    pub node_count: usize,
    /// `None` derives 4 m of side per node (100/200/400 m for 25/50/100 nodes).
    pub area_side: Option<f64>,
    pub tx_range: f64,
    pub traffic_period: f64,
    pub slot_seconds: f64,
    pub sim_duration: f64,
    pub seed: u64,
    // attack
    pub attack_kind: AttackKind,
    pub attackers: usize,
    pub attacker_ids: Vec<NodeId>,
    pub attacker_placement: AttackerPlacement,
    /// `None` derives 1200 s for up to 25 nodes, 2400 s above.
    pub attack_start: Option<f64>,
    pub hello_interval: f64,
    pub forged_per_slot: u32,
    // defence switches
    pub defense: bool,
    pub refractory: bool,
    pub revocation: bool,
    // kernel and trust
    pub m: usize,
    pub sigma_sq: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub k: f64,
    pub tau_max: f64,
    pub penalty_alpha: f64,
    pub warmup_slots: u32,
    // metric normalisation
    /// `None` derives `2 * (slot / traffic period) * subtree_bound`.
    pub tx_scale: Option<f64>,
    pub subtree_bound: f64,
    pub fwd_scale: f64,
    /// Ranks are ETX sums, so with a scale of 1 every honest rank saturates
    /// and the component mostly reads "claims to be next to the root".
    pub rank_scale: f64,
    pub beacons_count_as_tx: bool,
    // routing
    pub hysteresis: f64,
    pub root_rank: f64,
    pub trust_switch_tau: f64,
    pub neighbor_timeout: f64,
    pub hop_limit: u32,
    // tickets and base station
    pub refractory_slots: u32,
    pub ant_hold_slots: u32,
    pub ant_ttl_slots: u32,
    pub theta_b: u32,
    pub theta_n: u32,
    pub admin_delay_slots: u32,
    // link and MAC
    pub link_loss: f64,
    /// Fixed delivery probability for every link, overriding the distance model.
    pub link_p: Option<f64>,
    pub service_time: f64,
    pub backoff_min: f64,
    pub backoff_max: f64,
    pub max_attempts: u32,
    pub queue_capacity: usize,
    pub beacon_min: f64,
    pub beacon_max: f64,
    // accounting
    pub measure_start: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            node_count: 25,
            area_side: None,
            tx_range: 50.0,
            traffic_period: 4.0,
            slot_seconds: 20.0,
            sim_duration: 14_400.0,
            seed: 1,
            attack_kind: AttackKind::None,
            attackers: 1,
            attacker_ids: Vec::new(),
            attacker_placement: AttackerPlacement::Relay,
            attack_start: None,
            hello_interval: 0.1,
            forged_per_slot: 4,
            defense: true,
            refractory: true,
            revocation: true,
            m: 200,
            sigma_sq: 0.35,
            gamma: 0.2,
            alpha: 0.75,
            k: 6.0,
            tau_max: 1e6,
            penalty_alpha: 0.3,
            warmup_slots: 3,
            tx_scale: None,
            subtree_bound: 5.0,
            fwd_scale: 4.0,
            rank_scale: 1.0,
            beacons_count_as_tx: false,
            hysteresis: 0.5,
            root_rank: 0.0,
            trust_switch_tau: 1.1,
            neighbor_timeout: 10.0,
            hop_limit: 64,
            refractory_slots: 2,
            ant_hold_slots: 10,
            ant_ttl_slots: 5,
            theta_b: 2,
            theta_n: 3,
            admin_delay_slots: 1,
            link_loss: 0.3,
            link_p: None,
            service_time: 0.008,
            backoff_min: 0.001,
            backoff_max: 0.016,
            max_attempts: 5,
            queue_capacity: 64,
            beacon_min: 0.512,
            beacon_max: 1.024,
            measure_start: 600.0,
        }
    }
}

/// Every recognised key, in the order `to_kv` writes them.
pub const KEYS: &[&str] = &[
    "node_count",
    "area_side",
    "tx_range",
    "traffic_period",
    "slot_seconds",
    "sim_duration",
    "seed",
    "attack_kind",
    "attackers",
    "attacker_ids",
    "attacker_placement",
    "attack_start",
    "hello_interval",
    "forged_per_slot",
    "defense",
    "refractory",
    "revocation",
    "m",
    "sigma_sq",
    "gamma",
    "alpha",
    "k",
    "tau_max",
    "penalty_alpha",
    "warmup_slots",
    "tx_scale",
    "subtree_bound",
    "fwd_scale",
    "rank_scale",
    "beacons_count_as_tx",
    "hysteresis",
    "root_rank",
    "trust_switch_tau",
    "neighbor_timeout",
    "hop_limit",
    "refractory_slots",
    "ant_hold_slots",
    "ant_ttl_slots",
    "theta_b",
    "theta_n",
    "admin_delay_slots",
    "link_loss",
    "link_p",
    "service_time",
    "backoff_min",
    "backoff_max",
    "max_attempts",
    "queue_capacity",
    "beacon_min",
    "beacon_max",
    "measure_start",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse::<T>()
        .map_err(|_| ConfigError::invalid(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::invalid(key, format!("expected a boolean, got `{value}`"))),
    }
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_ids(key: &str, value: &str) -> Result<Vec<NodeId>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num::<u32>(key, s).map(NodeId))
        .collect()
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ScenarioConfig {
    /// Parses a configuration file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines in order.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "node_count" => self.node_count = parse_num(key, value)?,
            "area_side" => self.area_side = parse_auto(key, value)?,
            "tx_range" => self.tx_range = parse_num(key, value)?,
            "traffic_period" => self.traffic_period = parse_num(key, value)?,
            "slot_seconds" => self.slot_seconds = parse_num(key, value)?,
            "sim_duration" => self.sim_duration = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "attack_kind" => self.attack_kind = value.parse()?,
            "attackers" => self.attackers = parse_num(key, value)?,
            "attacker_ids" => self.attacker_ids = parse_ids(key, value)?,
            "attacker_placement" => self.attacker_placement = value.parse()?,
            "attack_start" => self.attack_start = parse_auto(key, value)?,
            "hello_interval" => self.hello_interval = parse_num(key, value)?,
            "forged_per_slot" => self.forged_per_slot = parse_num(key, value)?,
            "defense" => self.defense = parse_bool(key, value)?,
            "refractory" => self.refractory = parse_bool(key, value)?,
            "revocation" => self.revocation = parse_bool(key, value)?,
            "m" => self.m = parse_num(key, value)?,
            "sigma_sq" => self.sigma_sq = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "tau_max" => self.tau_max = parse_num(key, value)?,
            "penalty_alpha" => self.penalty_alpha = parse_num(key, value)?,
            "warmup_slots" => self.warmup_slots = parse_num(key, value)?,
            "tx_scale" => self.tx_scale = parse_auto(key, value)?,
            "subtree_bound" => self.subtree_bound = parse_num(key, value)?,
            "fwd_scale" => self.fwd_scale = parse_num(key, value)?,
            "rank_scale" => self.rank_scale = parse_num(key, value)?,
            "beacons_count_as_tx" => self.beacons_count_as_tx = parse_bool(key, value)?,
            "hysteresis" => self.hysteresis = parse_num(key, value)?,
            "root_rank" => self.root_rank = parse_num(key, value)?,
            "trust_switch_tau" => self.trust_switch_tau = parse_num(key, value)?,
            "neighbor_timeout" => self.neighbor_timeout = parse_num(key, value)?,
            "hop_limit" => self.hop_limit = parse_num(key, value)?,
            "refractory_slots" => self.refractory_slots = parse_num(key, value)?,
            "ant_hold_slots" => self.ant_hold_slots = parse_num(key, value)?,
            "ant_ttl_slots" => self.ant_ttl_slots = parse_num(key, value)?,
            "theta_b" => self.theta_b = parse_num(key, value)?,
            "theta_n" => self.theta_n = parse_num(key, value)?,
            "admin_delay_slots" => self.admin_delay_slots = parse_num(key, value)?,
            "link_loss" => self.link_loss = parse_num(key, value)?,
            "link_p" => {
                self.link_p = if value.eq_ignore_ascii_case("none") || value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "service_time" => self.service_time = parse_num(key, value)?,
            "backoff_min" => self.backoff_min = parse_num(key, value)?,
            "backoff_max" => self.backoff_max = parse_num(key, value)?,
            "max_attempts" => self.max_attempts = parse_num(key, value)?,
            "queue_capacity" => self.queue_capacity = parse_num(key, value)?,
            "beacon_min" => self.beacon_min = parse_num(key, value)?,
            "beacon_max" => self.beacon_max = parse_num(key, value)?,
            "measure_start" => self.measure_start = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Current value of a key, formatted as `set` accepts it.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "node_count" => self.node_count.to_string(),
            "area_side" => show_auto(self.area_side),
            "tx_range" => self.tx_range.to_string(),
            "traffic_period" => self.traffic_period.to_string(),
            "slot_seconds" => self.slot_seconds.to_string(),
            "sim_duration" => self.sim_duration.to_string(),
            "seed" => self.seed.to_string(),
            "attack_kind" => self.attack_kind.to_string(),
            "attackers" => self.attackers.to_string(),
            "attacker_ids" => self
                .attacker_ids
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "attacker_placement" => self.attacker_placement.to_string(),
            "attack_start" => show_auto(self.attack_start),
            "hello_interval" => self.hello_interval.to_string(),
            "forged_per_slot" => self.forged_per_slot.to_string(),
            "defense" => self.defense.to_string(),
            "refractory" => self.refractory.to_string(),
            "revocation" => self.revocation.to_string(),
            "m" => self.m.to_string(),
            "sigma_sq" => self.sigma_sq.to_string(),
            "gamma" => self.gamma.to_string(),
            "alpha" => self.alpha.to_string(),
            "k" => self.k.to_string(),
            "tau_max" => self.tau_max.to_string(),
            "penalty_alpha" => self.penalty_alpha.to_string(),
            "warmup_slots" => self.warmup_slots.to_string(),
            "tx_scale" => show_auto(self.tx_scale),
            "subtree_bound" => self.subtree_bound.to_string(),
            "fwd_scale" => self.fwd_scale.to_string(),
            "rank_scale" => self.rank_scale.to_string(),
            "beacons_count_as_tx" => self.beacons_count_as_tx.to_string(),
            "hysteresis" => self.hysteresis.to_string(),
            "root_rank" => self.root_rank.to_string(),
            "trust_switch_tau" => self.trust_switch_tau.to_string(),
            "neighbor_timeout" => self.neighbor_timeout.to_string(),
            "hop_limit" => self.hop_limit.to_string(),
            "refractory_slots" => self.refractory_slots.to_string(),
            "ant_hold_slots" => self.ant_hold_slots.to_string(),
            "ant_ttl_slots" => self.ant_ttl_slots.to_string(),
            "theta_b" => self.theta_b.to_string(),
            "theta_n" => self.theta_n.to_string(),
            "admin_delay_slots" => self.admin_delay_slots.to_string(),
            "link_loss" => self.link_loss.to_string(),
            "link_p" => self.link_p.map_or_else(|| "none".to_string(), |p| p.to_string()),
            "service_time" => self.service_time.to_string(),
            "backoff_min" => self.backoff_min.to_string(),
            "backoff_max" => self.backoff_max.to_string(),
            "max_attempts" => self.max_attempts.to_string(),
            "queue_capacity" => self.queue_capacity.to_string(),
            "beacon_min" => self.beacon_min.to_string(),
            "beacon_max" => self.beacon_max.to_string(),
            "measure_start" => self.measure_start.to_string(),
            _ => return None,
        })
    }

    /// All settings as a config file that parses back to `self`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap());
        }
        out
    }

    pub fn effective_area_side(&self) -> f64 {
        self.area_side.unwrap_or(4.0 * self.node_count as f64)
    }

    pub fn effective_attack_start(&self) -> f64 {
        self.attack_start
            .unwrap_or(if self.node_count <= 25 { 1200.0 } else { 2400.0 })
    }

    pub fn effective_tx_scale(&self) -> f64 {
        self.tx_scale
            .unwrap_or(2.0 * (self.slot_seconds / self.traffic_period) * self.subtree_bound)
    }

    pub fn slot_count(&self) -> u32 {
        (self.sim_duration / self.slot_seconds).floor() as u32
    }

    pub fn trust_params(&self) -> TrustParams {
        TrustParams {
            k: self.k,
            alpha: self.alpha,
            tau_max: self.tau_max,
            alpha_ewma: self.penalty_alpha,
        }
    }

    pub fn detector_params(&self) -> DetectorParams {
        DetectorParams {
            gamma: self.gamma,
            warmup_slots: self.warmup_slots,
            trust: self.trust_params(),
        }
    }

    pub fn metric_scales(&self) -> Result<MetricScales, ConfigError> {
        MetricScales::new(self.effective_tx_scale(), self.fwd_scale, self.rank_scale)
            .map_err(|e| ConfigError::invalid("tx_scale/fwd_scale/rank_scale", e.to_string()))
    }

    pub fn routing_params(&self) -> RoutingParams {
        RoutingParams {
            root_rank: self.root_rank,
            hysteresis: self.hysteresis,
            trust_switch_tau: self.trust_switch_tau,
            neighbor_timeout: self.neighbor_timeout,
        }
    }

    pub fn ant_params(&self) -> AntParams {
        AntParams {
            refractory_slots: self.refractory_slots,
            hold_slots: self.ant_hold_slots,
            ttl_slots: self.ant_ttl_slots,
            trigger_tau: self.trust_switch_tau,
            refractory_enabled: self.refractory,
        }
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            theta_b: self.theta_b,
            theta_n: self.theta_n,
            admin_delay_slots: self.admin_delay_slots,
        }
    }

    pub fn overhearing_policy(&self) -> OverhearingPolicy {
        OverhearingPolicy {
            beacons_count_as_tx: self.beacons_count_as_tx,
        }
    }

    /// The attack plan, with attacker ids still to be drawn when none were given.
    pub fn attack_plan(&self, attacker_ids: Vec<NodeId>) -> AttackPlan {
        if self.attack_kind == AttackKind::None {
            return AttackPlan::none();
        }
        AttackPlan {
            kind: self.attack_kind,
            attacker_ids,
            start_time: self.effective_attack_start(),
            hello_interval: self.hello_interval,
            forged_per_slot: self.forged_per_slot,
        }
    }

    /// Field-level validation; the first problem found is reported.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be > 0, got {v}")))
            }
        }
        fn unit(key: &str, v: f64) -> Result<(), ConfigError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must lie in [0, 1], got {v}")))
            }
        }
        if self.node_count < 2 {
            return Err(ConfigError::invalid("node_count", "need at least 2 nodes"));
        }
        if let Some(side) = self.area_side {
            positive("area_side", side)?;
        }
        positive("tx_range", self.tx_range)?;
        positive("traffic_period", self.traffic_period)?;
        positive("slot_seconds", self.slot_seconds)?;
        positive("sim_duration", self.sim_duration)?;
        if let Some(t) = self.attack_start {
            if !(t.is_finite() && t >= 0.0) {
                return Err(ConfigError::invalid("attack_start", "must be >= 0"));
            }
        }
        positive("hello_interval", self.hello_interval)?;
        if self.attack_kind != AttackKind::None {
            if self.attacker_ids.is_empty() && self.attackers == 0 {
                return Err(ConfigError::invalid("attackers", "an attack needs at least one attacker"));
            }
            if self.attacker_ids.contains(&NodeId(0)) {
                return Err(ConfigError::invalid("attacker_ids", "node 0 is the root"));
            }
            if let Some(bad) = self.attacker_ids.iter().find(|n| n.index() >= self.node_count) {
                return Err(ConfigError::invalid("attacker_ids", format!("node {bad} does not exist")));
            }
        }
        if self.m == 0 {
            return Err(ConfigError::invalid("m", "must be >= 1"));
        }
        positive("sigma_sq", self.sigma_sq)?;
        unit("gamma", self.gamma)?;
        self.trust_params().validate()?;
        if let Some(s) = self.tx_scale {
            positive("tx_scale", s)?;
        }
        positive("subtree_bound", self.subtree_bound)?;
        positive("fwd_scale", self.fwd_scale)?;
        positive("rank_scale", self.rank_scale)?;
        if !(self.hysteresis.is_finite() && self.hysteresis >= 0.0) {
            return Err(ConfigError::invalid("hysteresis", "must be >= 0"));
        }
        if !(self.root_rank.is_finite() && self.root_rank >= 0.0) {
            return Err(ConfigError::invalid("root_rank", "must be >= 0"));
        }
        if !(self.trust_switch_tau >= 1.0) {
            return Err(ConfigError::invalid("trust_switch_tau", "must be >= 1"));
        }
        positive("neighbor_timeout", self.neighbor_timeout)?;
        if self.hop_limit == 0 {
            return Err(ConfigError::invalid("hop_limit", "must be >= 1"));
        }
        if self.theta_b == 0 {
            return Err(ConfigError::invalid("theta_b", "must be >= 1"));
        }
        if self.theta_n == 0 {
            return Err(ConfigError::invalid("theta_n", "must be >= 1"));
        }
        unit("link_loss", self.link_loss)?;
        if let Some(p) = self.link_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(ConfigError::invalid("link_p", "must lie in (0, 1]"));
            }
        }
        positive("service_time", self.service_time)?;
        positive("backoff_min", self.backoff_min)?;
        if !(self.backoff_max >= self.backoff_min) {
            return Err(ConfigError::invalid("backoff_max", "must be >= backoff_min"));
        }
        if self.max_attempts == 0 {
            return Err(ConfigError::invalid("max_attempts", "must be >= 1"));
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::invalid("queue_capacity", "must be >= 1"));
        }
        positive("beacon_min", self.beacon_min)?;
        if !(self.beacon_max >= self.beacon_min) {
            return Err(ConfigError::invalid("beacon_max", "must be >= beacon_min"));
        }
        if !(self.measure_start >= 0.0 && self.measure_start < self.sim_duration) {
            return Err(ConfigError::invalid("measure_start", "must lie in [0, sim_duration)"));
        }
        Ok(())
    }
}
