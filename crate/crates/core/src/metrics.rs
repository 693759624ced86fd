//! Evaluation metrics recomputed from a run log.
//!
//! Everything here reads only the log, so a stored log reproduces its summary
//! bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::runlog::{Record, RunLog, RunMeta};
use crate::NodeId;

/// Half-open time interval `[start, end)` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Window { start, end }
    }

    /// Steady state up to one slot before the end, so that packets still in
    /// flight when the run stops are not counted as lost.
    pub fn default_for(meta: &RunMeta) -> Self {
        Window {
            start: meta.measure_start,
            end: meta.sim_duration - meta.slot_seconds,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn is_empty(&self) -> bool {
        !(self.end > self.start)
    }

    /// Whether slot `s` lies entirely inside the window.
    fn covers_slot(&self, s: u32, slot_seconds: f64) -> bool {
        let a = s as f64 * slot_seconds;
        a >= self.start && a + slot_seconds <= self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `1 - delivered / sent` over packets created in the window.
    pub data_loss: f64,
    /// Mean end-to-end delay of the delivered packets, seconds.
    pub avg_delay: f64,
    /// Defence messages as a percentage of all messages in the window.
    pub overhead_pct: f64,
    /// None when the run has no attacker.
    pub tp_rate: Option<f64>,
    pub fp_rate: f64,
    /// Mean over detected attackers of slots from onset to the first ticket
    /// naming them reaching the root.
    pub detect_latency_slots: Option<f64>,
    pub latency_per_attacker: Vec<Option<f64>>,
    pub sent: u64,
    pub delivered: u64,
    pub defense_msgs: u64,
    pub total_msgs: u64,
}

/// Loss over the default window.
pub fn summarize_default(log: &RunLog) -> Result<RunSummary, Error> {
    let meta = require_meta(log)?;
    summarize(log, Window::default_for(meta))
}

pub(crate) fn require_meta(log: &RunLog) -> Result<&RunMeta, Error> {
    log.meta().ok_or_else(|| Error::Log {
        line: 1,
        reason: "run log has no meta record".into(),
    })
}

pub fn summarize(log: &RunLog, window: Window) -> Result<RunSummary, Error> {
    let meta = require_meta(log)?;
    if window.is_empty() {
        return Err(Error::EmptyWindow {
            start: window.start,
            end: window.end,
        });
    }
    let slot = meta.slot_seconds;
    let attackers: BTreeSet<NodeId> = meta.attackers.iter().copied().collect();

    let mut sent_at: BTreeMap<u64, f64> = BTreeMap::new();
    let mut delivered = 0u64;
    let mut delay_sum = 0.0;
    let mut defense = 0u64;
    let mut total = 0u64;
    let mut fp_flags: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut assessed: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut revoked_at: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut flags_on_attacker: Vec<(u32, NodeId, NodeId)> = Vec::new();
    let mut deliveries: Vec<(f64, NodeId)> = Vec::new();

    for r in &log.records {
        match *r {
            Record::Sent { id, time, .. } if window.contains(time) => {
                sent_at.insert(id, time);
            }
            Record::Delivered { id, time, .. } => {
                if let Some(t0) = sent_at.get(&id) {
                    delivered += 1;
                    delay_sum += time - t0;
                }
            }
            Record::SlotStats {
                slot: s,
                data,
                beacon,
                hello,
                ant,
                notice,
                spawn,
            } if window.covers_slot(s, slot) => {
                let d = (ant + notice + spawn) as u64;
                defense += d;
                total += (data + beacon + hello) as u64 + d;
            }
            Record::Flag {
                slot: s,
                observer,
                suspect,
                ..
            } => {
                if attackers.contains(&suspect) {
                    flags_on_attacker.push((s, observer, suspect));
                } else if !attackers.contains(&observer) && window.covers_slot(s, slot) {
                    *fp_flags.entry(observer).or_insert(0) += 1;
                }
            }
            Record::Assessed {
                slot: s,
                observer,
                honest,
            } if window.covers_slot(s, slot) && !attackers.contains(&observer) => {
                *assessed.entry(observer).or_insert(0) += honest as u64;
            }
            Record::Revoked { time, node } => {
                revoked_at.entry(node).or_insert(time);
            }
            Record::AntDelivered { time, suspect, .. } => deliveries.push((time, suspect)),
            _ => {}
        }
    }

    let sent = sent_at.len() as u64;
    let data_loss = if sent == 0 {
        0.0
    } else {
        1.0 - delivered as f64 / sent as f64
    };
    let avg_delay = if delivered == 0 {
        0.0
    } else {
        delay_sum / delivered as f64
    };
    let overhead_pct = if total == 0 {
        0.0
    } else {
        100.0 * defense as f64 / total as f64
    };

    let per_observer: Vec<f64> = assessed
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(o, &n)| fp_flags.get(o).copied().unwrap_or(0) as f64 / n as f64)
        .collect();
    let fp_rate = if per_observer.is_empty() {
        0.0
    } else {
        (per_observer.iter().sum::<f64>() / per_observer.len() as f64).min(1.0)
    };

    let (tp_rate, latency_per_attacker) = match meta.attack_start {
        Some(onset) if !meta.attackers.is_empty() => {
            let mut hits = 0u64;
            let mut pairs = 0u64;
            let mut latency = Vec::with_capacity(meta.attackers.len());
            for (a, neighbors) in meta.attackers.iter().zip(&meta.attacker_neighbors) {
                let active_until = revoked_at.get(a).copied().unwrap_or(meta.sim_duration);
                let from = onset.max(window.start);
                let until = active_until.min(window.end);
                // Slots overlapping the active period.
                let detected: BTreeSet<NodeId> = flags_on_attacker
                    .iter()
                    .filter(|(s, _, suspect)| {
                        let t = *s as f64 * slot;
                        suspect == a && t + slot > from && t < until
                    })
                    .map(|&(_, o, _)| o)
                    .collect();
                pairs += neighbors.len() as u64;
                hits += neighbors.iter().filter(|n| detected.contains(n)).count() as u64;
                latency.push(
                    deliveries
                        .iter()
                        .find(|(t, s)| s == a && *t >= onset)
                        .map(|(t, _)| (t - onset) / slot),
                );
            }
            let tp = if pairs == 0 {
                0.0
            } else {
                hits as f64 / pairs as f64
            };
            (Some(tp), latency)
        }
        _ => (None, Vec::new()),
    };
    let detected: Vec<f64> = latency_per_attacker.iter().flatten().copied().collect();
    let detect_latency_slots = if detected.is_empty() {
        None
    } else {
        Some(detected.iter().sum::<f64>() / detected.len() as f64)
    };

    Ok(RunSummary {
        data_loss,
        avg_delay,
        overhead_pct,
        tp_rate,
        fp_rate,
        detect_latency_slots,
        latency_per_attacker,
        sent,
        delivered,
        defense_msgs: defense,
        total_msgs: total,
    })
}
