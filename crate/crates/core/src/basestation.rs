//! Ticket ingestion and per-slot filtering at the root.
//!
//! Per suspect, with `D` distinct reporters and `M` the largest count from a
//! single reporter in the slot:
//!
//! * `D > theta_b` is a genuine attack,
//! * `D < theta_b` and `M >= theta_n` is a compromised ticket stream whose
//!   culprit is the most prolific reporter,
//! * anything else, including `D == theta_b`, is a false positive.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ants::AntRecord;
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Distinct-reporter threshold.
    pub theta_b: u32,
    /// Per-reporter count threshold.
    pub theta_n: u32,
    /// Slots between a revoking verdict and the revocation itself.
    pub admin_delay_slots: u32,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            theta_b: 2,
            theta_n: 3,
            admin_delay_slots: 1,
        }
    }
}

/// Tickets delivered during one slot, by (suspect, reporter).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AntMatrix {
    counts: BTreeMap<(NodeId, NodeId), u32>,
}

impl AntMatrix {
    pub fn new() -> Self {
        AntMatrix::default()
    }

    pub fn ingest(&mut self, suspect: NodeId, reporter: NodeId) {
        *self.counts.entry((suspect, reporter)).or_insert(0) += 1;
    }

    pub fn count(&self, suspect: NodeId, reporter: NodeId) -> u32 {
        self.counts.get(&(suspect, reporter)).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn suspects(&self) -> BTreeSet<NodeId> {
        self.counts.keys().map(|&(s, _)| s).collect()
    }

    fn reports_on(&self, suspect: NodeId) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.counts
            .range((suspect, NodeId(0))..=(suspect, NodeId(u32::MAX)))
            .filter(|(_, &c)| c > 0)
            .map(|(&(_, r), &c)| (r, c))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum VerdictClass {
    GenuineAttack,
    CompromisedAnt { culprit: NodeId },
    FalsePositive,
}

impl VerdictClass {
    pub fn code(&self) -> &'static str {
        match self {
            VerdictClass::GenuineAttack => "GA",
            VerdictClass::CompromisedAnt { .. } => "CA",
            VerdictClass::FalsePositive => "FP",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub suspect: NodeId,
    pub class: VerdictClass,
}

/// Classifies every suspect that has at least one report. Verdicts come out
/// sorted by suspect id.
pub fn filter(matrix: &AntMatrix, theta_b: u32, theta_n: u32) -> Vec<FilterVerdict> {
    matrix
        .suspects()
        .into_iter()
        .filter_map(|suspect| {
            let mut distinct = 0u32;
            // Highest count, lowest reporter id on ties.
            let mut top: Option<(NodeId, u32)> = None;
            for (reporter, c) in matrix.reports_on(suspect) {
                distinct += 1;
                if top.is_none_or(|(_, m)| c > m) {
                    top = Some((reporter, c));
                }
            }
            let (culprit, max_count) = top?;
            let class = if distinct > theta_b {
                VerdictClass::GenuineAttack
            } else if distinct < theta_b && max_count >= theta_n {
                VerdictClass::CompromisedAnt { culprit }
            } else {
                VerdictClass::FalsePositive
            };
            Some(FilterVerdict { suspect, class })
        })
        .collect()
}

/// Administrative consequence of a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdminAction {
    Revoke { node: NodeId, effective_slot: u32 },
    NoAction,
}

pub fn act_on_verdict(verdict: &FilterVerdict, slot: u32, params: &FilterParams) -> AdminAction {
    let effective_slot = slot + params.admin_delay_slots;
    match verdict.class {
        VerdictClass::GenuineAttack => AdminAction::Revoke {
            node: verdict.suspect,
            effective_slot,
        },
        VerdictClass::CompromisedAnt { culprit } => AdminAction::Revoke {
            node: culprit,
            effective_slot,
        },
        VerdictClass::FalsePositive => AdminAction::NoAction,
    }
}

/// Root-side state: the current slot's matrix and the revocation ledger.
#[derive(Clone, Debug, Default)]
pub struct BaseStation {
    params: FilterParams,
    matrix: AntMatrix,
    revoked: BTreeSet<NodeId>,
}

impl BaseStation {
    pub fn new(params: FilterParams) -> Self {
        BaseStation {
            params,
            ..BaseStation::default()
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn ingest(&mut self, record: &AntRecord) {
        self.matrix.ingest(record.suspect, record.reporter);
    }

    pub fn matrix(&self) -> &AntMatrix {
        &self.matrix
    }

    /// Filters the finished slot, resets the matrix and returns the verdicts
    /// with their actions. A node is revoked at most once.
    pub fn close_slot(&mut self, slot: u32) -> Vec<(FilterVerdict, AdminAction)> {
        let matrix = std::mem::take(&mut self.matrix);
        filter(&matrix, self.params.theta_b, self.params.theta_n)
            .into_iter()
            .map(|v| {
                let mut action = act_on_verdict(&v, slot, &self.params);
                if let AdminAction::Revoke { node, .. } = action {
                    if !self.revoked.insert(node) {
                        action = AdminAction::NoAction;
                    }
                }
                (v, action)
            })
            .collect()
    }

    pub fn is_revoked(&self, node: NodeId) -> bool {
        self.revoked.contains(&node)
    }

    /// Manual re-approval of a revoked node.
    pub fn reapprove(&mut self, node: NodeId) -> bool {
        self.revoked.remove(&node)
    }
}
