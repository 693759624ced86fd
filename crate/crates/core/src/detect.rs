//! Per-neighbour scoring pipeline: normalise, map, score, gate, update.

use serde::{Deserialize, Serialize};

use crate::error::KernelError;
use crate::kernel::{
    anomaly_score, expected_similarity, normalize_metrics, KeaVector, MetricScales, MetricVector,
    RandomFeatureMap,
};
use crate::trust::{is_flagged, subjective_trust, TrustParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub gamma: f64,
    /// Slots per neighbour during which the KEA vector always adapts and no flag is raised.
    pub warmup_slots: u32,
    pub trust: TrustParams,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            gamma: 0.2,
            warmup_slots: 3,
            trust: TrustParams::default(),
        }
    }
}

/// Outcome of scoring one neighbour for one slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    /// `None` on the bootstrap slot.
    pub similarity: Option<f64>,
    pub eta: f64,
    pub tau: f64,
    pub flagged: bool,
    pub gate_open: bool,
    pub in_refractory: bool,
}

/// Trust state a node keeps for one neighbour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborDetector {
    kea: KeaVector,
    scored_slots: u32,
    last: Option<Assessment>,
}

impl NeighborDetector {
    pub fn new(feature_len: usize) -> Self {
        NeighborDetector {
            kea: KeaVector::new(feature_len),
            scored_slots: 0,
            last: None,
        }
    }

    pub fn kea(&self) -> &KeaVector {
        &self.kea
    }

    pub fn scored_slots(&self) -> u32 {
        self.scored_slots
    }

    pub fn last(&self) -> Option<&Assessment> {
        self.last.as_ref()
    }

    /// Trust multiplier from the latest assessment (1 before any).
    pub fn tau(&self) -> f64 {
        self.last.map_or(1.0, |a| a.tau)
    }

    /// Scores one slot of raw metrics and updates the KEA vector.
    ///
    /// While `in_refractory` the neighbour is never flagged, its trust stays
    /// at 1 and the KEA vector keeps adapting to the new behaviour.
    pub fn assess(
        &mut self,
        raw: &MetricVector,
        scales: &MetricScales,
        map: &RandomFeatureMap,
        params: &DetectorParams,
        in_refractory: bool,
    ) -> Result<Assessment, KernelError> {
        let v = normalize_metrics(raw, scales)?;
        let features = map.map_features(&v);
        let assessment = if !self.kea.is_initialized() {
            self.kea.update(&features, params.gamma, true)?;
            Assessment {
                similarity: None,
                eta: 0.0,
                tau: 1.0,
                flagged: false,
                gate_open: true,
                in_refractory,
            }
        } else {
            let similarity = expected_similarity(&features, &self.kea)?;
            let eta = anomaly_score(similarity);
            let warming = self.scored_slots < params.warmup_slots;
            let over = is_flagged(eta, &params.trust);
            let flagged = over && !warming && !in_refractory;
            let gate_open = warming || in_refractory || !over;
            self.kea.update(&features, params.gamma, gate_open)?;
            let tau = if in_refractory || warming {
                1.0
            } else {
                subjective_trust(eta, &params.trust)
            };
            Assessment {
                similarity: Some(similarity),
                eta,
                tau,
                flagged,
                gate_open,
                in_refractory,
            }
        };
        self.scored_slots += 1;
        self.last = Some(assessment);
        Ok(assessment)
    }
}
