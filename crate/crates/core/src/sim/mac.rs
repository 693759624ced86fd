//! Link and medium-access model.
//!
//! Links follow a unit disk with a distance-dependent delivery probability.
//! A transmission attempt holds the channel for a fixed service time around
//! the sender, which serialises the neighbourhood the way carrier sensing
//! would. Failed unicasts back off and retry up to the attempt limit;
//! broadcasts are sent once.

use rand::Rng;

use crate::ants::{Ant, AntNotice};
use crate::overhearing::FrameClass;
use crate::NodeId;

/// Payload sizes in bytes, used for documentation of the overhead figures.
pub const DATA_BYTES: usize = 160;
pub const BEACON_BYTES: usize = 32;
pub const HELLO_BYTES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacParams {
    pub service_time: f64,
    pub backoff_min: f64,
    pub backoff_max: f64,
    pub max_attempts: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            service_time: 0.008,
            backoff_min: 0.001,
            backoff_max: 0.016,
            max_attempts: 5,
        }
    }
}

/// Delivery probability of one attempt over a link of length `distance`.
pub fn link_success_prob(distance: f64, range: f64, loss: f64, fixed: Option<f64>) -> f64 {
    if distance > range {
        return 0.0;
    }
    match fixed {
        Some(p) => p,
        None => 1.0 - loss * (distance / range).powi(2),
    }
}

/// Binary exponential backoff: uniform in `[min, min * 2^(attempt - 1)]`,
/// capped at `max`.
pub fn backoff<R: Rng>(attempt: u32, params: &MacParams, rng: &mut R) -> f64 {
    let hi = (params.backoff_min * 2f64.powi(attempt.saturating_sub(1) as i32)).min(params.backoff_max);
    if hi <= params.backoff_min {
        params.backoff_min
    } else {
        rng.random_range(params.backoff_min..=hi)
    }
}

/// Runs a unicast to completion in isolation. Returns attempts used and
/// whether the frame got through.
pub fn unicast_attempts<R: Rng>(p_link: f64, max_attempts: u32, rng: &mut R) -> (u32, bool) {
    for attempt in 1..=max_attempts {
        if rng.random::<f64>() < p_link {
            return (attempt, true);
        }
    }
    (max_attempts, false)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataPacket {
    pub id: u64,
    pub src: NodeId,
    pub created: f64,
    pub hops: u32,
    /// Rank the last sender advertised, for loop detection.
    pub sender_rank: f64,
    /// Set after the first rank inconsistency; a second one drops the packet.
    pub rank_error: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Payload {
    Data(DataPacket),
    Beacon { rank: f64 },
    Hello,
    Ant(Ant),
    Notice(AntNotice),
}

impl Payload {
    pub fn class(&self) -> FrameClass {
        match self {
            Payload::Data(_) => FrameClass::Data,
            Payload::Beacon { rank } => FrameClass::Beacon { rank: *rank },
            Payload::Hello => FrameClass::Hello,
            Payload::Ant(_) => FrameClass::Ant,
            Payload::Notice(_) => FrameClass::AntNotice,
        }
    }

    /// Unicast frames travel to the parent chosen when they first go on air.
    pub fn is_upward(&self) -> bool {
        matches!(self, Payload::Data(_) | Payload::Ant(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub payload: Payload,
    /// Unicast destination; `None` for broadcasts and for upward frames not yet sent.
    pub dest: Option<NodeId>,
    pub attempts: u32,
}

impl Frame {
    pub fn new(payload: Payload) -> Self {
        Frame {
            payload,
            dest: None,
            attempts: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_link_needs_one_attempt() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(unicast_attempts(1.0, 5, &mut rng), (1, true));
    }

    #[test]
    fn mean_attempts_match_truncated_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = 0.8;
        let trials = 10_000;
        let total: u32 = (0..trials).map(|_| unicast_attempts(p, 5, &mut rng).0).sum();
        let mean = total as f64 / trials as f64;
        // Truncated geometric: sum of (1-p)^k for k < 5.
        let oracle: f64 = (0..5).map(|k| (1.0 - p).powi(k)).sum();
        assert!((mean - oracle).abs() <= 0.03, "{mean} vs {oracle}");
        assert!((oracle - 1.25).abs() < 0.001);
    }

    #[test]
    fn link_probability_shape() {
        assert_eq!(link_success_prob(0.0, 50.0, 0.3, None), 1.0);
        assert!((link_success_prob(50.0, 50.0, 0.3, None) - 0.7).abs() < 1e-12);
        assert_eq!(link_success_prob(60.0, 50.0, 0.3, None), 0.0);
        assert_eq!(link_success_prob(10.0, 50.0, 0.3, Some(0.9)), 0.9);
    }

    #[test]
    fn backoff_stays_in_window() {
        let p = MacParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for attempt in 1..8 {
            for _ in 0..100 {
                let b = backoff(attempt, &p, &mut rng);
                assert!(b >= p.backoff_min && b <= p.backoff_max);
            }
        }
        assert_eq!(backoff(1, &p, &mut rng), p.backoff_min);
    }
}
