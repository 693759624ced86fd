//! Subjective trust and the trust-weighted link penalty.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Shape and smoothing parameters of the trust penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustParams {
    /// Sensitivity of the hyperbolic cosecant curve.
    pub k: f64,
    /// Detection threshold on the anomaly score.
    pub alpha: f64,
    /// Cap applied instead of the singularity at a score of one.
    pub tau_max: f64,
    /// Weight of the previous penalty in the moving average.
    pub alpha_ewma: f64,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            k: 6.0,
            alpha: 0.75,
            tau_max: 1e6,
            alpha_ewma: 0.3,
        }
    }
}

impl TrustParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(ConfigError::invalid("k", "must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError::invalid("alpha", "must lie in (0, 1)"));
        }
        if !(self.tau_max > 1.0) {
            return Err(ConfigError::invalid("tau_max", "must be > 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha_ewma) {
            return Err(ConfigError::invalid("penalty_alpha", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn csch(x: f64) -> f64 {
    1.0 / x.sinh()
}

/// Maps an anomaly score to the penalty multiplier a node applies to a neighbour.
///
/// `tau = csch(k (1 - eta)) - csch(k) + 1`, which is 1 at `eta = 0`, stays close
/// to 1 below the knee and grows without bound towards `eta = 1`. The result
/// is capped at `tau_max`.
pub fn subjective_trust(eta: f64, params: &TrustParams) -> f64 {
    let eta = eta.clamp(0.0, 1.0);
    let arg = params.k * (1.0 - eta);
    if arg <= 0.0 {
        return params.tau_max;
    }
    let tau = csch(arg) - csch(params.k) + 1.0;
    if tau.is_finite() {
        tau.min(params.tau_max)
    } else {
        params.tau_max
    }
}

/// True when the score crosses the detection threshold (strictly).
pub fn is_flagged(eta: f64, params: &TrustParams) -> bool {
    eta > params.alpha
}

/// Smoothed trust-weighted penalty of using one link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkPenaltyState {
    pub p_hat: f64,
    pub initialized: bool,
}

impl LinkPenaltyState {
    /// Penalty used for ranking; before the first update this is the plain ETX.
    pub fn value_or(&self, etx: f64) -> f64 {
        if self.initialized {
            self.p_hat
        } else {
            etx
        }
    }
}

/// One step of `p(t) = ALPHA p(t-1) + (1 - ALPHA) tau ETX`.
pub fn trust_weighted_penalty(
    state: LinkPenaltyState,
    tau: f64,
    etx: f64,
    params: &TrustParams,
) -> LinkPenaltyState {
    let sample = tau * etx;
    let p_hat = if state.initialized {
        params.alpha_ewma * state.p_hat + (1.0 - params.alpha_ewma) * sample
    } else {
        sample
    };
    LinkPenaltyState {
        p_hat,
        initialized: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trust_at_zero_is_exactly_one() {
        assert_eq!(subjective_trust(0.0, &TrustParams::default()), 1.0);
    }

    #[test]
    fn trust_at_default_threshold() {
        let tau = subjective_trust(0.75, &TrustParams::default());
        assert!((tau - 1.46468).abs() < 1e-4, "{tau}");
    }

    #[test]
    fn trust_singularity_is_capped() {
        let p = TrustParams::default();
        assert_eq!(subjective_trust(1.0, &p), p.tau_max);
        assert!(subjective_trust(1.0 - 1e-12, &p) <= p.tau_max);
    }

    #[test]
    fn knee_shape() {
        let p = TrustParams::default();
        assert!(subjective_trust(p.alpha, &p) < 1.5);
        assert!(subjective_trust(0.95, &p) > 3.0);
    }

    #[test]
    fn flag_threshold_is_strict() {
        let p = TrustParams::default();
        assert!(!is_flagged(0.5, &p));
        assert!(is_flagged(0.76, &p));
        assert!(!is_flagged(0.75, &p));
    }

    #[test]
    fn penalty_examples() {
        let p = TrustParams::default();
        let s = trust_weighted_penalty(LinkPenaltyState::default(), 1.0, 1.0, &p);
        assert_eq!(s.p_hat, 1.0);
        assert!(s.initialized);

        let s = LinkPenaltyState {
            p_hat: 2.0,
            initialized: true,
        };
        let next = trust_weighted_penalty(s, 1.0, 1.5, &p);
        assert!((next.p_hat - 1.65).abs() < 1e-12);

        let frozen = TrustParams {
            alpha_ewma: 1.0,
            ..p
        };
        assert_eq!(trust_weighted_penalty(s, 50.0, 7.0, &frozen), s);
    }

    #[test]
    fn validation() {
        assert!(TrustParams::default().validate().is_ok());
        let bad = TrustParams {
            alpha: 1.0,
            ..TrustParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn trust_is_monotone_and_at_least_one(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = TrustParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (tl, th) = (subjective_trust(lo, &p), subjective_trust(hi, &p));
            prop_assert!(tl >= 1.0);
            prop_assert!(tl <= th);
        }

        #[test]
        fn unit_trust_reproduces_plain_penalty(etx in proptest::collection::vec(1.0f64..8.0, 1..40)) {
            let p = TrustParams::default();
            let mut weighted = LinkPenaltyState::default();
            let mut plain: Option<f64> = None;
            for e in etx {
                weighted = trust_weighted_penalty(weighted, 1.0, e, &p);
                plain = Some(match plain {
                    None => e,
                    Some(prev) => p.alpha_ewma * prev + (1.0 - p.alpha_ewma) * e,
                });
                prop_assert_eq!(weighted.p_hat.to_bits(), plain.unwrap().to_bits());
            }
        }

        #[test]
        fn flagging_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = TrustParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(!is_flagged(lo, &p) || is_flagged(hi, &p));
        }
    }
}
