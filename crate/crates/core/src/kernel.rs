//! Random Fourier feature approximation of the RBF kernel and the expected
//! similarity estimator built on top of it.
//!
//! A [`RandomFeatureMap`] turns a normalised three-component metric vector
//! into `2m` reals whose inner products approximate
//! `exp(-|x - y|^2 / (2 sigma^2))`. The [`KeaVector`] is an exponentially
//! weighted mean of past feature vectors, so the similarity of a new sample
//! against the whole history is a single inner product.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::KernelError;

/// Number of overheard metrics per neighbour and slot.
pub const METRIC_DIM: usize = 3;

/// Overheard behaviour of one neighbour during one slot.
///
/// Component order is fixed: transmissions, receive/transmit ratio, average rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub tx_count: f64,
    pub fwd_ratio: f64,
    pub rank_avg: f64,
}

impl MetricVector {
    pub const ZERO: MetricVector = MetricVector {
        tx_count: 0.0,
        fwd_ratio: 0.0,
        rank_avg: 0.0,
    };

    pub fn new(tx_count: f64, fwd_ratio: f64, rank_avg: f64) -> Self {
        MetricVector {
            tx_count,
            fwd_ratio,
            rank_avg,
        }
    }

    pub fn to_array(self) -> [f64; METRIC_DIM] {
        [self.tx_count, self.fwd_ratio, self.rank_avg]
    }

    pub fn from_array(a: [f64; METRIC_DIM]) -> Self {
        MetricVector::new(a[0], a[1], a[2])
    }
}

/// Per-component reference scales used to bring raw counts onto a unit range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScales {
    pub tx: f64,
    pub fwd_ratio: f64,
    pub rank: f64,
}

impl MetricScales {
    pub fn new(tx: f64, fwd_ratio: f64, rank: f64) -> Result<Self, KernelError> {
        for (index, value) in [tx, fwd_ratio, rank].into_iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(KernelError::InvalidScale { index, value });
            }
        }
        Ok(MetricScales { tx, fwd_ratio, rank })
    }

    fn to_array(self) -> [f64; METRIC_DIM] {
        [self.tx, self.fwd_ratio, self.rank]
    }
}

/// Scales each raw component by its reference and clamps to `[0, 1]`.
///
/// A non-finite component rejects the whole slot sample.
pub fn normalize_metrics(
    raw: &MetricVector,
    scales: &MetricScales,
) -> Result<MetricVector, KernelError> {
    let raw = raw.to_array();
    let scales = scales.to_array();
    let mut out = [0.0; METRIC_DIM];
    for i in 0..METRIC_DIM {
        if !raw[i].is_finite() {
            return Err(KernelError::NonFiniteMetric {
                index: i,
                value: raw[i],
            });
        }
        out[i] = (raw[i] / scales[i]).clamp(0.0, 1.0);
    }
    Ok(MetricVector::from_array(out))
}

/// Gaussian projection drawn once per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFeatureMap {
    rows: Vec<[f64; METRIC_DIM]>,
    sigma_sq: f64,
    seed: u64,
}

impl RandomFeatureMap {
    /// Draws an `m x 3` matrix with i.i.d. `N(0, 1/sigma_sq)` entries.
    pub fn new(samples: usize, sigma_sq: f64, seed: u64) -> Result<Self, KernelError> {
        if samples == 0 {
            return Err(KernelError::EmptyFeatureMap);
        }
        if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
            return Err(KernelError::InvalidBandwidth(sigma_sq));
        }
        let normal = Normal::new(0.0, 1.0 / sigma_sq.sqrt())
            .map_err(|_| KernelError::InvalidBandwidth(sigma_sq))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..samples)
            .map(|_| {
                [
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                ]
            })
            .collect();
        Ok(RandomFeatureMap {
            rows,
            sigma_sq,
            seed,
        })
    }

    pub fn samples(&self) -> usize {
        self.rows.len()
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Length of the feature vectors this map produces (`2m`).
    pub fn feature_len(&self) -> usize {
        2 * self.rows.len()
    }

    /// Maps a metric vector to interleaved `(cos, sin)` pairs scaled by `1/sqrt(m)`.
    pub fn map_features(&self, v: &MetricVector) -> FeatureVector {
        let v = v.to_array();
        let scale = 1.0 / (self.rows.len() as f64).sqrt();
        let mut data = Vec::with_capacity(self.feature_len());
        for z in &self.rows {
            let phase = z[0] * v[0] + z[1] * v[1] + z[2] * v[2];
            let (s, c) = phase.sin_cos();
            data.push(scale * c);
            data.push(scale * s);
        }
        FeatureVector { data }
    }
}

/// Approximate kernel embedding of a single sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    data: Vec<f64>,
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exponentially weighted mean of past feature vectors for one neighbour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeaVector {
    data: Vec<f64>,
    initialized: bool,
}

impl KeaVector {
    pub fn new(len: usize) -> Self {
        KeaVector {
            data: vec![0.0; len],
            initialized: false,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Folds the feature vector of the slot just scored into the mean.
    ///
    /// The first call initialises the vector to `features` regardless of the
    /// gate. Afterwards a closed gate leaves the vector untouched.
    pub fn update(
        &mut self,
        features: &FeatureVector,
        gamma: f64,
        gate_open: bool,
    ) -> Result<(), KernelError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(KernelError::InvalidDecay(gamma));
        }
        if features.len() != self.data.len() {
            return Err(KernelError::DimensionMismatch {
                expected: self.data.len(),
                actual: features.len(),
            });
        }
        if !self.initialized {
            self.data.copy_from_slice(features.as_slice());
            self.initialized = true;
            return Ok(());
        }
        if gate_open {
            for (mu, f) in self.data.iter_mut().zip(features.as_slice()) {
                *mu = gamma * f + (1.0 - gamma) * *mu;
            }
        }
        Ok(())
    }
}

/// Inner product of a sample's features with the KEA vector.
pub fn expected_similarity(features: &FeatureVector, mu: &KeaVector) -> Result<f64, KernelError> {
    if !mu.initialized {
        return Err(KernelError::NoHistory);
    }
    if features.len() != mu.data.len() {
        return Err(KernelError::DimensionMismatch {
            expected: mu.data.len(),
            actual: features.len(),
        });
    }
    Ok(dot(features.as_slice(), &mu.data))
}

/// Anomaly score consumed by trust and gating: 0 for an unchanged neighbour,
/// 1 for a completely dissimilar one.
pub fn anomaly_score(similarity: f64) -> f64 {
    1.0 - similarity.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn rbf(x: &MetricVector, y: &MetricVector, sigma_sq: f64) -> f64 {
        let d2: f64 = x
            .to_array()
            .iter()
            .zip(y.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (-d2 / (2.0 * sigma_sq)).exp()
    }

    fn random_unit(rng: &mut impl Rng) -> MetricVector {
        MetricVector::new(rng.random(), rng.random(), rng.random())
    }

    #[test]
    fn normalize_zero_and_half() {
        let scales = MetricScales::new(20.0, 2.0, 512.0).unwrap();
        assert_eq!(
            normalize_metrics(&MetricVector::ZERO, &scales).unwrap(),
            MetricVector::ZERO
        );
        let v = normalize_metrics(&MetricVector::new(10.0, 1.0, 256.0), &scales).unwrap();
        assert_eq!(v, MetricVector::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn normalize_clamps_at_one() {
        let scales = MetricScales::new(20.0, 2.0, 512.0).unwrap();
        let v = normalize_metrics(&MetricVector::new(100.0, 1.0, 256.0), &scales).unwrap();
        assert_eq!(v, MetricVector::new(1.0, 0.5, 0.5));
    }

    #[test]
    fn normalize_rejects_non_finite() {
        let scales = MetricScales::new(20.0, 2.0, 512.0).unwrap();
        let err = normalize_metrics(&MetricVector::new(1.0, f64::NAN, 1.0), &scales).unwrap_err();
        assert!(matches!(err, KernelError::NonFiniteMetric { index: 1, .. }));
        assert!(MetricScales::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_vector_maps_to_cos_one() {
        let map = RandomFeatureMap::new(8, 0.35, 1).unwrap();
        let f = map.map_features(&MetricVector::ZERO);
        let s = 1.0 / 8f64.sqrt();
        for pair in f.as_slice().chunks(2) {
            assert_eq!(pair[0], s);
            assert_eq!(pair[1], 0.0);
        }
    }

    #[test]
    fn map_construction_errors() {
        assert_eq!(
            RandomFeatureMap::new(0, 0.35, 1).unwrap_err(),
            KernelError::EmptyFeatureMap
        );
        assert!(RandomFeatureMap::new(4, 0.0, 1).is_err());
        assert_eq!(
            RandomFeatureMap::new(4, 0.35, 9).unwrap(),
            RandomFeatureMap::new(4, 0.35, 9).unwrap()
        );
    }

    #[test]
    fn kernel_fidelity_against_closed_form() {
        let map = RandomFeatureMap::new(200, 0.35, 0xfeed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let x = random_unit(&mut rng);
            let y = random_unit(&mut rng);
            let approx = map.map_features(&x).dot(&map.map_features(&y));
            let err = (approx - rbf(&x, &y, 0.35)).abs();
            total += err;
            worst = worst.max(err);
        }
        assert!(worst <= 0.2, "max error {worst}");
        assert!(total / 200.0 <= 0.08, "mean error {}", total / 200.0);
    }

    #[test]
    fn similarity_is_shift_invariant() {
        let map = RandomFeatureMap::new(200, 0.35, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = random_unit(&mut rng);
            let y = random_unit(&mut rng);
            let shift: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let xs = MetricVector::new(x.tx_count + shift[0], x.fwd_ratio + shift[1], x.rank_avg + shift[2]);
            let ys = MetricVector::new(y.tx_count + shift[0], y.fwd_ratio + shift[1], y.rank_avg + shift[2]);
            let a = map.map_features(&x).dot(&map.map_features(&y));
            let b = map.map_features(&xs).dot(&map.map_features(&ys));
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn self_similarity_and_orthogonality() {
        let map = RandomFeatureMap::new(200, 0.35, 2).unwrap();
        let f = map.map_features(&MetricVector::new(0.3, 0.7, 0.1));
        let mut mu = KeaVector::new(f.len());
        assert_eq!(expected_similarity(&f, &mu), Err(KernelError::NoHistory));
        mu.update(&f, 0.2, false).unwrap();
        assert!((expected_similarity(&f, &mu).unwrap() - 1.0).abs() < 1e-12);

        let zero = KeaVector {
            data: vec![0.0; f.len()],
            initialized: true,
        };
        assert_eq!(expected_similarity(&f, &zero).unwrap(), 0.0);
    }

    #[test]
    fn similarity_matches_kernel_mean_oracle() {
        let map = RandomFeatureMap::new(200, 0.35, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let centre = random_unit(&mut rng);
            let history: Vec<MetricVector> = (0..10)
                .map(|_| {
                    MetricVector::new(
                        centre.tx_count + 0.1 * (rng.random::<f64>() - 0.5),
                        centre.fwd_ratio + 0.1 * (rng.random::<f64>() - 0.5),
                        centre.rank_avg + 0.1 * (rng.random::<f64>() - 0.5),
                    )
                })
                .collect();
            // Decay 1/k after k samples reproduces the plain arithmetic mean.
            let mut mu = KeaVector::new(map.feature_len());
            for (k, h) in history.iter().enumerate() {
                mu.update(&map.map_features(h), 1.0 / (k as f64 + 1.0), true)
                    .unwrap();
            }
            let oracle: f64 =
                history.iter().map(|h| rbf(&centre, h, 0.35)).sum::<f64>() / history.len() as f64;
            let approx = expected_similarity(&map.map_features(&centre), &mu).unwrap();
            assert!((approx - oracle).abs() <= 0.2, "{approx} vs {oracle}");
        }
    }

    #[test]
    fn anomaly_score_examples() {
        assert_eq!(anomaly_score(1.0), 0.0);
        assert_eq!(anomaly_score(0.0), 1.0);
        assert_eq!(anomaly_score(-0.05), 1.0);
        assert_eq!(anomaly_score(1.3), 0.0);
    }

    #[test]
    fn update_degenerate_decays() {
        let map = RandomFeatureMap::new(16, 0.35, 4).unwrap();
        let a = map.map_features(&MetricVector::new(0.1, 0.2, 0.3));
        let b = map.map_features(&MetricVector::new(0.9, 0.1, 0.5));

        let mut mu = KeaVector::new(a.len());
        mu.update(&a, 0.5, true).unwrap();
        let before = mu.clone();
        mu.update(&b, 0.0, true).unwrap();
        assert_eq!(mu, before);
        mu.update(&b, 1.0, true).unwrap();
        assert_eq!(mu.as_slice(), b.as_slice());
        assert_eq!(mu.update(&b, 1.5, true), Err(KernelError::InvalidDecay(1.5)));
    }

    #[test]
    fn bootstrap_ignores_closed_gate() {
        let map = RandomFeatureMap::new(16, 0.35, 4).unwrap();
        let a = map.map_features(&MetricVector::new(0.1, 0.2, 0.3));
        let mut mu = KeaVector::new(a.len());
        mu.update(&a, 0.2, false).unwrap();
        assert!(mu.is_initialized());
        assert_eq!(mu.as_slice(), a.as_slice());
    }

    #[test]
    fn update_matches_unrolled_recurrence() {
        let map = RandomFeatureMap::new(50, 0.35, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gamma = 0.2;
        let mu0 = map.map_features(&random_unit(&mut rng));
        let feats: Vec<FeatureVector> = (0..5)
            .map(|_| map.map_features(&random_unit(&mut rng)))
            .collect();
        let mut mu = KeaVector::new(mu0.len());
        mu.update(&mu0, gamma, true).unwrap();
        for f in &feats {
            mu.update(f, gamma, true).unwrap();
        }
        // gamma * sum_k (1-gamma)^k phi_{5-k} + (1-gamma)^5 mu_0
        let n = feats.len();
        for i in 0..mu0.len() {
            let mut expected = (1.0 - gamma).powi(n as i32) * mu0.as_slice()[i];
            for (k, f) in feats.iter().rev().enumerate() {
                expected += gamma * (1.0 - gamma).powi(k as i32) * f.as_slice()[i];
            }
            assert!((mu.as_slice()[i] - expected).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn feature_norm_is_one(t in 0.0f64..1.0, r in 0.0f64..1.0, k in 0.0f64..1.0, seed in any::<u64>()) {
            let map = RandomFeatureMap::new(64, 0.35, seed).unwrap();
            let f = map.map_features(&MetricVector::new(t, r, k));
            prop_assert!((f.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn kea_norm_stays_bounded(points in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, any::<bool>()), 1..30), gamma in 0.0f64..=1.0) {
            let map = RandomFeatureMap::new(32, 0.35, 21).unwrap();
            let mut mu = KeaVector::new(map.feature_len());
            for (a, b, c, gate) in points {
                mu.update(&map.map_features(&MetricVector::new(a, b, c)), gamma, gate).unwrap();
                prop_assert!(mu.norm() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn closed_gate_freezes_kea(points in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..20)) {
            let map = RandomFeatureMap::new(32, 0.35, 5).unwrap();
            let mut mu = KeaVector::new(map.feature_len());
            mu.update(&map.map_features(&MetricVector::new(0.5, 0.5, 0.5)), 0.2, true).unwrap();
            let frozen = mu.clone();
            for (a, b, c) in points {
                mu.update(&map.map_features(&MetricVector::new(a, b, c)), 0.2, false).unwrap();
            }
            prop_assert_eq!(mu, frozen);
        }

        #[test]
        fn anomaly_score_in_unit_interval(s in -10.0f64..10.0) {
            let eta = anomaly_score(s);
            prop_assert!((0.0..=1.0).contains(&eta));
        }
    }
}
