use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Correspondence, MatchError, MatchSet, MatchView, Matcher};
use crate::observation::LandmarkObs;

/// Oracle output with the mask of deliberately corrupted entries.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleMatches {
    pub set: MatchSet,
    pub corrupted: Vec<bool>,
}

fn clamp_into(x: f64, size: u32) -> f64 {
    x.clamp(0.0, size as f64 - 1e-6)
}

/// Pairs pixels observing the same landmark id, in query order.
///
/// Query pixels get Gaussian noise of `noise_px` (clamped into the image),
/// then exactly `⌊outlier_rate · n⌋` entries chosen at random have their
/// query pixel replaced by a uniform random pixel.
pub fn match_oracle(
    reference_id: u32,
    reference: &[LandmarkObs],
    query: &[LandmarkObs],
    query_size: (u32, u32),
    outlier_rate: f64,
    noise_px: f64,
    seed: u64,
) -> Result<OracleMatches, MatchError> {
    if !(0.0..1.0).contains(&outlier_rate) {
        return Err(MatchError::InvalidParameter(format!("outlier rate {outlier_rate} not in [0, 1)")));
    }
    if !(noise_px >= 0.0 && noise_px.is_finite()) {
        return Err(MatchError::InvalidParameter(format!("noise {noise_px} px")));
    }
    let (w, h) = query_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_id: HashMap<u32, &LandmarkObs> = reference.iter().map(|l| (l.id, l)).collect();
    let noise = Normal::new(0.0, noise_px).expect("finite sigma");
    let mut set = MatchSet::empty(reference_id);
    for q in query {
        let Some(r) = by_id.get(&q.id) else { continue };
        let uv_query = if noise_px > 0.0 {
            (
                clamp_into(q.u + noise.sample(&mut rng), w),
                clamp_into(q.v + noise.sample(&mut rng), h),
            )
        } else {
            (q.u, q.v)
        };
        set.correspondences.push(Correspondence {
            uv_ref: (r.u, r.v),
            uv_query,
            confidence: 1.0,
        });
    }
    let n = set.len();
    let n_bad = (outlier_rate * n as f64).floor() as usize;
    let mut corrupted = vec![false; n];
    let mut picked = sample(&mut rng, n, n_bad).into_vec();
    picked.sort_unstable();
    for i in picked {
        corrupted[i] = true;
        set.correspondences[i].uv_query = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
    }
    Ok(OracleMatches { set, corrupted })
}

/// Simulator-only matcher over landmark annotations. Each call draws a fresh
/// seed from an internal generator, so a run is reproducible as a whole.
pub struct OracleMatcher {
    pub outlier_rate: f64,
    pub noise_px: f64,
    rng: ChaCha8Rng,
}

impl OracleMatcher {
    pub fn new(outlier_rate: f64, noise_px: f64, seed: u64) -> Result<Self, MatchError> {
        // validate once up front
        match_oracle(0, &[], &[], (1, 1), outlier_rate, noise_px, 0)?;
        Ok(Self {
            outlier_rate,
            noise_px,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn exact() -> Self {
        Self::new(0.0, 0.0, 0).expect("valid parameters")
    }

    pub fn match_landmarks(&mut self, reference_id: u32, reference: &[LandmarkObs], query: &[LandmarkObs], query_size: (u32, u32)) -> OracleMatches {
        let seed = self.rng.random();
        match_oracle(reference_id, reference, query, query_size, self.outlier_rate, self.noise_px, seed).expect("validated parameters")
    }
}

impl Matcher for OracleMatcher {
    fn correspond(&mut self, reference_id: u32, reference: MatchView<'_>, query: MatchView<'_>) -> MatchSet {
        match (reference.landmarks, query.landmarks) {
            (Some(r), Some(q)) => self.match_landmarks(reference_id, r, q, query.image.dimensions()).set,
            _ => MatchSet::empty(reference_id),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn landmarks(n: u32, offset: f64) -> Vec<LandmarkObs> {
        (0..n)
            .map(|i| LandmarkObs {
                id: i * 3,
                u: (i % 10) as f64 * 10.0 + offset,
                v: (i / 10) as f64 * 10.0 + offset,
                range: 2.0,
            })
            .collect()
    }

    #[test]
    fn exact_oracle_returns_ground_truth() {
        let r = landmarks(100, 0.5);
        let q = landmarks(100, 1.5);
        let m = match_oracle(4, &r, &q[10..], (128, 128), 0.0, 0.0, 1).unwrap();
        assert_eq!(m.set.len(), 90);
        for (c, ql) in m.set.correspondences.iter().zip(&q[10..]) {
            assert_eq!(c.uv_query, (ql.u, ql.v));
            assert_eq!(c.uv_ref, (ql.u - 1.0, ql.v - 1.0));
        }
        assert!(m.corrupted.iter().all(|c| !c));
    }

    #[test]
    fn outlier_count_is_exact_and_reproducible() {
        let r = landmarks(100, 0.5);
        let q = landmarks(100, 1.5);
        let a = match_oracle(0, &r, &q, (128, 128), 0.3, 0.0, 42).unwrap();
        let b = match_oracle(0, &r, &q, (128, 128), 0.3, 0.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.set.to_csv(), b.set.to_csv());
        assert_eq!(a.corrupted.iter().filter(|c| **c).count(), 30);
        for (i, c) in a.set.correspondences.iter().enumerate() {
            let moved = c.uv_query != (q[i].u, q[i].v);
            assert_eq!(moved, a.corrupted[i]);
        }
    }

    #[test]
    fn outlier_rate_one_is_rejected() {
        assert!(matches!(match_oracle(0, &[], &[], (8, 8), 1.0, 0.0, 0), Err(MatchError::InvalidParameter(_))));
        assert!(OracleMatcher::new(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn noisy_pixels_stay_in_bounds() {
        let r = landmarks(100, 0.0);
        let m = match_oracle(0, &r, &r, (100, 100), 0.0, 3.0, 7).unwrap();
        for c in &m.set.correspondences {
            assert!(c.uv_query.0 >= 0.0 && c.uv_query.0 < 100.0 && c.uv_query.1 >= 0.0 && c.uv_query.1 < 100.0);
        }
    }
}
