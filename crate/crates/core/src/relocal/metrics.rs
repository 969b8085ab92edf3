use super::{RelocError, RelocResult};
use crate::geometry::Pose;

/// Error thresholds of the precision buckets: (meters, degrees).
pub const BUCKETS: [(f64, f64); 3] = [(0.05, 5.0), (0.25, 5.0), (1.0, 10.0)];

pub const METRICS_CSV_HEADER: &str =
    "max_et,max_er,median_et,median_er,p_5cm_5deg,p_25cm_5deg,p_1m_10deg,pct_estimated,mean_time_ms";

/// Relocalization benchmark summary. Errors are over successful results
/// only (NaN when there are none); percentages are over all results.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelocMetrics {
    pub max_et: f64,
    pub max_er: f64,
    pub median_et: f64,
    pub median_er: f64,
    /// Percent within each of [`BUCKETS`].
    pub precision: [f64; 3],
    pub pct_estimated: f64,
    pub mean_time_ms: f64,
}

impl RelocMetrics {
    pub fn csv_row(&self) -> String {
        let v = [
            self.max_et,
            self.max_er,
            self.median_et,
            self.median_er,
            self.precision[0],
            self.precision[1],
            self.precision[2],
            self.pct_estimated,
            self.mean_time_ms,
        ];
        v.iter().map(|x| crate::textio::fmt_sig(*x, 9)).collect::<Vec<_>>().join(",")
    }
}

/// Geodesic angle between two rotations in degrees.
pub fn rotation_error_deg(a: &Pose, b: &Pose) -> f64 {
    a.rotation_angle_to(b).to_degrees()
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Metrics from already computed per-query errors; `None` marks a failed
/// query.
pub fn metrics_from_errors(errors: &[Option<(f64, f64)>], mean_time_ms: f64) -> Result<RelocMetrics, RelocError> {
    if errors.is_empty() {
        return Err(RelocError::EmptyInput);
    }
    let n = errors.len() as f64;
    let ok: Vec<(f64, f64)> = errors.iter().flatten().copied().collect();
    let mut et: Vec<f64> = ok.iter().map(|e| e.0).collect();
    let mut er: Vec<f64> = ok.iter().map(|e| e.1).collect();
    let max = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().copied().fold(f64::NEG_INFINITY, f64::max) };
    let precision = BUCKETS.map(|(t, r)| 100.0 * ok.iter().filter(|e| e.0 <= t && e.1 <= r).count() as f64 / n);
    Ok(RelocMetrics {
        max_et: max(&et),
        max_er: max(&er),
        median_et: median(&mut et),
        median_er: median(&mut er),
        precision,
        pct_estimated: 100.0 * ok.len() as f64 / n,
        mean_time_ms,
    })
}

pub fn compute_reloc_metrics(results: &[(RelocResult, Pose)]) -> Result<RelocMetrics, RelocError> {
    if results.is_empty() {
        return Err(RelocError::EmptyInput);
    }
    let errors: Vec<Option<(f64, f64)>> = results
        .iter()
        .map(|(r, gt)| r.is_success().then(|| (r.pose.translation_distance(gt), rotation_error_deg(&r.pose, gt))))
        .collect();
    let mean_time = results.iter().map(|(r, _)| r.elapsed_ms).sum::<f64>() / results.len() as f64;
    metrics_from_errors(&errors, mean_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::relocal::RelocStatus;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn result(pose: Pose, status: RelocStatus) -> RelocResult {
        RelocResult {
            pose,
            relative: pose,
            inliers: 20,
            total: 30,
            status,
            elapsed_ms: 2.0,
        }
    }

    fn with_error(et: f64, er_deg: f64) -> Pose {
        Pose::new(Vec3::new(et, 0.0, 0.0), UnitQuaternion::from_axis_angle(&Vec3::z_axis(), er_deg.to_radians()))
    }

    #[test]
    fn exact_results() {
        let r: Vec<_> = (0..4).map(|_| (result(Pose::identity(), RelocStatus::Success), Pose::identity())).collect();
        let m = compute_reloc_metrics(&r).unwrap();
        assert_eq!((m.median_et, m.median_er, m.max_et), (0.0, 0.0, 0.0));
        assert_eq!(m.precision, [100.0; 3]);
        assert_eq!(m.pct_estimated, 100.0);
        assert_eq!(m.mean_time_ms, 2.0);
    }

    #[test]
    fn half_failed() {
        let mut r: Vec<_> = (0..2).map(|_| (result(Pose::identity(), RelocStatus::Success), Pose::identity())).collect();
        r.extend((0..2).map(|_| (result(Pose::identity(), RelocStatus::TooFewMatches), Pose::identity())));
        let m = compute_reloc_metrics(&r).unwrap();
        assert_eq!(m.pct_estimated, 50.0);
        assert_eq!(m.precision, [50.0; 3]);
    }

    #[test]
    fn hand_built_buckets() {
        let r = vec![
            (result(with_error(0.03, 2.0), RelocStatus::Success), Pose::identity()),
            (result(with_error(0.20, 4.0), RelocStatus::Success), Pose::identity()),
            (result(with_error(0.80, 8.0), RelocStatus::Success), Pose::identity()),
            (result(Pose::identity(), RelocStatus::RansacFailed), Pose::identity()),
        ];
        let m = compute_reloc_metrics(&r).unwrap();
        assert_eq!(m.precision, [25.0, 50.0, 75.0]);
        assert_eq!(m.pct_estimated, 75.0);
        assert!((m.median_et - 0.20).abs() < 1e-12);
        assert!((m.median_er - 4.0).abs() < 1e-9);
        assert!((m.max_et - 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(compute_reloc_metrics(&[]), Err(RelocError::EmptyInput));
    }

    #[test]
    fn buckets_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let n = rng.random_range(1..30);
            let errs: Vec<Option<(f64, f64)>> = (0..n)
                .map(|_| rng.random_bool(0.8).then(|| (rng.random_range(0.0..1.5), rng.random_range(0.0..15.0))))
                .collect();
            let m = metrics_from_errors(&errs, 0.0).unwrap();
            assert!(m.precision[0] <= m.precision[1] && m.precision[1] <= m.precision[2] && m.precision[2] <= m.pct_estimated);
        }
    }

    #[test]
    fn rotation_error_symmetric_and_sign_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = Pose::new(Vec3::zeros(), UnitQuaternion::from_scaled_axis(Vec3::new(rng.random(), rng.random(), rng.random())));
            let b = Pose::new(Vec3::zeros(), UnitQuaternion::from_scaled_axis(Vec3::new(rng.random(), rng.random(), rng.random())));
            assert!((rotation_error_deg(&a, &b) - rotation_error_deg(&b, &a)).abs() < 1e-12);
            assert!(rotation_error_deg(&a, &a) < 1e-12);
        }
        let q = UnitQuaternion::from_scaled_axis(Vec3::new(0.3, 0.1, 0.2));
        let neg = UnitQuaternion::new_unchecked(-q.into_inner());
        assert!(rotation_error_deg(&Pose::from_rotation(q), &Pose::from_rotation(neg)) < 1e-12);
    }
}
