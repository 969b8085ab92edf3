use nalgebra::{Matrix2x6, Matrix6, Vector2, Vector6};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::p3p::p3p;
use super::{PnpParams, RelocResult, RelocStatus};
use crate::geometry::{hat, projection_jacobian, CameraIntrinsics, Pose, Tangent, Vec3, DEFAULT_Z_MIN};

/// A 3D point in the query camera frame and the reference pixel it maps to.
pub type PnpPair = (Vec3, (f64, f64));

/// Reprojection residual `π(T·p) − uv`; `None` if the point is behind the
/// camera.
pub fn reprojection_residual(k: &CameraIntrinsics, pose: &Pose, pair: &PnpPair) -> Option<Vector2<f64>> {
    let pc = pose.transform_point(&pair.0);
    if !(pc.z > DEFAULT_Z_MIN) {
        return None;
    }
    let (u, v) = k.project_unchecked(&pc);
    Some(Vector2::new(u - pair.1 .0, v - pair.1 .1))
}

/// Jacobian of the reprojection residual with respect to a right
/// perturbation `T·exp(δ)`, `δ = (ρ, φ)`.
pub fn reprojection_jacobian(k: &CameraIntrinsics, pose: &Pose, p: &Vec3) -> Matrix2x6<f64> {
    let pc = pose.transform_point(p);
    let r = pose.rotation_matrix();
    let jp = projection_jacobian(k, &pc);
    let mut jd = nalgebra::Matrix3x6::zeros();
    jd.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    jd.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-r * hat(p)));
    jp * jd
}

fn inlier_mask(k: &CameraIntrinsics, pose: &Pose, pairs: &[PnpPair], thresh: f64) -> Vec<bool> {
    let t2 = thresh * thresh;
    pairs
        .iter()
        .map(|p| reprojection_residual(k, pose, p).is_some_and(|r| r.norm_squared() < t2))
        .collect()
}

/// Sum of squared reprojection errors; points behind the camera cost
/// infinity.
pub fn reprojection_cost(k: &CameraIntrinsics, pose: &Pose, pairs: &[PnpPair]) -> f64 {
    pairs
        .iter()
        .map(|p| reprojection_residual(k, pose, p).map_or(f64::INFINITY, |r| r.norm_squared()))
        .sum()
}

/// Gauss-Newton on the total squared reprojection error with step halving.
/// Returns the refined pose and its cost; never returns a pose with higher
/// cost than `init`.
pub fn refine_pose(k: &CameraIntrinsics, init: &Pose, pairs: &[PnpPair], max_iters: usize, tol: f64) -> (Pose, f64) {
    let mut pose = *init;
    let mut cost = reprojection_cost(k, &pose, pairs);
    if !cost.is_finite() {
        return (pose, cost);
    }
    for _ in 0..max_iters {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for pair in pairs {
            let r = reprojection_residual(k, &pose, pair).expect("finite cost");
            let j = reprojection_jacobian(k, &pose, &pair.0);
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let Some(step) = h.cholesky().map(|c| c.solve(&(-g))).or_else(|| h.lu().solve(&(-g))) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let cand = pose.retract(&Tangent(step * scale));
            let c = reprojection_cost(k, &cand, pairs);
            if c < cost {
                accepted = Some((cand, c));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, c)) = accepted else { break };
        let decrease = cost - c;
        pose = cand;
        cost = c;
        if decrease <= tol * cost.max(1e-300) || cost == 0.0 {
            break;
        }
    }
    (pose, cost)
}

/// Best minimal-sample hypothesis from four pairs: P3P on the first three,
/// the fourth picks among the solutions.
fn minimal_solve(k: &CameraIntrinsics, sample: [&PnpPair; 4]) -> Option<Pose> {
    let world: [Vec3; 3] = std::array::from_fn(|i| sample[i].0);
    let bearing: [Vec3; 3] = std::array::from_fn(|i| k.ray(sample[i].1 .0, sample[i].1 .1));
    p3p(&world, &bearing)
        .into_iter()
        .filter_map(|pose| reprojection_residual(k, &pose, sample[3]).map(|r| (r.norm_squared(), pose)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
}

fn required_iterations(inlier_ratio: f64, confidence: f64) -> f64 {
    let w4 = inlier_ratio.powi(4);
    if w4 >= 1.0 {
        return 1.0;
    }
    if w4 <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - w4).ln()).ceil()
}

/// PnP inside RANSAC, then refinement on the inliers.
///
/// The returned pose maps points of the lifted frame into the reference
/// camera frame. Both `pose` and `relative` carry it.
pub fn solve_pnp_ransac(pairs: &[PnpPair], k: &CameraIntrinsics, params: &PnpParams) -> RelocResult {
    let n = pairs.len();
    let fail = |status, inliers| RelocResult {
        pose: Pose::identity(),
        relative: Pose::identity(),
        inliers,
        total: n,
        status,
        elapsed_ms: 0.0,
    };
    if n < 4 {
        return fail(RelocStatus::TooFewMatches, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Pose)> = None;
    let mut needed = params.max_iters as f64;
    let mut iter = 0;
    while iter < params.max_iters && (iter as f64) < needed {
        iter += 1;
        let idx = sample(&mut rng, n, 4).into_vec();
        let Some(pose) = minimal_solve(k, [&pairs[idx[0]], &pairs[idx[1]], &pairs[idx[2]], &pairs[idx[3]]]) else {
            continue;
        };
        let count = inlier_mask(k, &pose, pairs, params.reproj_thresh).iter().filter(|m| **m).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, pose));
            needed = required_iterations(count as f64 / n as f64, params.confidence).min(params.max_iters as f64);
        }
    }
    let Some((mut count, mut pose)) = best else {
        return fail(RelocStatus::RansacFailed, 0);
    };
    if count < 4 {
        return fail(RelocStatus::RansacFailed, count);
    }
    // Refine on the inliers, recount, and repeat while the set changes.
    let mut mask = inlier_mask(k, &pose, pairs, params.reproj_thresh);
    for _ in 0..3 {
        let inl: Vec<PnpPair> = pairs.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
        let (refined, _) = refine_pose(k, &pose, &inl, params.refine_iters, params.refine_tol);
        let new_mask = inlier_mask(k, &refined, pairs, params.reproj_thresh);
        let new_count = new_mask.iter().filter(|m| **m).count();
        if new_count < count {
            break;
        }
        pose = refined;
        let changed = new_mask != mask;
        mask = new_mask;
        count = new_count;
        if !changed {
            break;
        }
    }
    if count < params.min_inliers {
        return fail(RelocStatus::RansacFailed, count);
    }
    RelocResult {
        pose,
        relative: pose,
        inliers: count,
        total: n,
        status: RelocStatus::Success,
        elapsed_ms: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        Pose::new(
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            nalgebra::UnitQuaternion::from_scaled_axis(Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            )),
        )
    }

    fn synth(rng: &mut ChaCha8Rng, truth: &Pose, k: &CameraIntrinsics, n: usize) -> Vec<PnpPair> {
        let inv = truth.inverse();
        (0..n)
            .map(|_| {
                let uv = (rng.random_range(0.0..k.width as f64), rng.random_range(0.0..k.height as f64));
                let pc = k.ray(uv.0, uv.1) * rng.random_range(2.0..8.0);
                (inv.transform_point(&pc), uv)
            })
            .collect()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let pair = synth(&mut rng, &pose, &k, 1)[0];
            let j = reprojection_jacobian(&k, &pose, &pair.0);
            let h = 1e-6;
            for c in 0..6 {
                let mut d = Vector6::zeros();
                d[c] = h;
                let rp = reprojection_residual(&k, &pose.retract(&Tangent(d)), &pair).unwrap();
                let rm = reprojection_residual(&k, &pose.retract(&Tangent(-d)), &pair).unwrap();
                let fd = (rp - rm) / (2.0 * h);
                let col = j.column(c);
                assert!((fd - col).norm() <= 1e-5 * col.norm().max(1.0), "{fd} vs {col}");
            }
        }
    }

    #[test]
    fn exact_pairs_give_exact_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        for _ in 0..50 {
            let truth = random_pose(&mut rng);
            let pairs = synth(&mut rng, &truth, &k, 20);
            let r = solve_pnp_ransac(&pairs, &k, &PnpParams::default());
            assert_eq!(r.status, RelocStatus::Success);
            assert_eq!(r.inliers, 20);
            assert!(r.pose.translation_distance(&truth) < 1e-6);
            assert!(r.pose.rotation_angle_to(&truth) < 1e-6);
        }
    }

    #[test]
    fn three_pairs_are_too_few() {
        let k = CameraIntrinsics::default_sim();
        let pairs = vec![(Vec3::new(0.0, 0.0, 2.0), (64.0, 64.0)); 3];
        assert_eq!(solve_pnp_ransac(&pairs, &k, &PnpParams::default()).status, RelocStatus::TooFewMatches);
    }

    #[test]
    fn refinement_never_increases_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        for _ in 0..50 {
            let truth = random_pose(&mut rng);
            let mut pairs = synth(&mut rng, &truth, &k, 30);
            for p in &mut pairs {
                p.1 .0 += rng.random_range(-1.0..1.0);
                p.1 .1 += rng.random_range(-1.0..1.0);
            }
            let start = truth.retract(&Tangent(Vector6::from_fn(|_, _| rng.random_range(-0.02..0.02))));
            let before = reprojection_cost(&k, &start, &pairs);
            let (_, after) = refine_pose(&k, &start, &pairs, 20, 1e-10);
            assert!(after <= before);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let truth = random_pose(&mut rng);
        let mut pairs = synth(&mut rng, &truth, &k, 60);
        for p in pairs.iter_mut().take(20) {
            p.1 = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        }
        let a = solve_pnp_ransac(&pairs, &k, &PnpParams::default());
        let b = solve_pnp_ransac(&pairs, &k, &PnpParams::default());
        assert_eq!(a, b);
        assert_eq!(a.status, RelocStatus::Success);
    }
}
