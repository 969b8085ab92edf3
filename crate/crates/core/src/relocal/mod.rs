//! Map-free relative localization against a single reference node, plus
//! the relocalization benchmark metrics.
//!
//! Query pixels are lifted to 3D with the query depth image, and PnP finds
//! the transform taking them into the reference camera so that they land on
//! the matched reference pixels.

mod dataset;
mod metrics;
mod p3p;
mod pnp;

pub use dataset::{
    export_oracle_matches, generate_reloc_dataset, load_reloc_dataset, run_reloc_bench, save_reloc_dataset, BenchMatcher, DatasetError,
    RelocDataset, RelocGenParams, RelocQuery,
};
pub use metrics::{compute_reloc_metrics, metrics_from_errors, rotation_error_deg, RelocMetrics, METRICS_CSV_HEADER};
pub use p3p::{align_points, p3p};
pub use pnp::{refine_pose, reprojection_cost, reprojection_jacobian, reprojection_residual, solve_pnp_ransac, PnpPair};

use std::time::Instant;

use thiserror::Error;

use crate::geometry::{body_from_camera, camera_pose, CameraIntrinsics, DepthRange, Pose};
use crate::imaging::DepthImage;
use crate::mapgraph::MapNode;
use crate::matching::{MatchSet, MatchView, Matcher};
use crate::observation::Observation;

#[derive(Debug, Error, PartialEq)]
pub enum RelocError {
    #[error("node {0} has no stored image")]
    NoReferenceImage(u32),
    #[error("observation has no depth image")]
    NoDepth,
    #[error("no results to evaluate")]
    EmptyInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelocStatus {
    Success,
    TooFewMatches,
    RansacFailed,
}

impl RelocStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RelocStatus::Success => "Success",
            RelocStatus::TooFewMatches => "TooFewMatches",
            RelocStatus::RansacFailed => "RansacFailed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelocResult {
    /// World body pose from [`localize_against_node`]; the relative camera
    /// pose from [`solve_pnp_ransac`].
    pub pose: Pose,
    /// Query camera pose in the reference camera frame.
    pub relative: Pose,
    pub inliers: usize,
    pub total: usize,
    pub status: RelocStatus,
    /// Wall-clock solve time. Not deterministic; kept out of replayable logs.
    pub elapsed_ms: f64,
}

impl RelocResult {
    pub fn is_success(&self) -> bool {
        self.status == RelocStatus::Success
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnpParams {
    /// Inlier threshold, pixels.
    pub reproj_thresh: f64,
    pub min_inliers: usize,
    pub max_iters: usize,
    pub confidence: f64,
    pub refine_iters: usize,
    /// Relative cost decrease below which refinement stops.
    pub refine_tol: f64,
    pub seed: u64,
}

impl Default for PnpParams {
    fn default() -> Self {
        Self {
            reproj_thresh: 3.0,
            min_inliers: 12,
            max_iters: 1000,
            confidence: 0.999,
            refine_iters: 20,
            refine_tol: 1e-10,
            seed: 0,
        }
    }
}

/// Lifts each correspondence's query pixel to a 3D point in the query camera
/// frame, paired with its reference pixel. Pixels without a valid depth in
/// all four bilinear neighbors are dropped; order is preserved.
pub fn lift(matches: &MatchSet, depth: &DepthImage, k: &CameraIntrinsics, range: &DepthRange) -> Vec<PnpPair> {
    matches
        .correspondences
        .iter()
        .filter_map(|c| {
            let (u, v) = c.uv_query;
            depth.bilinear(u, v, range).map(|d| (k.ray(u, v) * d, c.uv_ref))
        })
        .collect()
}

/// Converts a relative camera solution to the query body pose in the world.
pub fn world_pose_from_relative(node_pose: &Pose, relative: &Pose) -> Pose {
    camera_pose(node_pose).compose(relative).compose(&body_from_camera().inverse())
}

/// Match, lift, and solve against one node; the result pose is in the
/// world frame.
pub fn localize_against_node(
    node: &MapNode,
    obs: &Observation,
    k: &CameraIntrinsics,
    matcher: &mut dyn Matcher,
    params: &PnpParams,
    range: &DepthRange,
) -> Result<RelocResult, RelocError> {
    let image = node.image.as_ref().ok_or(RelocError::NoReferenceImage(node.id))?;
    let depth = obs.depth.as_ref().ok_or(RelocError::NoDepth)?;
    let start = Instant::now();
    let matches = matcher.correspond(
        node.id,
        MatchView {
            image,
            landmarks: node.landmarks.as_deref(),
        },
        MatchView {
            image: &obs.color,
            landmarks: obs.landmarks.as_deref(),
        },
    );
    let pairs = lift(&matches, depth, k, range);
    let mut r = solve_pnp_ransac(&pairs, k, params);
    if r.is_success() {
        r.pose = world_pose_from_relative(&node.pose, &r.relative);
    }
    r.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{camera_pose, Vec3};
    use crate::matching::{ClassicalMatcher, OracleMatcher};
    use crate::retrieval::extract_descriptor;
    use crate::simworld::{render, Preset};

    fn node_from(world: &crate::simworld::GridWorld, pose: Pose, k: &CameraIntrinsics) -> MapNode {
        let f = render(world, &pose, k).unwrap();
        MapNode {
            id: 0,
            pose,
            descriptor: extract_descriptor(&f.color).unwrap().values,
            image: Some(f.color),
            depth: None,
            landmarks: Some(f.landmark_obs),
        }
    }

    #[test]
    fn lift_examples() {
        let k = CameraIntrinsics::default_sim();
        let mut depth = DepthImage::new(128, 128);
        let mut set = MatchSet::empty(0);
        set.correspondences.push(crate::matching::Correspondence {
            uv_ref: (10.0, 10.0),
            uv_query: (64.0, 64.0),
            confidence: 1.0,
        });
        assert!(lift(&set, &depth, &k, &DepthRange::default()).is_empty());
        depth.set(64, 64, 2.0);
        let l = lift(&set, &depth, &k, &DepthRange::default());
        assert_eq!(l, vec![(Vec3::new(0.0, 0.0, 2.0), (10.0, 10.0))]);
    }

    #[test]
    fn lifted_landmarks_match_ground_truth() {
        let world = Preset::Rooms.build(4);
        let k = CameraIntrinsics::default_sim();
        let pose = Pose::planar(3.3, 3.1, 0.6, 0.7);
        let f = render(&world, &pose, &k).unwrap();
        let obs = &f.landmark_obs;
        assert!(obs.len() > 20);
        let set = crate::matching::match_oracle(0, obs, obs, (128, 128), 0.0, 0.0, 0).unwrap().set;
        let lifted = lift(&set, &f.depth, &k, &DepthRange::default());
        assert_eq!(lifted.len(), obs.len());
        let cam_inv = camera_pose(&pose).inverse();
        for (p, o) in lifted.iter().zip(obs) {
            let truth = cam_inv.transform_point(&world.landmarks()[o.id as usize].position);
            assert!((p.0 - truth).norm() < 1e-6, "{} vs {}", p.0, truth);
        }
    }

    #[test]
    fn self_localization_is_identity() {
        let world = Preset::Corridor.build(1);
        let k = CameraIntrinsics::default_sim();
        let pose = Pose::planar(5.0, 2.4, 0.6, 0.2);
        let node = node_from(&world, pose, &k);
        let obs = render(&world, &pose, &k).unwrap().into_observation();
        let r = localize_against_node(&node, &obs, &k, &mut OracleMatcher::exact(), &PnpParams::default(), &DepthRange::default()).unwrap();
        assert!(r.is_success());
        assert!(r.pose.translation_distance(&pose) < 1e-6);
        assert!(r.pose.rotation_angle_to(&pose) < 1e-6);
    }

    #[test]
    fn featureless_observation_has_too_few_matches() {
        let world = Preset::Corridor.build(1);
        let k = CameraIntrinsics::default_sim();
        let node = node_from(&world, Pose::planar(5.0, 2.4, 0.6, 0.2), &k);
        let obs = Observation {
            color: crate::imaging::GrayImage::from_pixel(128, 128, image::Luma([100])),
            depth: Some(DepthImage::from_vec(128, 128, vec![2.0; 128 * 128])),
            landmarks: None,
        };
        let r = localize_against_node(&node, &obs, &k, &mut ClassicalMatcher::default(), &PnpParams::default(), &DepthRange::default()).unwrap();
        assert_eq!(r.status, RelocStatus::TooFewMatches);
    }

    #[test]
    fn offset_query_localizes_with_classical_matcher() {
        let world = Preset::Rooms.build(2);
        let k = CameraIntrinsics::default_sim();
        let node_pose = Pose::planar(3.2, 3.3, 0.6, 0.0);
        let node = node_from(&world, node_pose, &k);
        let q = Pose::planar(3.2 + 0.5 * (0.3f64).cos(), 3.3 + 0.5 * (0.3f64).sin(), 0.6, 15f64.to_radians());
        let obs = render(&world, &q, &k).unwrap().into_observation();
        let r = localize_against_node(&node, &obs, &k, &mut ClassicalMatcher::default(), &PnpParams::default(), &DepthRange::default()).unwrap();
        assert!(r.is_success(), "{r:?}");
        assert!(r.pose.translation_distance(&q) < 0.05, "{}", r.pose.translation_distance(&q));
        assert!(r.pose.rotation_angle_to(&q).to_degrees() < 0.5);
    }
}
