use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::{MapError, Segment, SegmentFrame};
use crate::geometry::{camera_pose, CameraIntrinsics, DepthRange};

/// 2D grid cell `(floor(x / res), floor(y / res))`.
pub type CellKey = (i64, i64);

/// Grid cells hit by lifting every valid depth pixel of `frame` into the
/// world frame. The z coordinate is dropped.
pub fn coverage(
    frame: &SegmentFrame,
    k: &CameraIntrinsics,
    grid_res: f64,
    range: &DepthRange,
) -> Result<HashSet<CellKey>, MapError> {
    if !(grid_res > 0.0) {
        return Err(MapError::InvalidArgument("grid_res must be positive".into()));
    }
    let depth = frame.observation.depth.as_ref().ok_or(MapError::NoDepth { index: 0 })?;
    let cam = camera_pose(&frame.pose);
    let mut cells = HashSet::new();
    for y in 0..depth.height {
        for x in 0..depth.width {
            let d = depth.get(x, y) as f64;
            if !d.is_finite() || !range.contains(d) {
                continue;
            }
            let p = cam.transform_point(&(k.ray(x as f64, y as f64) * d));
            cells.insert(((p.x / grid_res).floor() as i64, (p.y / grid_res).floor() as i64));
        }
    }
    Ok(cells)
}

/// Greedy maximum coverage: repeatedly takes the set adding the most
/// uncovered elements, lowest index on ties, until `budget` sets are chosen
/// or no set adds anything. Returns indices in ascending order.
///
/// Uses lazy gain evaluation; marginal gains only shrink as the union grows,
/// so the selection is identical to the plain greedy loop.
pub fn greedy_max_coverage<T: Copy + Eq + std::hash::Hash>(sets: &[Vec<T>], budget: usize) -> Vec<usize> {
    // Map elements to dense ids.
    let mut ids: HashMap<T, u32> = HashMap::new();
    let dense: Vec<Vec<u32>> = sets
        .iter()
        .map(|s| {
            let mut v: Vec<u32> = s
                .iter()
                .map(|e| {
                    let next = ids.len() as u32;
                    match ids.entry(*e) {
                        Entry::Occupied(o) => *o.get(),
                        Entry::Vacant(vac) => *vac.insert(next),
                    }
                })
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut covered = vec![false; ids.len()];
    let gain = |i: usize, covered: &[bool]| dense[i].iter().filter(|&&e| !covered[e as usize]).count();
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = dense.iter().enumerate().map(|(i, s)| (s.len(), Reverse(i))).collect();
    let mut chosen = Vec::new();
    while chosen.len() < budget {
        let Some((_, Reverse(i))) = heap.pop() else { break };
        let g = gain(i, &covered);
        let beats_rest = heap.peek().is_none_or(|&top| (g, Reverse(i)) >= top);
        if beats_rest {
            if g == 0 {
                break;
            }
            for &e in &dense[i] {
                covered[e as usize] = true;
            }
            chosen.push(i);
        } else {
            heap.push((g, Reverse(i)));
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Budgeted keyframe selection maximizing the number of covered 2D cells.
pub fn select_keyframes(
    segment: &Segment,
    keyframe_budget: usize,
    grid_res: f64,
    range: &DepthRange,
) -> Result<Vec<usize>, MapError> {
    if keyframe_budget == 0 {
        return Err(MapError::InvalidArgument("keyframe budget must be at least 1".into()));
    }
    if segment.frames.is_empty() {
        return Err(MapError::InvalidSegment("segment is empty".into()));
    }
    let sets = segment
        .frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            coverage(f, &segment.intrinsics, grid_res, range)
                .map(|s| s.into_iter().collect::<Vec<_>>())
                .map_err(|e| match e {
                    MapError::NoDepth { .. } => MapError::NoDepth { index },
                    other => other,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(greedy_max_coverage(&sets, keyframe_budget))
}

/// Depth-free fallback: keeps the first frame whose position falls in each
/// voxel of side `voxel_res`, in temporal order.
pub fn select_keyframes_geomonly(segment: &Segment, voxel_res: f64) -> Result<Vec<usize>, MapError> {
    if !(voxel_res > 0.0) {
        return Err(MapError::InvalidArgument("voxel_res must be positive".into()));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, f) in segment.frames.iter().enumerate() {
        let t = f.pose.translation();
        let key = (
            (t.x / voxel_res).floor() as i64,
            (t.y / voxel_res).floor() as i64,
            (t.z / voxel_res).floor() as i64,
        );
        if seen.insert(key) {
            out.push(i);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{body_from_camera, Pose};
    use crate::imaging::{DepthImage, GrayImage};
    use crate::observation::Observation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame_at(pose: Pose, depth: Option<DepthImage>) -> SegmentFrame {
        SegmentFrame {
            observation: Observation {
                color: GrayImage::new(4, 4),
                depth,
                landmarks: None,
            },
            pose,
            timestamp: 0.0,
        }
    }

    fn brute_force_opt(sets: &[Vec<u32>], budget: usize) -> usize {
        let n = sets.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize > budget {
                continue;
            }
            let union: HashSet<u32> = (0..n).filter(|i| mask & (1 << i) != 0).flat_map(|i| sets[i].iter().copied()).collect();
            best = best.max(union.len());
        }
        best
    }

    #[test]
    fn hand_traced_greedy() {
        let sets = vec![vec![1u32, 2, 3], vec![3, 4, 5], vec![6]];
        assert_eq!(greedy_max_coverage(&sets, 2), vec![0, 1]);
        assert_eq!(brute_force_opt(&sets, 2), 5);
    }

    #[test]
    fn duplicate_frames_stop_at_zero_gain() {
        let sets = vec![vec![1u32, 2], vec![1, 2], vec![2, 1]];
        assert_eq!(greedy_max_coverage(&sets, 3), vec![0]);
    }

    #[test]
    fn large_budget_stops_when_nothing_is_left() {
        // {3,1} goes first, after which {1} adds nothing.
        let sets = vec![vec![1u32], vec![2], vec![3, 1]];
        assert_eq!(greedy_max_coverage(&sets, 10), vec![1, 2]);
    }

    #[test]
    fn greedy_matches_plain_loop() {
        // Plain O(n·budget) greedy, no lazy evaluation.
        fn plain(sets: &[Vec<u32>], budget: usize) -> Vec<usize> {
            let mut covered = HashSet::new();
            let mut chosen = Vec::new();
            while chosen.len() < budget {
                let mut best: Option<(usize, usize)> = None;
                for (i, s) in sets.iter().enumerate() {
                    if chosen.contains(&i) {
                        continue;
                    }
                    let g = s.iter().collect::<HashSet<_>>().into_iter().filter(|e| !covered.contains(*e)).count();
                    if best.is_none_or(|(bg, _)| g > bg) {
                        best = Some((g, i));
                    }
                }
                match best {
                    Some((g, i)) if g > 0 => {
                        covered.extend(sets[i].iter().copied());
                        chosen.push(i);
                    }
                    _ => break,
                }
            }
            chosen.sort_unstable();
            chosen
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let n = rng.random_range(1..15);
            let sets: Vec<Vec<u32>> = (0..n)
                .map(|_| (0..rng.random_range(0..8)).map(|_| rng.random_range(0..20)).collect())
                .collect();
            let budget = rng.random_range(1..6);
            assert_eq!(greedy_max_coverage(&sets, budget), plain(&sets, budget));
        }
    }

    proptest! {
        #[test]
        fn greedy_meets_approximation_bound(
            sets in prop::collection::vec(prop::collection::vec(0u32..30, 0..10), 1..=12),
            budget in 1usize..6,
        ) {
            let chosen = greedy_max_coverage(&sets, budget);
            let covered: HashSet<u32> = chosen.iter().flat_map(|&i| sets[i].iter().copied()).collect();
            let opt = brute_force_opt(&sets, budget);
            prop_assert!(covered.len() as f64 >= (1.0 - (-1.0f64).exp()) * opt as f64);
            prop_assert!(chosen.len() <= budget);
        }
    }

    #[test]
    fn coverage_of_invalid_depth_is_empty() {
        let k = CameraIntrinsics::new(2.0, 2.0, 2.0, 2.0, 4, 4).unwrap();
        let f = frame_at(Pose::identity(), Some(DepthImage::new(4, 4)));
        assert!(coverage(&f, &k, 0.1, &DepthRange::default()).unwrap().is_empty());
        let no_depth = frame_at(Pose::identity(), None);
        assert!(matches!(coverage(&no_depth, &k, 0.1, &DepthRange::default()), Err(MapError::NoDepth { .. })));
    }

    #[test]
    fn coverage_single_pixel_floor_arithmetic() {
        let k = CameraIntrinsics::new(2.0, 2.0, 2.0, 2.0, 4, 4).unwrap();
        let mut depth = DepthImage::new(4, 4);
        depth.set(2, 2, 1.0);
        // pixel (2,2) is the principal point: camera point (0,0,1) is one
        // meter ahead of the body along +x.
        let body = Pose::planar(0.05, 2.33, 0.5, 0.0);
        let f = frame_at(body, Some(depth));
        let cells = coverage(&f, &k, 0.1, &DepthRange::default()).unwrap();
        let p = body.compose(&body_from_camera()).transform_point(&crate::geometry::Vec3::new(0.0, 0.0, 1.0));
        assert!((p.x - 1.05).abs() < 1e-12 && (p.y - 2.33).abs() < 1e-12);
        assert_eq!(cells.into_iter().collect::<Vec<_>>(), vec![(10, 23)]);
    }

    fn segment_at(xs: &[f64]) -> Segment {
        Segment {
            intrinsics: CameraIntrinsics::default_sim(),
            frames: xs
                .iter()
                .enumerate()
                .map(|(i, &x)| SegmentFrame {
                    timestamp: i as f64,
                    ..frame_at(Pose::planar(x, 0.0, 0.0, 0.0), None)
                })
                .collect(),
        }
    }

    #[test]
    fn geomonly_examples() {
        assert_eq!(select_keyframes_geomonly(&segment_at(&[0.0, 0.01, 0.02]), 1.0).unwrap(), vec![0]);
        assert_eq!(select_keyframes_geomonly(&segment_at(&[0.0, 1.5, 3.0]), 1.0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn geomonly_matches_voxel_hash_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let frames: Vec<SegmentFrame> = (0..100)
            .map(|i| SegmentFrame {
                timestamp: i as f64,
                ..frame_at(Pose::planar(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), 0.0, 0.0), None)
            })
            .collect();
        let seg = Segment {
            intrinsics: CameraIntrinsics::default_sim(),
            frames,
        };
        let res = 1.0;
        let picked = select_keyframes_geomonly(&seg, res).unwrap();
        // oracle: voxel → smallest frame index landing in it
        let mut first: std::collections::BTreeMap<(i64, i64, i64), usize> = Default::default();
        for (i, f) in seg.frames.iter().enumerate() {
            let t = f.pose.translation();
            first.entry(((t.x / res).floor() as i64, (t.y / res).floor() as i64, (t.z / res).floor() as i64)).or_insert(i);
        }
        let mut expected: Vec<usize> = first.into_values().collect();
        expected.sort_unstable();
        assert_eq!(picked, expected);
        // no two kept frames share a voxel
        let keys: HashSet<_> = picked
            .iter()
            .map(|&i| {
                let t = seg.frames[i].pose.translation();
                ((t.x / res).floor() as i64, (t.y / res).floor() as i64)
            })
            .collect();
        assert_eq!(keys.len(), picked.len());
    }
}
