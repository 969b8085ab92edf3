use std::collections::BTreeMap;

use super::{CngEdge, CvgEdge, MapError, MapNode, Segment, TopoMetricMap};
use crate::matching::{MatchView, Matcher};
use crate::retrieval::{extract_descriptor, DESCRIPTOR_DIM};
use crate::simworld::GridWorld;

#[derive(Clone, Debug, PartialEq)]
pub struct BuildParams {
    /// Minimum correspondence count for a covisibility edge.
    pub covis_threshold: usize,
    /// Maximum node distance for a connectivity edge, meters.
    pub nav_radius: f64,
    /// Use the covisibility edges as connectivity edges.
    pub cng_from_cvg: bool,
    /// Pairs farther apart than this are not matched at all.
    pub covis_max_distance: Option<f64>,
    /// Free-space radius required along a connectivity edge.
    pub los_clearance: f64,
    /// Resolution recorded in the manifest (coverage grid), meters.
    pub grid_res: f64,
    pub store_images: bool,
    pub store_depth: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            covis_threshold: 50,
            nav_radius: 3.0,
            cng_from_cvg: false,
            covis_max_distance: Some(10.0),
            los_clearance: 0.25,
            grid_res: 0.1,
            store_images: true,
            store_depth: false,
        }
    }
}

/// Connected components of the connectivity graph, each sorted, ordered by
/// smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisconnectedMap {
    pub components: Vec<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct BuildReport {
    pub map: TopoMetricMap,
    /// Set when the connectivity graph has more than one component.
    pub disconnected: Option<DisconnectedMap>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub(crate) fn components(n: usize, edges: impl Iterator<Item = (u32, u32)>) -> Vec<Vec<u32>> {
    let mut parent: Vec<usize> = (0..n).collect();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a as usize), find(&mut parent, b as usize));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i as u32);
    }
    groups.into_values().collect()
}

/// Builds the two-level map from the selected keyframes. Node `i` is
/// `segment.frames[keyframe_indices[i]]`.
fn view(f: &super::SegmentFrame) -> MatchView<'_> {
    MatchView {
        image: &f.observation.color,
        landmarks: f.observation.landmarks.as_deref(),
    }
}

pub fn build_map(
    segment: &Segment,
    keyframe_indices: &[usize],
    params: &BuildParams,
    matcher: &mut dyn Matcher,
    world: Option<&GridWorld>,
) -> Result<BuildReport, MapError> {
    if params.covis_threshold == 0 || !(params.nav_radius > 0.0) {
        return Err(MapError::InvalidArgument("covis_threshold and nav_radius must be positive".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for &i in keyframe_indices {
        if i >= segment.frames.len() || !seen.insert(i) {
            return Err(MapError::InvalidArgument(format!("bad or repeated keyframe index {i}")));
        }
    }
    let mut map = TopoMetricMap::empty(DESCRIPTOR_DIM, params.grid_res);
    for (id, &i) in keyframe_indices.iter().enumerate() {
        let f = &segment.frames[i];
        let descriptor = extract_descriptor(&f.observation.color)
            .map_err(|e| MapError::InvalidSegment(format!("frame {i}: {e}")))?
            .values;
        map.nodes.push(MapNode {
            id: id as u32,
            pose: f.pose,
            descriptor,
            image: params.store_images.then(|| f.observation.color.clone()),
            depth: if params.store_depth { f.observation.depth.clone() } else { None },
            landmarks: f.observation.landmarks.clone(),
        });
    }

    let n = keyframe_indices.len();
    for a in 0..n {
        for b in a + 1..n {
            let (fa, fb) = (&segment.frames[keyframe_indices[a]], &segment.frames[keyframe_indices[b]]);
            let dist = fa.pose.translation_distance(&fb.pose);
            if params.covis_max_distance.is_some_and(|m| dist > m) {
                continue;
            }
            let count = matcher.correspond(a as u32, view(fa), view(fb)).len();
            if count >= params.covis_threshold {
                map.cvg_edges.push(CvgEdge {
                    a: a as u32,
                    b: b as u32,
                    correspondences: count as u32,
                });
            }
        }
    }

    let weight = |a: u32, b: u32| (map.nodes[a as usize].position() - map.nodes[b as usize].position()).norm();
    let mut cng = Vec::new();
    if params.cng_from_cvg {
        for e in &map.cvg_edges {
            cng.push(CngEdge {
                a: e.a,
                b: e.b,
                weight: weight(e.a, e.b),
            });
        }
    } else {
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                let d = weight(a, b);
                if d > params.nav_radius {
                    continue;
                }
                if let Some(w) = world {
                    let (pa, pb) = (map.nodes[a as usize].position(), map.nodes[b as usize].position());
                    if !w.line_of_sight((pa.x, pa.y), (pb.x, pb.y), params.los_clearance) {
                        continue;
                    }
                }
                cng.push(CngEdge { a, b, weight: d });
            }
        }
    }
    map.cng_edges = cng;

    let comps = components(n, map.cng_edges.iter().map(|e| (e.a, e.b)));
    let disconnected = (comps.len() > 1).then(|| {
        log::warn!("map connectivity graph has {} components", comps.len());
        DisconnectedMap { components: comps }
    });
    Ok(BuildReport { map, disconnected })
}
