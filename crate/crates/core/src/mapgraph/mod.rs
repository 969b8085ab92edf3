//! Two-level topo-metric map.
//!
//! The connectivity level (CnG) links nodes a robot can drive between and is
//! used for planning; the covisibility level (CvG) links nodes whose images
//! share enough correspondences and is used for localization. Both levels
//! share one node set.

mod build;
mod keyframes;
mod segment_io;
mod store;

pub use build::{build_map, BuildParams, BuildReport, DisconnectedMap};
pub use keyframes::{coverage, greedy_max_coverage, select_keyframes, select_keyframes_geomonly, CellKey};
pub use segment_io::{load_segment, read_landmarks, save_segment, write_landmarks, SegmentFiles};
pub use store::{load_map, save_map, StorageReport, FORMAT_VERSION};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose, Vec3};
use crate::imaging::{DepthImage, GrayImage, ImageIoError};
use crate::observation::{LandmarkObs, Observation};
use crate::textio::FormatError;

pub const DEFAULT_DESCRIPTOR_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("frame {index} has no depth image")]
    NoDepth { index: usize },
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Format(FormatError),
    #[error("unsupported map format version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid map: {0}")]
    Invariant(String),
}

impl MapError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        MapError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A keyframe in the map.
#[derive(Clone, Debug, PartialEq)]
pub struct MapNode {
    pub id: u32,
    /// Body pose in the map's world frame.
    pub pose: Pose,
    /// Unit-norm global descriptor.
    pub descriptor: Vec<f32>,
    /// Stored keyframe image (`images/<id>.pgm` on disk).
    pub image: Option<GrayImage>,
    /// Stored keyframe depth (`depth/<id>.f32` on disk).
    pub depth: Option<DepthImage>,
    /// Simulator landmark annotations, kept for the oracle matcher.
    pub landmarks: Option<Vec<LandmarkObs>>,
}

impl MapNode {
    pub fn position(&self) -> &Vec3 {
        self.pose.translation()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CngEdge {
    pub a: u32,
    pub b: u32,
    /// Euclidean distance between the node positions, meters.
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CvgEdge {
    pub a: u32,
    pub b: u32,
    pub correspondences: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopoMetricMap {
    pub nodes: Vec<MapNode>,
    /// Sorted by `(a, b)`, `a < b`.
    pub cng_edges: Vec<CngEdge>,
    /// Sorted by `(a, b)`, `a < b`.
    pub cvg_edges: Vec<CvgEdge>,
    pub descriptor_dim: usize,
    pub grid_res: f64,
}

impl TopoMetricMap {
    pub fn empty(descriptor_dim: usize, grid_res: f64) -> Self {
        Self {
            nodes: Vec::new(),
            cng_edges: Vec::new(),
            cvg_edges: Vec::new(),
            descriptor_dim,
            grid_res,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: u32) -> Option<&MapNode> {
        self.nodes.get(id as usize)
    }

    pub fn cvg_neighbors(&self, id: u32) -> BTreeSet<u32> {
        self.cvg_edges
            .iter()
            .filter_map(|e| match (e.a == id, e.b == id) {
                (true, _) => Some(e.b),
                (_, true) => Some(e.a),
                _ => None,
            })
            .collect()
    }

    /// CnG adjacency lists with edge weights, neighbors in ascending id order.
    pub fn cng_adjacency(&self) -> Vec<Vec<(u32, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.cng_edges {
            adj[e.a as usize].push((e.b, e.weight));
            adj[e.b as usize].push((e.a, e.weight));
        }
        for list in &mut adj {
            list.sort_by_key(|(n, _)| *n);
        }
        adj
    }

    /// Node closest to `position` (Euclidean); lowest id on ties.
    pub fn nearest_node(&self, position: &Vec3) -> Option<u32> {
        let mut best: Option<(f64, u32)> = None;
        for n in &self.nodes {
            let d = (n.position() - position).norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, n.id));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Checks the structural invariants of the map.
    pub fn validate(&self) -> Result<(), MapError> {
        let n = self.nodes.len() as u32;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i as u32 {
                return Err(MapError::Invariant(format!("node {i} has id {}", node.id)));
            }
            if node.descriptor.len() != self.descriptor_dim {
                return Err(MapError::Invariant(format!("node {i} descriptor has {} entries", node.descriptor.len())));
            }
            let norm = node.descriptor.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(MapError::Invariant(format!("node {i} descriptor norm {norm}")));
            }
        }
        let check = |a: u32, b: u32, what: &str| -> Result<(), MapError> {
            if a >= b || b >= n {
                return Err(MapError::Invariant(format!("{what} edge ({a}, {b}) is not a < b < {n}")));
            }
            Ok(())
        };
        for w in self.cng_edges.windows(2) {
            if (w[0].a, w[0].b) >= (w[1].a, w[1].b) {
                return Err(MapError::Invariant("CnG edges not sorted/unique".into()));
            }
        }
        for w in self.cvg_edges.windows(2) {
            if (w[0].a, w[0].b) >= (w[1].a, w[1].b) {
                return Err(MapError::Invariant("CvG edges not sorted/unique".into()));
            }
        }
        for e in &self.cng_edges {
            check(e.a, e.b, "CnG")?;
            let d = (self.nodes[e.a as usize].position() - self.nodes[e.b as usize].position()).norm();
            if (d - e.weight).abs() > 1e-9 {
                return Err(MapError::Invariant(format!("CnG edge ({}, {}) weight {} != {d}", e.a, e.b, e.weight)));
            }
        }
        for e in &self.cvg_edges {
            check(e.a, e.b, "CvG")?;
        }
        Ok(())
    }
}

/// One recorded frame of a mapping traversal.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFrame {
    pub observation: Observation,
    pub pose: Pose,
    pub timestamp: f64,
}

/// Observations with known poses from one traversal.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<SegmentFrame>,
}

impl Segment {
    pub fn validate(&self) -> Result<(), MapError> {
        for (i, f) in self.frames.iter().enumerate() {
            if !f.pose.is_finite() {
                return Err(MapError::InvalidSegment(format!("frame {i} pose is not finite")));
            }
            if i > 0 && !(f.timestamp > self.frames[i - 1].timestamp) {
                return Err(MapError::InvalidSegment(format!("timestamps not increasing at frame {i}")));
            }
        }
        Ok(())
    }
}
