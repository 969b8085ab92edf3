use crate::imaging::{DepthImage, GrayImage};

/// A landmark seen in an image: simulator id, pixel, and z-depth along the
/// optical axis in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkObs {
    pub id: u32,
    pub u: f64,
    pub v: f64,
    pub range: f64,
}

/// One camera observation: intensity image with optional registered depth.
///
/// Landmark annotations are only present for simulator-generated data and
/// only consumed by the oracle matcher.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub color: GrayImage,
    pub depth: Option<DepthImage>,
    pub landmarks: Option<Vec<LandmarkObs>>,
}

impl Observation {
    pub fn from_color(color: GrayImage) -> Self {
        Self {
            color,
            depth: None,
            landmarks: None,
        }
    }
}
