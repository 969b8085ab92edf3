//! Deterministic 2.5D simulator: textured grid worlds, a ray-cast RGB-D
//! camera with landmark annotations, and a planar robot with drifting
//! odometry.

mod presets;
mod render;
mod robot;
mod segment;
mod world;

pub use presets::{campus_streets, Preset, PRESET_CELL, PRESET_WALL_HEIGHT};
pub use render::{cast_ray, render, surface_intensity, RayHit, SimFrame, Surface, SKY_INTENSITY, TEXTURE_QUANTUM};
pub use robot::{OdomNoise, RobotLimits, SimRobot, StepResult};
pub use segment::{generate_segment, pursuit_command, FrameTrigger, Rates, SegmentConfig, SegmentRun};
pub use world::{face_plane, Face, GridWorld, Landmark, PlaneId, LANDMARKS_PER_FACE, PLANE_FLOOR, PLANE_NONE};

use thiserror::Error;

use crate::textio::FormatError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("pose ({x:.3}, {y:.3}) is inside an obstacle")]
    PoseInCollision { x: f64, y: f64 },
    #[error("waypoint {index} could not be reached")]
    UnreachableWaypoint { index: usize },
    #[error("{0}")]
    Format(FormatError),
}
