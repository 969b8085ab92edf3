//! Map-lite visual localization and image-goal navigation.
//!
//! A two-level topo-metric map is built from posed RGB-D frames under a
//! keyframe budget. A camera is localized against it coarse to fine
//! (descriptor retrieval, pixel correspondences, PnP with RANSAC) and the
//! sparse fixes are fused with odometry in a pose graph. Navigation plans on
//! the connectivity graph and follows subgoals with a depth-based local
//! planner. Everything runs against a deterministic built-in simulator.

pub mod geometry;
pub mod imaging;
pub mod mapgraph;
pub mod matching;
pub mod nav;
pub mod observation;
pub mod pipeline;
pub mod poseslam;
pub mod relocal;
pub mod retrieval;
pub mod simworld;
pub mod textio;
pub mod trajectory;
