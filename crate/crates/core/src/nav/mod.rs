//! Image-goal navigation: Dijkstra on the connectivity graph, a subgoal
//! cursor, a depth-only motion primitive planner, and the closed loop
//! against the simulator.

mod global;
mod local;
mod run;

pub use global::{next_subgoal, plan_global, resolve_goal, GlobalPlan, Subgoal};
pub use local::{obstacle_points, plan_local, LocalChoice, LocalParams, LocalPlan, PrimitiveSet};
pub use run::{pick_goal_nodes, run_navigation, GoalReport, NavConfig, NavMatcher, NavOutcome, NavReport, Navigator, NAV_CSV_HEADER};

pub use crate::trajectory::{compute_ate, AteReport};

use thiserror::Error;

use crate::pipeline::PipelineError;
use crate::retrieval::RetrievalError;
use crate::simworld::SimError;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("node {0} is not in the map")]
    UnknownNode(u32),
    #[error("no path from node {start} to node {goal}")]
    NoPath { start: u32, goal: u32 },
    #[error("invalid navigation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
