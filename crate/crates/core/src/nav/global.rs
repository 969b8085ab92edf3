use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::NavError;
use crate::geometry::{Pose, Vec3};
use crate::imaging::GrayImage;
use crate::mapgraph::TopoMetricMap;
use crate::retrieval::{extract_descriptor, top_k, RetrievalError};

/// Node path from start to goal plus the index of the current subgoal.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPlan {
    pub node_path: Vec<u32>,
    pub subgoal_index: usize,
    /// Sum of CnG edge weights along the path, meters.
    pub cost: f64,
}

impl GlobalPlan {
    pub fn goal(&self) -> u32 {
        *self.node_path.last().expect("plans are never empty")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Subgoal {
    /// Subgoal position in the robot frame.
    Target(Vec3),
    Done,
}

#[derive(PartialEq)]
struct Entry(f64, u32);

impl Eq for Entry {}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap and we pop the cheapest, then the
    // smallest id
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest CnG path by Dijkstra. Among equal-cost frontiers the smaller
/// node id is expanded first, and a tentative distance is only replaced by a
/// strictly smaller one, so the result is deterministic.
pub fn plan_global(map: &TopoMetricMap, start: u32, goal: u32) -> Result<GlobalPlan, NavError> {
    for id in [start, goal] {
        if map.node(id).is_none() {
            return Err(NavError::UnknownNode(id));
        }
    }
    let adj = map.cng_adjacency();
    let n = map.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<u32>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[start as usize] = 0.0;
    heap.push(Entry(0.0, start));
    while let Some(Entry(d, u)) = heap.pop() {
        if done[u as usize] {
            continue;
        }
        done[u as usize] = true;
        if u == goal {
            break;
        }
        for &(v, w) in &adj[u as usize] {
            let nd = d + w;
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                prev[v as usize] = Some(u);
                heap.push(Entry(nd, v));
            }
        }
    }
    if !dist[goal as usize].is_finite() {
        return Err(NavError::NoPath { start, goal });
    }
    let mut node_path = vec![goal];
    while let Some(p) = prev[*node_path.last().unwrap() as usize] {
        node_path.push(p);
    }
    node_path.reverse();
    Ok(GlobalPlan {
        node_path,
        subgoal_index: 0,
        cost: dist[goal as usize],
    })
}

/// Map node best matching a goal image, with its similarity.
pub fn resolve_goal(map: &TopoMetricMap, goal_image: &GrayImage) -> Result<(u32, f64), NavError> {
    let d = extract_descriptor(goal_image)?;
    Ok(top_k(&d.values, map, 1)?.top1().ok_or(RetrievalError::EmptyMap)?)
}

fn horizontal_distance(a: &Vec3, b: &Vec3) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Advances the plan cursor past every subgoal closer than `switch_radius`
/// and returns the current one in the robot frame. Distances are measured
/// in the ground plane.
pub fn next_subgoal(
    plan: &mut GlobalPlan,
    map: &TopoMetricMap,
    robot: &Pose,
    switch_radius: f64,
    goal_radius: f64,
) -> Result<Subgoal, NavError> {
    let last = plan.node_path.len() - 1;
    loop {
        let id = plan.node_path[plan.subgoal_index];
        let node = map.node(id).ok_or(NavError::UnknownNode(id))?;
        let d = horizontal_distance(node.position(), robot.translation());
        if plan.subgoal_index < last && d < switch_radius {
            plan.subgoal_index += 1;
            continue;
        }
        if plan.subgoal_index == last && d < goal_radius {
            return Ok(Subgoal::Done);
        }
        return Ok(Subgoal::Target(robot.inverse().transform_point(node.position())));
    }
}
