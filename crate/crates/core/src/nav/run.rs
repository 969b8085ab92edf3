use super::global::{next_subgoal, plan_global, resolve_goal, GlobalPlan, Subgoal};
use super::local::{obstacle_points, plan_local_points, LocalParams, PrimitiveSet};
use std::collections::VecDeque;
use super::NavError;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::imaging::GrayImage;
use crate::mapgraph::TopoMetricMap;
use crate::matching::{ClassicalMatcher, Matcher, OracleMatcher};
use crate::pipeline::{Pipeline, PipelineConfig, PipelineError};
use crate::simworld::{render, GridWorld, OdomNoise, RobotLimits, SimRobot};
use crate::textio::fmt_sig;

pub const NAV_CSV_HEADER: &str = "goal,goal_node,similarity,outcome,success,time_s,path_length_m,planned_length_m,final_error_m";

/// Correspondence source used by the localizer during navigation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NavMatcher {
    Classical,
    /// Simulator landmarks with outliers and pixel noise.
    Oracle { outlier_rate: f64, noise_px: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NavConfig {
    pub switch_radius: f64,
    /// Success radius around the goal node, judged on ground truth.
    pub goal_radius: f64,
    /// The planner stops once the estimate is this close to the goal. It is
    /// tighter than `goal_radius` to leave room for localization error.
    pub arrival_radius: f64,
    pub primitives: PrimitiveSet,
    pub local: LocalParams,
    /// Control period, seconds of model time.
    pub dt: f64,
    /// Localize on every n-th control tick.
    pub localize_every: u32,
    /// Model-time budget per goal, seconds.
    pub goal_timeout: f64,
    /// Turn rate used to look around while not localized, rad/s.
    pub search_turn_rate: f64,
    /// Obstacles from this many past frames are carried along by odometry,
    /// so a corner the camera has just passed still counts.
    pub obstacle_memory: usize,
    pub pipeline: PipelineConfig,
    pub limits: RobotLimits,
    pub odom_noise: OdomNoise,
    pub matcher: NavMatcher,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            switch_radius: 1.0,
            goal_radius: 0.5,
            arrival_radius: 0.3,
            primitives: PrimitiveSet::default(),
            local: LocalParams::default(),
            dt: 0.2,
            localize_every: 5,
            goal_timeout: 300.0,
            search_turn_rate: 0.5,
            obstacle_memory: 10,
            pipeline: PipelineConfig::default(),
            limits: RobotLimits::default(),
            odom_noise: OdomNoise::drifting(),
            matcher: NavMatcher::Oracle {
                outlier_rate: 0.2,
                noise_px: 0.5,
            },
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<(), NavError> {
        self.primitives.validate()?;
        let positive = [self.switch_radius, self.goal_radius, self.arrival_radius, self.dt, self.goal_timeout, self.local.robot_radius];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.localize_every == 0 {
            return Err(NavError::InvalidParams("radii, dt, timeout and rates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NavOutcome {
    /// The planner declared the goal reached.
    Arrived,
    Timeout,
    NoPath,
}

impl NavOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            NavOutcome::Arrived => "Arrived",
            NavOutcome::Timeout => "Timeout",
            NavOutcome::NoPath => "NoPath",
        }
    }
}

/// Result of driving to one goal image.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalReport {
    pub goal_node: u32,
    pub similarity: f64,
    pub outcome: NavOutcome,
    /// Arrived and the true position is within the goal radius.
    pub success: bool,
    /// Model time spent on this goal, seconds.
    pub time: f64,
    /// Ground-truth distance driven, meters.
    pub path_length: f64,
    /// CnG length of the global plan, meters. Zero if no plan was made.
    pub planned_length: f64,
    /// True horizontal distance to the goal node at the end, meters.
    pub final_error: f64,
}

impl GoalReport {
    pub fn csv_row(&self, index: usize) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            index,
            self.goal_node,
            fmt_sig(self.similarity, 9),
            self.outcome.as_str(),
            u8::from(self.success),
            fmt_sig(self.time, 9),
            fmt_sig(self.path_length, 9),
            fmt_sig(self.planned_length, 9),
            fmt_sig(self.final_error, 9)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NavReport {
    pub goals: Vec<GoalReport>,
    /// Ground-truth body poses, one per control tick.
    pub trajectory: Vec<(f64, Pose)>,
    /// Localizer output per tick while tracking.
    pub estimated: Vec<(f64, Pose)>,
}

impl NavReport {
    pub fn success(&self) -> bool {
        self.goals.iter().all(|g| g.success)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(NAV_CSV_HEADER);
        s.push('\n');
        for (i, g) in self.goals.iter().enumerate() {
            s.push_str(&g.csv_row(i));
            s.push('\n');
        }
        s
    }
}

/// A robot in a simulated world, localizing against a map and driving to
/// goal images one after another. Model time and both trajectories carry
/// over between goals.
pub struct Navigator<'a> {
    world: &'a GridWorld,
    map: &'a TopoMetricMap,
    k: CameraIntrinsics,
    config: NavConfig,
    robot: SimRobot,
    pipeline: Pipeline,
    matcher: Box<dyn Matcher>,
    tick: u64,
    /// Recent obstacle points in the current body frame, newest first.
    memory: VecDeque<Vec<(f64, f64)>>,
    report: NavReport,
}

impl<'a> Navigator<'a> {
    pub fn new(
        world: &'a GridWorld,
        map: &'a TopoMetricMap,
        k: CameraIntrinsics,
        start: Pose,
        config: NavConfig,
        seed: u64,
    ) -> Result<Self, NavError> {
        config.validate()?;
        let t = start.translation();
        if !world.disk_free(t.x, t.y, config.limits.radius) {
            return Err(NavError::Sim(crate::simworld::SimError::PoseInCollision { x: t.x, y: t.y }));
        }
        let matcher: Box<dyn Matcher> = match config.matcher {
            NavMatcher::Classical => Box::new(ClassicalMatcher::default()),
            NavMatcher::Oracle { outlier_rate, noise_px } => Box::new(
                OracleMatcher::new(outlier_rate, noise_px, seed ^ 0x6d61_7463)
                    .map_err(|e| NavError::InvalidParams(e.to_string()))?,
            ),
        };
        Ok(Self {
            world,
            map,
            k,
            robot: SimRobot::new(start, config.limits, config.odom_noise, seed),
            pipeline: Pipeline::new(config.pipeline),
            config,
            matcher,
            tick: 0,
            memory: VecDeque::new(),
            report: NavReport {
                trajectory: vec![(0.0, start)],
                ..NavReport::default()
            },
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn gt_pose(&self) -> &Pose {
        self.robot.gt_pose()
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn report(&self) -> &NavReport {
        &self.report
    }

    pub fn into_report(self) -> NavReport {
        self.report
    }

    fn remember(&mut self, seen: Vec<(f64, f64)>, odom_delta: &Pose) {
        let reach = self.config.primitives.length + self.config.local.robot_radius;
        self.memory.push_front(seen.into_iter().filter(|(x, y)| x.hypot(*y) <= reach).collect());
        self.memory.truncate(self.config.obstacle_memory);
        // re-express everything in the body frame after the move
        let back = odom_delta.inverse();
        for frame in &mut self.memory {
            for pt in frame.iter_mut() {
                let q = back.transform_point(&crate::geometry::Vec3::new(pt.0, pt.1, 0.0));
                *pt = (q.x, q.y);
            }
        }
    }

    fn true_distance_to(&self, node: u32) -> f64 {
        let p = self.map.node(node).expect("resolved node").position();
        let g = self.robot.gt_pose().translation();
        (p.x - g.x).hypot(p.y - g.y)
    }

    /// Drives until the planner reports arrival at the node matching
    /// `goal_image` or the goal's time budget runs out.
    pub fn go_to(&mut self, goal_image: &GrayImage) -> Result<GoalReport, NavError> {
        let (goal_node, similarity) = resolve_goal(self.map, goal_image)?;
        let t0 = self.time();
        let mut path_length = 0.0;
        let mut plan: Option<GlobalPlan> = None;
        let finish = |nav: &Self, outcome: NavOutcome, path_length: f64, plan: &Option<GlobalPlan>| {
            let final_error = nav.true_distance_to(goal_node);
            GoalReport {
                goal_node,
                similarity,
                outcome,
                success: outcome == NavOutcome::Arrived && final_error <= nav.config.goal_radius,
                time: nav.time() - t0,
                path_length,
                planned_length: plan.as_ref().map_or(0.0, |p| p.cost),
                final_error,
            }
        };
        loop {
            let frame = render(self.world, self.robot.gt_pose(), &self.k)?;
            let seen = obstacle_points(&frame.depth, &self.k, &self.config.local);
            // while searching, every frame is worth a try
            let searching = self.pipeline.current_pose().is_none();
            if searching || self.tick.is_multiple_of(self.config.localize_every as u64) {
                let (obs, now) = (frame.observation(), self.time());
                self.pipeline.on_observation(&obs, &self.k, self.map, self.matcher.as_mut(), now)?;
            }
            let cmd = match self.pipeline.current_pose() {
                None => (0.0, self.config.search_turn_rate),
                Some(est) => {
                    if plan.is_none() {
                        // plan from the node nearest the current estimate
                        let start = self.map.nearest_node(est.translation()).ok_or(NavError::UnknownNode(0))?;
                        match plan_global(self.map, start, goal_node) {
                            Ok(p) => plan = Some(p),
                            Err(NavError::NoPath { .. }) => {
                                let r = finish(self, NavOutcome::NoPath, path_length, &None);
                                self.report.goals.push(r.clone());
                                return Ok(r);
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    let p = plan.as_mut().expect("planned above");
                    match next_subgoal(p, self.map, &est, self.config.switch_radius, self.config.arrival_radius)? {
                        Subgoal::Done => {
                            let r = finish(self, NavOutcome::Arrived, path_length, &plan);
                            self.report.goals.push(r.clone());
                            return Ok(r);
                        }
                        Subgoal::Target(v) => {
                            let mut points = seen.clone();
                            points.extend(self.memory.iter().flatten());
                            plan_local_points(&points, &v, &self.config.primitives, &self.config.local).command
                        }
                    }
                }
            };
            if self.time() - t0 >= self.config.goal_timeout {
                let r = finish(self, NavOutcome::Timeout, path_length, &plan);
                self.report.goals.push(r.clone());
                return Ok(r);
            }
            let step = self.robot.step(self.world, cmd, self.config.dt);
            self.tick += 1;
            let t = self.time();
            path_length += step.distance;
            self.remember(seen, &step.odom_delta);
            self.report.trajectory.push((t, step.gt_pose));
            match self.pipeline.on_odometry(&step.odom_delta, t) {
                Ok(p) => self.report.estimated.push((t, p)),
                Err(PipelineError::NotLocalized) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Draws `count` goal nodes with a seeded generator. Each goal is at least
/// `min_separation` meters of CnG path away from the previous one, starting
/// from `start`.
pub fn pick_goal_nodes(map: &TopoMetricMap, start: u32, count: usize, min_separation: f64, seed: u64) -> Result<Vec<u32>, NavError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut goals = Vec::with_capacity(count);
    let mut from = start;
    while goals.len() < count {
        let far: Vec<u32> = (0..map.len() as u32)
            .filter(|&g| plan_global(map, from, g).is_ok_and(|p| p.cost >= min_separation))
            .collect();
        if far.is_empty() {
            return Err(NavError::InvalidParams(format!("no node is {min_separation} m away from node {from}")));
        }
        from = far[rng.random_range(0..far.len())];
        goals.push(from);
    }
    Ok(goals)
}

/// Drives to each goal image in order from `start`.
pub fn run_navigation(
    world: &GridWorld,
    map: &TopoMetricMap,
    k: CameraIntrinsics,
    start: Pose,
    goal_images: &[GrayImage],
    config: &NavConfig,
    seed: u64,
) -> Result<NavReport, NavError> {
    let mut nav = Navigator::new(world, map, k, start, config.clone(), seed)?;
    for g in goal_images {
        nav.go_to(g)?;
    }
    Ok(nav.into_report())
}
