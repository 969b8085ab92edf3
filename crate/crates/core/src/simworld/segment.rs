use super::render::render;
use super::robot::{OdomNoise, RobotLimits, SimRobot};
use super::world::GridWorld;
use super::SimError;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::mapgraph::{Segment, SegmentFrame};

/// When the camera fires while driving a route.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrameTrigger {
    /// Frames per second of simulated time.
    Rate(f64),
    /// One frame every this many meters travelled.
    Distance(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub odom_hz: f64,
    pub camera: FrameTrigger,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            odom_hz: 15.0,
            camera: FrameTrigger::Rate(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentConfig {
    pub rates: Rates,
    pub camera_height: f64,
    pub limits: RobotLimits,
    pub noise: OdomNoise,
    /// A waypoint counts as reached within this distance.
    pub reach_tolerance: f64,
    /// Seconds allowed per waypoint beyond the nominal travel time.
    pub waypoint_slack: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            rates: Rates::default(),
            camera_height: 0.6,
            limits: RobotLimits::default(),
            noise: OdomNoise::default(),
            reach_tolerance: 0.1,
            waypoint_slack: 30.0,
        }
    }
}

/// A driven route: rendered segment plus the odometry and ground-truth
/// streams at the odometry rate.
#[derive(Clone, Debug)]
pub struct SegmentRun {
    pub segment: Segment,
    /// `(timestamp, body-frame delta)` for each odometry tick.
    pub odometry: Vec<(f64, Pose)>,
    /// Ground-truth body pose at `t = 0` and after each tick.
    pub ground_truth: Vec<(f64, Pose)>,
}

/// Pursuit command toward `target` (world x, y) from `pose`.
pub fn pursuit_command(pose: &Pose, target: (f64, f64), limits: &RobotLimits, dt: f64) -> (f64, f64) {
    let local = pose.inverse().transform_point(&crate::geometry::Vec3::new(target.0, target.1, pose.translation().z));
    let dist = local.x.hypot(local.y);
    let bearing = local.y.atan2(local.x);
    let w = (2.5 * bearing).clamp(-limits.max_angular, limits.max_angular);
    if bearing.abs() > 0.35 {
        (0.0, w)
    } else {
        (limits.max_linear.min(dist / dt), w)
    }
}

/// Drives the robot through `waypoints` (world x, y), rendering frames per
/// the camera trigger. The start pose is the first waypoint facing the second.
pub fn generate_segment(
    world: &GridWorld,
    waypoints: &[(f64, f64)],
    k: &CameraIntrinsics,
    config: &SegmentConfig,
    seed: u64,
) -> Result<SegmentRun, SimError> {
    let first = *waypoints.first().ok_or(SimError::UnreachableWaypoint { index: 0 })?;
    let yaw = waypoints
        .iter()
        .skip(1)
        .find(|w| (w.0 - first.0).hypot(w.1 - first.1) > 1e-9)
        .map_or(0.0, |w| (w.1 - first.1).atan2(w.0 - first.0));
    let start = Pose::planar(first.0, first.1, config.camera_height, yaw);
    for (index, w) in waypoints.iter().enumerate() {
        if !world.disk_free(w.0, w.1, config.limits.radius) {
            return Err(SimError::UnreachableWaypoint { index });
        }
    }
    let mut robot = SimRobot::new(start, config.limits, config.noise, seed);
    let dt = 1.0 / config.rates.odom_hz;
    let mut frames = vec![SegmentFrame {
        observation: render(world, &start, k)?.into_observation(),
        pose: start,
        timestamp: 0.0,
    }];
    let mut odometry = Vec::new();
    let mut ground_truth = vec![(0.0, start)];
    let mut tick: u64 = 0;
    let mut travelled = 0.0;
    let mut next_mark = match config.rates.camera {
        FrameTrigger::Rate(hz) => 1.0 / hz,
        FrameTrigger::Distance(d) => d,
    };
    for (index, &target) in waypoints.iter().enumerate().skip(1) {
        let here = robot.gt_pose().translation();
        let nominal = (target.0 - here.x).hypot(target.1 - here.y) / config.limits.max_linear
            + std::f64::consts::PI / config.limits.max_angular;
        let deadline = tick as f64 * dt + nominal + config.waypoint_slack;
        loop {
            let p = robot.gt_pose().translation();
            if (target.0 - p.x).hypot(target.1 - p.y) < config.reach_tolerance {
                break;
            }
            if tick as f64 * dt > deadline {
                return Err(SimError::UnreachableWaypoint { index });
            }
            let cmd = pursuit_command(robot.gt_pose(), target, &config.limits, dt);
            let step = robot.step(world, cmd, dt);
            tick += 1;
            let t = tick as f64 * dt;
            travelled += step.distance;
            odometry.push((t, step.odom_delta));
            ground_truth.push((t, step.gt_pose));
            let fire = match config.rates.camera {
                FrameTrigger::Rate(_) => t >= next_mark - 1e-9,
                FrameTrigger::Distance(_) => travelled >= next_mark - 1e-9,
            };
            if fire {
                frames.push(SegmentFrame {
                    observation: render(world, &step.gt_pose, k)?.into_observation(),
                    pose: step.gt_pose,
                    timestamp: t,
                });
                next_mark += match config.rates.camera {
                    FrameTrigger::Rate(hz) => 1.0 / hz,
                    FrameTrigger::Distance(d) => d,
                };
            }
        }
    }
    let last = frames.last().expect("start frame").pose;
    let end = *robot.gt_pose();
    if last.translation_distance(&end) > 1e-6 || last.rotation_angle_to(&end) > 1e-6 {
        frames.push(SegmentFrame {
            observation: render(world, &end, k)?.into_observation(),
            pose: end,
            timestamp: tick as f64 * dt,
        });
    }
    Ok(SegmentRun {
        segment: Segment {
            intrinsics: *k,
            frames,
        },
        odometry,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> GridWorld {
        let mut rows = vec!["#".repeat(30)];
        for _ in 0..4 {
            rows.push(format!("#{}#", ".".repeat(28)));
        }
        rows.push("#".repeat(30));
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        GridWorld::from_rows(&refs, 0.5, 2.5, 11).unwrap()
    }

    #[test]
    fn single_waypoint_gives_one_frame() {
        let w = straight();
        let run = generate_segment(&w, &[(2.0, 1.25)], &CameraIntrinsics::default_sim(), &SegmentConfig::default(), 1).unwrap();
        assert_eq!(run.segment.frames.len(), 1);
        assert!(run.odometry.is_empty());
    }

    #[test]
    fn ten_meters_at_one_frame_per_meter() {
        let w = straight();
        let cfg = SegmentConfig {
            rates: Rates {
                odom_hz: 15.0,
                camera: FrameTrigger::Distance(1.0),
            },
            noise: OdomNoise::zero(),
            reach_tolerance: 1e-6,
            ..SegmentConfig::default()
        };
        let run = generate_segment(&w, &[(2.0, 1.25), (12.0, 1.25)], &CameraIntrinsics::default_sim(), &cfg, 1).unwrap();
        let xs: Vec<f64> = run.segment.frames.iter().map(|f| f.pose.translation().x).collect();
        assert_eq!(xs.len(), 11, "{xs:?}");
        assert!(xs.windows(2).all(|p| p[1] > p[0]));
        assert!((xs[10] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn replaying_ground_truth_reproduces_frames() {
        let w = straight();
        let k = CameraIntrinsics::default_sim();
        let cfg = SegmentConfig::default();
        let run = generate_segment(&w, &[(2.0, 1.0), (8.0, 1.0), (8.0, 1.6), (3.0, 1.6)], &k, &cfg, 5).unwrap();
        assert!(run.segment.frames.len() > 5);
        for f in &run.segment.frames {
            let again = render(&w, &f.pose, &k).unwrap().into_observation();
            assert_eq!(again, f.observation);
        }
    }

    #[test]
    fn unreachable_waypoint_is_reported() {
        let w = straight();
        let r = generate_segment(&w, &[(2.0, 1.25), (0.2, 0.2)], &CameraIntrinsics::default_sim(), &SegmentConfig::default(), 1);
        assert!(matches!(r, Err(SimError::UnreachableWaypoint { index: 1 })));
    }
}
