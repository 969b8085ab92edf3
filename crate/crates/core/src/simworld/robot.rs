use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::world::GridWorld;
use crate::geometry::Pose;

/// Odometry corruption model. Noise standard deviations grow with the square
/// root of the motion so drift accumulates as a random walk over distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdomNoise {
    /// Translation σ per √meter travelled (both body axes).
    pub trans_sigma_per_m: f64,
    /// Heading σ per √radian turned.
    pub rot_sigma_per_rad: f64,
    /// Heading σ per √meter travelled.
    pub yaw_sigma_per_m: f64,
    /// Multiplicative bias on forward motion.
    pub scale_bias: f64,
}

impl OdomNoise {
    pub fn zero() -> Self {
        Self {
            trans_sigma_per_m: 0.0,
            rot_sigma_per_rad: 0.0,
            yaw_sigma_per_m: 0.0,
            scale_bias: 0.0,
        }
    }

    /// 2 % scale bias on forward motion plus random walks in translation
    /// (2 % per √m) and heading.
    pub fn drifting() -> Self {
        Self {
            trans_sigma_per_m: 0.02,
            rot_sigma_per_rad: 0.01,
            yaw_sigma_per_m: 0.002,
            scale_bias: 0.02,
        }
    }
}

impl Default for OdomNoise {
    fn default() -> Self {
        Self::drifting()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotLimits {
    pub max_linear: f64,
    pub max_angular: f64,
    pub radius: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self {
            max_linear: 1.0,
            max_angular: 1.5,
            radius: 0.3,
        }
    }
}

/// Planar unicycle robot with a drifting odometer.
#[derive(Clone, Debug)]
pub struct SimRobot {
    gt_pose: Pose,
    pub limits: RobotLimits,
    pub noise: OdomNoise,
    rng: ChaCha8Rng,
}

/// Result of one simulation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub gt_pose: Pose,
    pub odom_delta: Pose,
    pub blocked: bool,
    /// Ground-truth distance moved, meters.
    pub distance: f64,
}

impl SimRobot {
    pub fn new(start: Pose, limits: RobotLimits, noise: OdomNoise, seed: u64) -> Self {
        Self {
            gt_pose: start,
            limits,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn gt_pose(&self) -> &Pose {
        &self.gt_pose
    }

    /// Integrates `(v, ω)` for `dt` seconds. A step that would bring the
    /// robot's disk into an occupied cell is cancelled.
    pub fn step(&mut self, world: &GridWorld, cmd: (f64, f64), dt: f64) -> StepResult {
        assert!(dt > 0.0, "dt must be positive");
        let v = cmd.0.clamp(-self.limits.max_linear, self.limits.max_linear);
        let w = cmd.1.clamp(-self.limits.max_angular, self.limits.max_angular);
        let dtheta = w * dt;
        let (dx, dy) = if dtheta.abs() < 1e-12 {
            (v * dt, 0.0)
        } else {
            ((v / w) * dtheta.sin(), (v / w) * (1.0 - dtheta.cos()))
        };
        let delta = Pose::planar(dx, dy, 0.0, dtheta);
        let candidate = self.gt_pose.compose(&delta);
        let t = candidate.translation();
        let blocked = !world.disk_free(t.x, t.y, self.limits.radius);
        let (true_delta, true_motion) = if blocked {
            (Pose::identity(), (0.0, 0.0, 0.0))
        } else {
            self.gt_pose = candidate;
            (delta, (dx, dy, dtheta))
        };
        let odom_delta = self.corrupt(true_motion);
        StepResult {
            gt_pose: self.gt_pose,
            odom_delta,
            blocked,
            distance: true_delta.translation().norm(),
        }
    }

    fn corrupt(&mut self, (dx, dy, dtheta): (f64, f64, f64)) -> Pose {
        let n = &self.noise;
        let s = (dx * dx + dy * dy).sqrt();
        let mut normal = || -> f64 { StandardNormal.sample(&mut self.rng) };
        let (e_x, e_y, e_r, e_y2) = (normal(), normal(), normal(), normal());
        let sig_t = n.trans_sigma_per_m * s.sqrt();
        let nx = dx * (1.0 + n.scale_bias) + sig_t * e_x;
        let ny = dy + sig_t * e_y;
        let nth = dtheta + n.rot_sigma_per_rad * dtheta.abs().sqrt() * e_r + n.yaw_sigma_per_m * s.sqrt() * e_y2;
        Pose::planar(nx, ny, 0.0, nth)
    }
}
