use super::NavError;
use crate::geometry::{body_from_camera, CameraIntrinsics, Vec3};
use crate::imaging::DepthImage;

/// Fan of constant-curvature arcs starting at the robot, heading +x.
/// Rotating in place is always available on top of the arcs.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveSet {
    /// Curvatures in 1/m, left positive.
    pub curvatures: Vec<f64>,
    /// Arc length, meters.
    pub length: f64,
    /// Sample spacing along the arc, meters.
    pub ds: f64,
}

impl Default for PrimitiveSet {
    fn default() -> Self {
        Self {
            curvatures: vec![0.0, 0.2, -0.2, 0.5, -0.5, 1.0, -1.0],
            length: 2.0,
            ds: 0.1,
        }
    }
}

impl PrimitiveSet {
    /// Builds the symmetric fan `{0, ±k}` for the given magnitudes.
    pub fn symmetric(magnitudes: &[f64], length: f64, ds: f64) -> Result<Self, NavError> {
        let mut curvatures = vec![0.0];
        for &k in magnitudes {
            if !(k.is_finite() && k > 0.0) {
                return Err(NavError::InvalidParams(format!("curvature magnitude {k}")));
            }
            curvatures.extend([k, -k]);
        }
        let set = Self { curvatures, length, ds };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), NavError> {
        if !(self.length > 0.0 && self.ds > 0.0 && self.ds <= self.length) {
            return Err(NavError::InvalidParams(format!("arc length {} with spacing {}", self.length, self.ds)));
        }
        if !self.curvatures.contains(&0.0) {
            return Err(NavError::InvalidParams("the straight arc is missing".into()));
        }
        for k in &self.curvatures {
            if !self.curvatures.contains(&-k) {
                return Err(NavError::InvalidParams(format!("curvature {k} has no mirror")));
            }
        }
        Ok(())
    }

    /// Arc samples `(x, y, s)` at `s = ds, 2 ds, ..., length`. The start
    /// point is left out: it is where the robot already stands.
    pub fn samples(&self, kappa: f64) -> Vec<(f64, f64, f64)> {
        let n = (self.length / self.ds).round().max(1.0) as usize;
        (1..=n)
            .map(|i| {
                let s = (i as f64 * self.ds).min(self.length);
                if kappa.abs() < 1e-12 {
                    (s, 0.0, s)
                } else {
                    ((kappa * s).sin() / kappa, (1.0 - (kappa * s).cos()) / kappa, s)
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalParams {
    pub robot_radius: f64,
    /// Weight of `|κ|` in the arc score, meters per (1/m).
    pub lambda: f64,
    /// Height of the camera above the floor, meters.
    pub camera_height: f64,
    /// Points between these heights above the floor are obstacles.
    pub obstacle_min_height: f64,
    pub obstacle_max_height: f64,
    /// Only every n-th pixel row and column is lifted.
    pub pixel_stride: u32,
    pub max_linear: f64,
    pub max_angular: f64,
    /// An arc must get at least this much closer to the subgoal than the
    /// robot already is, otherwise the robot turns in place.
    pub min_progress: f64,
}

impl Default for LocalParams {
    fn default() -> Self {
        Self {
            robot_radius: 0.3,
            lambda: 0.1,
            camera_height: 0.6,
            obstacle_min_height: 0.1,
            obstacle_max_height: 2.0,
            pixel_stride: 3,
            max_linear: 1.0,
            max_angular: 1.5,
            min_progress: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LocalChoice {
    /// Index into [`PrimitiveSet::curvatures`].
    Arc(usize),
    RotateInPlace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPlan {
    pub choice: LocalChoice,
    /// `(v m/s, ω rad/s)`.
    pub command: (f64, f64),
}

/// Lifts a depth image into ground-plane obstacle points `(x, y)` in the
/// robot frame. Floor, ceiling and invalid pixels are dropped.
pub fn obstacle_points(depth: &DepthImage, k: &CameraIntrinsics, params: &LocalParams) -> Vec<(f64, f64)> {
    let r = body_from_camera();
    let stride = params.pixel_stride.max(1);
    let mut out = Vec::new();
    for v in (0..depth.height).step_by(stride as usize) {
        for u in (0..depth.width).step_by(stride as usize) {
            let d = depth.get(u, v) as f64;
            if !(d.is_finite() && d > 0.0) {
                continue;
            }
            let p: Vec3 = r.transform_point(&(k.ray(u as f64, v as f64) * d));
            let h = p.z + params.camera_height;
            if h >= params.obstacle_min_height && h <= params.obstacle_max_height {
                out.push((p.x, p.y));
            }
        }
    }
    out
}

fn arc_is_free(samples: &[(f64, f64, f64)], obstacles: &[(f64, f64)], radius: f64) -> bool {
    let r2 = radius * radius;
    samples.iter().all(|&(x, y, _)| obstacles.iter().all(|&(ox, oy)| (ox - x) * (ox - x) + (oy - y) * (oy - y) > r2))
}

/// Picks a motion primitive toward `subgoal` (robot frame) using one depth
/// frame. Each collision-free arc is scored by how close it comes to the
/// subgoal plus `λ·|κ|`; lowest score wins, earlier arcs on ties. When no
/// free arc makes progress the robot turns in place toward the subgoal.
pub fn plan_local(
    depth: &DepthImage,
    k: &CameraIntrinsics,
    subgoal: &Vec3,
    primitives: &PrimitiveSet,
    params: &LocalParams,
) -> LocalPlan {
    let obstacles = obstacle_points(depth, k, params);
    plan_local_points(&obstacles, subgoal, primitives, params)
}

pub(crate) fn plan_local_points(
    obstacles: &[(f64, f64)],
    subgoal: &Vec3,
    primitives: &PrimitiveSet,
    params: &LocalParams,
) -> LocalPlan {
    let (gx, gy) = (subgoal.x, subgoal.y);
    let here = gx.hypot(gy);
    // far points cannot touch any arc
    let reach = primitives.length + params.robot_radius;
    let near: Vec<(f64, f64)> = obstacles.iter().copied().filter(|(x, y)| x.hypot(*y) <= reach).collect();
    let mut best: Option<(f64, usize, f64)> = None;
    for (i, &kappa) in primitives.curvatures.iter().enumerate() {
        let samples = primitives.samples(kappa);
        let (closest, s_at) = samples
            .iter()
            .map(|&(x, y, s)| ((x - gx).hypot(y - gy), s))
            .fold((f64::INFINITY, 0.0), |acc, c| if c.0 < acc.0 { c } else { acc });
        if closest > here - params.min_progress || !arc_is_free(&samples, &near, params.robot_radius) {
            continue;
        }
        let score = closest + params.lambda * kappa.abs();
        if best.is_none_or(|(b, _, _)| score < b) {
            best = Some((score, i, s_at));
        }
    }
    match best {
        Some((_, i, s_at)) => {
            let kappa = primitives.curvatures[i];
            // slow down when the subgoal is reached early along the arc
            let mut v = params.max_linear * s_at.min(1.0);
            if (kappa * v).abs() > params.max_angular {
                v = params.max_angular / kappa.abs();
            }
            LocalPlan {
                choice: LocalChoice::Arc(i),
                command: (v, kappa * v),
            }
        }
        None => {
            let bearing = gy.atan2(gx);
            // straight ahead but blocked: pick a side deterministically
            let w = if bearing.abs() < 1e-3 { params.max_angular / 2.0 } else { (2.0 * bearing).clamp(-params.max_angular, params.max_angular) };
            LocalPlan {
                choice: LocalChoice::RotateInPlace,
                command: (0.0, w),
            }
        }
    }
}
