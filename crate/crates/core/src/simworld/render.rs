use image::Luma;

use super::world::{face_plane, mix, Face, GridWorld, PlaneId, PLANE_FLOOR, PLANE_NONE};
use super::SimError;
use crate::geometry::{camera_pose, project, CameraIntrinsics, Pose, Vec3};
use crate::imaging::{DepthImage, GrayImage};
use crate::observation::{LandmarkObs, Observation};

/// Base lattice spacing of surface textures, meters.
pub const TEXTURE_QUANTUM: f64 = 0.05;
pub const SKY_INTENSITY: u8 = 235;

/// Tolerance for a landmark's depth test against the cast ray.
const LANDMARK_DEPTH_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surface {
    Floor,
    Wall { i: usize, j: usize, face: Face },
}

/// First surface hit by a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    /// Ray parameter; equals z-depth when the camera-frame direction has unit z.
    pub t: f64,
    pub point: Vec3,
    pub surface: Surface,
}

impl RayHit {
    pub fn plane(&self) -> PlaneId {
        match self.surface {
            Surface::Floor => PLANE_FLOOR,
            Surface::Wall { i, j, face } => face_plane(i, j, face),
        }
    }
}

/// A rendered camera frame with simulator ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SimFrame {
    pub color: GrayImage,
    pub depth: DepthImage,
    /// Plane id hit by each pixel's ray, row-major.
    pub planes: Vec<PlaneId>,
    pub landmark_obs: Vec<LandmarkObs>,
    /// Body pose the frame was rendered from.
    pub gt_pose: Pose,
}

impl SimFrame {
    pub fn observation(&self) -> Observation {
        Observation {
            color: self.color.clone(),
            depth: Some(self.depth.clone()),
            landmarks: Some(self.landmark_obs.clone()),
        }
    }

    pub fn into_observation(self) -> Observation {
        Observation {
            color: self.color,
            depth: Some(self.depth),
            landmarks: Some(self.landmark_obs),
        }
    }
}

/// Casts a ray with a 2D grid traversal (DDA) against wall columns and the
/// floor. Returns `None` when the ray escapes over the walls.
pub fn cast_ray(world: &GridWorld, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
    let s = world.cell_size();
    let (mut ci, mut cj) = world.cell_of(origin.x, origin.y);
    if world.is_occupied(ci, cj) {
        return None;
    }
    let axis = |o: f64, d: f64, c: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((c + 1) as f64 * s - o) / d, s / d)
        } else if d < 0.0 {
            (-1, (c as f64 * s - o) / d, -s / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_i, mut t_max_x, dt_x) = axis(origin.x, dir.x, ci);
    let (step_j, mut t_max_y, dt_y) = axis(origin.y, dir.y, cj);
    let t_floor = if dir.z < 0.0 { -origin.z / dir.z } else { f64::INFINITY };
    let hit_floor = |t: f64| RayHit {
        t,
        point: origin + dir * t,
        surface: Surface::Floor,
    };
    loop {
        let (t_next, along_x) = if t_max_x <= t_max_y { (t_max_x, true) } else { (t_max_y, false) };
        if t_floor <= t_next {
            return Some(hit_floor(t_floor));
        }
        if !t_next.is_finite() {
            return None;
        }
        if dir.z > 0.0 && origin.z + t_next * dir.z > world.wall_height() {
            return None;
        }
        let face = if along_x {
            ci += step_i;
            t_max_x += dt_x;
            if step_i > 0 { Face::XNeg } else { Face::XPos }
        } else {
            cj += step_j;
            t_max_y += dt_y;
            if step_j > 0 { Face::YNeg } else { Face::YPos }
        };
        if ci < 0 || cj < 0 || ci as usize >= world.width() || cj as usize >= world.height() {
            return None;
        }
        if world.is_occupied(ci, cj) {
            return Some(RayHit {
                t: t_next,
                point: origin + dir * t_next,
                surface: Surface::Wall {
                    i: ci as usize,
                    j: cj as usize,
                    face,
                },
            });
        }
    }
}

/// Smooth value noise in [-1, 1] on a lattice of spacing `scale`.
fn value_noise(key: u64, a: f64, b: f64, scale: f64) -> f64 {
    let (x, y) = (a / scale, b / scale);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (smooth(fx), smooth(fy));
    let lattice = |i: f64, j: f64| (mix(&[key, i as i64 as u64, j as i64 as u64]) % 2001) as f64 / 1000.0 - 1.0;
    let top = lattice(x0, y0) * (1.0 - sx) + lattice(x0 + 1.0, y0) * sx;
    let bottom = lattice(x0, y0 + 1.0) * (1.0 - sx) + lattice(x0 + 1.0, y0 + 1.0) * sx;
    top * (1.0 - sy) + bottom * sy
}

/// View-independent surface intensity at a world point: a flat shade per
/// cell face plus two octaves of value noise, the finer one at
/// [`TEXTURE_QUANTUM`].
pub fn surface_intensity(world: &GridWorld, hit: &RayHit) -> u8 {
    let seed = world.texture_seed();
    let p = hit.point;
    let (base_key, a, b) = match hit.surface {
        Surface::Floor => {
            let (i, j) = world.cell_of(p.x, p.y);
            (mix(&[seed, 0xf100, i as u64, j as u64]), p.x, p.y)
        }
        Surface::Wall { i, j, face } => {
            let along = match face {
                Face::XNeg | Face::XPos => p.y,
                Face::YNeg | Face::YPos => p.x,
            };
            (mix(&[seed, 0xa11, i as u64, j as u64, face.index() as u64]), along, p.z)
        }
    };
    let base = 70.0 + (base_key % 117) as f64;
    let coarse = value_noise(base_key ^ 0xc0a5e, a, b, 4.0 * TEXTURE_QUANTUM);
    let fine = value_noise(base_key ^ 0xf1e, a, b, 2.0 * TEXTURE_QUANTUM);
    (base + 60.0 * coarse + 30.0 * fine).round().clamp(0.0, 255.0) as u8
}

/// Renders intensity, depth, plane ids and visible landmarks for a body pose.
pub fn render(world: &GridWorld, pose: &Pose, k: &CameraIntrinsics) -> Result<SimFrame, SimError> {
    let cam = camera_pose(pose);
    let origin = *cam.translation();
    if !world.is_free_point(origin.x, origin.y) || !(origin.z > 0.0 && origin.z < world.wall_height()) {
        return Err(SimError::PoseInCollision {
            x: origin.x,
            y: origin.y,
        });
    }
    let rot = cam.rotation_matrix();
    let (w, h) = (k.width, k.height);
    let mut color = GrayImage::new(w, h);
    let mut depth = DepthImage::new(w, h);
    let mut planes = vec![PLANE_NONE; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let dir = rot * k.ray(x as f64, y as f64);
            match cast_ray(world, &origin, &dir) {
                Some(hit) => {
                    depth.set(x, y, hit.t as f32);
                    planes[(y * w + x) as usize] = hit.plane();
                    color.put_pixel(x, y, Luma([surface_intensity(world, &hit)]));
                }
                None => color.put_pixel(x, y, Luma([SKY_INTENSITY])),
            }
        }
    }
    let landmark_obs = visible_landmarks(world, &cam, k, &planes);
    Ok(SimFrame {
        color,
        depth,
        planes,
        landmark_obs,
        gt_pose: *pose,
    })
}

/// Landmarks that pass the depth test and whose 2×2 pixel neighborhood lies
/// entirely on the landmark's plane.
fn visible_landmarks(world: &GridWorld, cam: &Pose, k: &CameraIntrinsics, planes: &[PlaneId]) -> Vec<LandmarkObs> {
    let inv = cam.inverse();
    let rot = cam.rotation_matrix();
    let origin = *cam.translation();
    let mut out = Vec::new();
    for lm in world.landmarks() {
        let p = inv.transform_point(&lm.position);
        let Some((u, v)) = project(k, &p) else { continue };
        let (x0, y0) = (u.floor() as u32, v.floor() as u32);
        if x0 + 1 >= k.width || y0 + 1 >= k.height {
            continue;
        }
        let same_plane = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)]
            .iter()
            .all(|&(x, y)| planes[(y * k.width + x) as usize] == lm.plane);
        if !same_plane {
            continue;
        }
        let dir = rot * k.ray(u, v);
        match cast_ray(world, &origin, &dir) {
            Some(hit) if hit.plane() == lm.plane && (hit.t - p.z).abs() < LANDMARK_DEPTH_TOL => {
                out.push(LandmarkObs {
                    id: lm.id,
                    u,
                    v,
                    range: p.z,
                });
            }
            _ => {}
        }
    }
    out
}
