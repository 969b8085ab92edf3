//! Rigid-body transforms, SE(3) tangent algebra and the pinhole camera model.
//!
//! Rotations are Hamilton unit quaternions stored with a non-negative scalar
//! part so that every rotation has exactly one representation. Perturbations
//! act on the right: `x ← x · exp(δ)` with `δ = [ρ, φ]` (translation first).
//!
//! Poses describe the robot body frame (x forward, y left, z up). The optical
//! camera frame (x right, y down, z forward) is co-located with the body and
//! related to it by the fixed rotation [`body_from_camera`].

use nalgebra::{Matrix3, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};
use std::fmt;
use std::ops::Mul;
use thiserror::Error;

use crate::textio::fmt_sig;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = Matrix6<f64>;

/// Angle margin below π at which the SE(3) logarithm is considered singular.
pub const LOG_SINGULARITY_MARGIN: f64 = 1e-6;
/// Projections closer than this to the camera plane are out of view.
pub const DEFAULT_Z_MIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    NearSingularRotation { angle: f64 },
    #[error("depth {depth} m outside the valid range ({min}, {max})")]
    InvalidDepth { depth: f64, min: f64, max: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("cannot parse pose from {0:?}")]
    Parse(String),
}

/// A rigid transform `[t, q]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    t: Vec3,
    q: UnitQuaternion<f64>,
}

// Renormalizes only when the norm has drifted, so already-unit values (e.g.
// parsed from text) keep their exact bits.
fn canonical(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let q = if q.w < 0.0 { -q } else { q };
    if (q.norm_squared() - 1.0).abs() > 1e-14 {
        UnitQuaternion::from_quaternion(q)
    } else {
        UnitQuaternion::new_unchecked(q)
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            t: Vec3::zeros(),
            q: UnitQuaternion::identity(),
        }
    }

    pub fn new(t: Vec3, q: UnitQuaternion<f64>) -> Self {
        Self {
            t,
            q: canonical(q.into_inner()),
        }
    }

    /// Builds a pose from raw `[qw, qx, qy, qz]`, normalizing the quaternion.
    pub fn from_components(t: [f64; 3], wxyz: [f64; 4]) -> Self {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        Self {
            t: Vec3::from(t),
            q: canonical(q),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(t, UnitQuaternion::identity())
    }

    pub fn from_rotation(q: UnitQuaternion<f64>) -> Self {
        Self::new(Vec3::zeros(), q)
    }

    /// Planar pose at height `z` with heading `yaw` about world +z.
    pub fn planar(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(
            Vec3::new(x, y, z),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        )
    }

    pub fn translation(&self) -> &Vec3 {
        &self.t
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.q
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.q.to_rotation_matrix().into_inner()
    }

    /// Heading about world +z, meaningful for planar poses.
    pub fn yaw(&self) -> f64 {
        let fwd = self.q * Vec3::x();
        fwd.y.atan2(fwd.x)
    }

    /// `[qw, qx, qy, qz]`
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.q.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(self.t + self.q * other.t, self.q * other.q)
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.q.inverse();
        Pose::new(-(qi * self.t), qi)
    }

    /// Relative transform `a⁻¹ · b`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.q * p + self.t
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().all(|v| v.is_finite()) && self.quaternion_wxyz().iter().all(|v| v.is_finite())
    }

    /// Geodesic rotation angle between two poses, radians in `[0, π]`.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.q.inverse() * other.q))
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.t - other.t).norm()
    }

    /// Space separated `x y z qw qx qy qz` with 17 significant digits.
    pub fn to_text(&self) -> String {
        let q = self.quaternion_wxyz();
        [self.t.x, self.t.y, self.t.z, q[0], q[1], q[2], q[3]]
            .iter()
            .map(|v| fmt_sig(*v, 17))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_values(v: &[f64]) -> Result<Pose, GeometryError> {
        if v.len() != 7 || v.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::Parse(format!("{v:?}")));
        }
        let n = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
        if n < 1e-12 {
            return Err(GeometryError::Parse(format!("{v:?}")));
        }
        Ok(Pose::from_components([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]))
    }

    pub fn from_text(line: &str) -> Result<Pose, GeometryError> {
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) => Pose::from_values(&v),
            Err(_) => Err(GeometryError::Parse(line.to_string())),
        }
    }

    /// `self · exp(δ)`
    pub fn retract(&self, delta: &Tangent) -> Pose {
        self.compose(&delta.exp())
    }

    /// SE(3) logarithm.
    pub fn log(&self) -> Result<Tangent, GeometryError> {
        let angle = rotation_angle(&self.q);
        if angle >= std::f64::consts::PI - LOG_SINGULARITY_MARGIN {
            return Err(GeometryError::NearSingularRotation { angle });
        }
        let phi = so3_log(&self.q);
        let rho = so3_left_jacobian_inv(&phi) * self.t;
        Ok(Tangent::from_parts(rho, phi))
    }

    /// Adjoint matrix for `(ρ, φ)` ordered tangents.
    pub fn adjoint(&self) -> Mat6 {
        let r = self.rotation_matrix();
        let mut ad = Mat6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&(hat(&self.t) * r));
        ad
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Free-function forms matching the operation names used across the crate.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn between(a: &Pose, b: &Pose) -> Pose {
    a.between(b)
}

/// Local perturbation `[ρ, φ]` of a pose: translation part in meters,
/// rotation part in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tangent(pub Vector6<f64>);

impl Tangent {
    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn from_parts(rho: Vec3, phi: Vec3) -> Self {
        Self(Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
    }

    pub fn rho(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn phi(&self) -> Vec3 {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn exp(&self) -> Pose {
        let phi = self.phi();
        let q = UnitQuaternion::from_scaled_axis(phi);
        Pose::new(so3_left_jacobian(&phi) * self.rho(), q)
    }
}

pub fn exp(delta: &Tangent) -> Pose {
    delta.exp()
}

pub fn log(pose: &Pose) -> Result<Tangent, GeometryError> {
    pose.log()
}

pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation angle in `[0, π]`, accurate for tiny angles.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

fn so3_log(q: &UnitQuaternion<f64>) -> Vec3 {
    let q = canonical(q.into_inner());
    let qq = q.quaternion();
    let v = qq.imag();
    let s = v.norm();
    if s < 1e-300 {
        return Vec3::zeros();
    }
    let angle = 2.0 * s.atan2(qq.w);
    v * (angle / s)
}

/// Left Jacobian of SO(3); also the `V` matrix of the SE(3) exponential.
pub fn so3_left_jacobian(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let k = hat(phi);
    let (a, b) = if theta < 1e-4 {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Mat3::identity() + k * a + k * k * b
}

pub fn so3_left_jacobian_inv(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let k = hat(phi);
    let c = if theta < 1e-4 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Mat3::identity() - k * 0.5 + k * k * c
}

/// Coupling block `Q(ρ, φ)` of the SE(3) left Jacobian.
fn se3_q(rho: &Vec3, phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let p = hat(phi);
    let r = hat(rho);
    let (c1, c2, c3) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 / 6.0 - t2 / 120.0, 1.0 / 24.0 - t2 / 720.0, 1.0 / 120.0 - t2 / 2520.0)
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let pp = p * p;
    r * 0.5 + (pr + rp + prp) * c1 + (pp * r + rp * p - prp * 3.0) * c2 + (prp * p + pp * r * p) * c3
}

/// Left Jacobian of SE(3) for `(ρ, φ)` ordered tangents.
pub fn se3_left_jacobian(xi: &Tangent) -> Mat6 {
    let jl = so3_left_jacobian(&xi.phi());
    let q = se3_q(&xi.rho(), &xi.phi());
    let mut j = Mat6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&q);
    j
}

/// Inverse right Jacobian of SE(3): `log(exp(ξ)·exp(ε)) ≈ ξ + Jr⁻¹(ξ) ε`.
pub fn se3_right_jacobian_inv(xi: &Tangent) -> Mat6 {
    let neg = Tangent(-xi.0);
    let jl_inv = so3_left_jacobian_inv(&neg.phi());
    let q = se3_q(&neg.rho(), &neg.phi());
    let mut j = Mat6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl_inv);
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl_inv);
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-(jl_inv * q * jl_inv)));
    j
}

/// Rotation taking optical-camera coordinates into body coordinates.
pub fn body_from_camera() -> Pose {
    let r = Mat3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
    Pose::from_rotation(UnitQuaternion::from_rotation_matrix(&rot))
}

/// World pose of the optical camera for a body pose.
pub fn camera_pose(body: &Pose) -> Pose {
    body.compose(&body_from_camera())
}

/// Body pose for a world pose of the optical camera.
pub fn body_pose(camera: &Pose) -> Pose {
    camera.compose(&body_from_camera().inverse())
}

/// Pinhole intrinsics. Pixel `(i, j)` has its center at `u = i, v = j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// 128×128 camera with 100 px focal length, principal point at the center.
    pub fn default_sim() -> Self {
        Self {
            fx: 100.0,
            fy: 100.0,
            cx: 64.0,
            cy: 64.0,
            width: 128,
            height: 128,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return bad("cx outside image");
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad("cy outside image");
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Projection without the image bounds test.
    pub fn project_unchecked(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Unit-depth ray through a pixel.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// `fx fy cx cy width height`
    pub fn to_text(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            fmt_sig(self.fx, 17),
            fmt_sig(self.fy, 17),
            fmt_sig(self.cx, 17),
            fmt_sig(self.cy, 17),
            self.width,
            self.height
        )
    }

    pub fn from_text(s: &str) -> Result<Self, GeometryError> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let err = || GeometryError::Parse(s.to_string());
        if parts.len() != 6 {
            return Err(err());
        }
        let f = |i: usize| parts[i].parse::<f64>().map_err(|_| err());
        let d = |i: usize| parts[i].parse::<u32>().map_err(|_| err());
        Self::new(f(0)?, f(1)?, f(2)?, f(3)?, d(4)?, d(5)?)
    }
}

/// Valid sensor depth interval, open at both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub fn contains(&self, d: f64) -> bool {
        d > self.min && d < self.max
    }
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { min: 0.05, max: 20.0 }
    }
}

/// Pinhole projection. `None` when the point is behind `z_min` or lands
/// outside `[0, width) × [0, height)`.
pub fn project(k: &CameraIntrinsics, p_cam: &Vec3) -> Option<(f64, f64)> {
    project_with(k, p_cam, DEFAULT_Z_MIN)
}

pub fn project_with(k: &CameraIntrinsics, p_cam: &Vec3, z_min: f64) -> Option<(f64, f64)> {
    if !(p_cam.z > z_min) {
        return None;
    }
    let (u, v) = k.project_unchecked(p_cam);
    k.contains(u, v).then_some((u, v))
}

pub fn unproject(k: &CameraIntrinsics, uv: (f64, f64), depth: f64) -> Result<Vec3, GeometryError> {
    unproject_with(k, uv, depth, &DepthRange::default())
}

pub fn unproject_with(
    k: &CameraIntrinsics,
    uv: (f64, f64),
    depth: f64,
    range: &DepthRange,
) -> Result<Vec3, GeometryError> {
    if !range.contains(depth) {
        return Err(GeometryError::InvalidDepth {
            depth,
            min: range.min,
            max: range.max,
        });
    }
    Ok(k.ray(uv.0, uv.1) * depth)
}

/// Derivative of the pinhole projection with respect to the camera-frame point.
pub fn projection_jacobian(k: &CameraIntrinsics, p: &Vec3) -> nalgebra::Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    nalgebra::Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * p.x * iz2,
        0.0,
        k.fy * iz,
        -k.fy * p.y * iz2,
    )
}
