//! Minimal absolute pose from three points (Grunert's quartic) and the
//! least-squares rigid alignment used to recover the pose from the solved
//! point depths.

use nalgebra::{Matrix3, Matrix4};

use crate::geometry::{Pose, Vec3};

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn poly_scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Evaluates a polynomial given lowest-order coefficient first.
fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots of a quartic `c[0] + c[1] x + ... + c[4] x^4` via companion
/// matrix eigenvalues, polished by Newton steps.
pub(crate) fn real_quartic_roots(c: &[f64; 5]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || c[4].abs() <= 1e-14 * scale {
        return Vec::new();
    }
    let a: Vec<f64> = c.iter().map(|v| v / c[4]).collect();
    let mut m = Matrix4::zeros();
    for i in 1..4 {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..4 {
        m[(i, 3)] = -a[i];
    }
    let deriv = [a[1], 2.0 * a[2], 3.0 * a[3], 4.0];
    let mut roots = Vec::new();
    for z in m.complex_eigenvalues().iter() {
        if z.im.abs() > 1e-6 * (1.0 + z.re.abs()) {
            continue;
        }
        let mut x = z.re;
        for _ in 0..8 {
            let f = poly_eval(&a, x);
            let d = poly_eval(&deriv, x);
            if d == 0.0 {
                break;
            }
            let step = f / d;
            x -= step;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        roots.push(x);
    }
    roots
}

/// Rigid transform `T` minimizing `Σ‖T·src_i − dst_i‖²` (Kabsch).
pub fn align_points(src: &[Vec3], dst: &[Vec3]) -> Option<Pose> {
    if src.len() < 3 || src.len() != dst.len() {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let v = vt.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    let t = cd - q * cs;
    let pose = Pose::new(t, q);
    pose.is_finite().then_some(pose)
}

/// All poses `T` with `T·world_i` on the ray of unit bearing `bearing_i`,
/// `i = 0..3`, in front of the camera.
pub fn p3p(world: &[Vec3; 3], bearing: &[Vec3; 3]) -> Vec<Pose> {
    let f: Vec<Vec3> = bearing.iter().map(|b| b.normalize()).collect();
    let (c12, c13, c23) = (f[0].dot(&f[1]), f[0].dot(&f[2]), f[1].dot(&f[2]));
    let a = (world[1] - world[2]).norm_squared();
    let b = (world[0] - world[2]).norm_squared();
    let c = (world[0] - world[1]).norm_squared();
    if a < 1e-18 || b < 1e-18 || c < 1e-18 {
        return Vec::new();
    }
    // With s2 = u·s1, s3 = v·s1, eliminating s1 gives u = N(v) / D(v) and a
    // quartic in v.
    let num = [-(a + b - c), -2.0 * c13 * (c - a), -(a - b - c)];
    let den = [-2.0 * b * c12, 2.0 * b * c23];
    let rest = [b - c, 2.0 * c * c13, -c];
    let q = poly_add(
        &poly_add(&poly_scale(&poly_mul(&num, &num), b), &poly_scale(&poly_mul(&num, &den), -2.0 * b * c12)),
        &poly_mul(&rest, &poly_mul(&den, &den)),
    );
    let coeffs: [f64; 5] = std::array::from_fn(|i| q.get(i).copied().unwrap_or(0.0));
    let mut out = Vec::new();
    for v in real_quartic_roots(&coeffs) {
        let d = poly_eval(&den, v);
        if d.abs() < 1e-12 {
            continue;
        }
        let u = poly_eval(&num, v) / d;
        let k = 1.0 + v * v - 2.0 * v * c13;
        if !(k > 0.0) {
            continue;
        }
        let s1 = (b / k).sqrt();
        let s = [s1, u * s1, v * s1];
        if s.iter().any(|x| !(*x > 0.0)) {
            continue;
        }
        let cam: Vec<Vec3> = (0..3).map(|i| f[i] * s[i]).collect();
        if let Some(p) = align_points(world, &cam) {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quartic_roots_of_known_polynomial() {
        // (x-1)(x+2)(x-3)(x^2... ) : (x-1)(x+2)(x-3)(x-0.5)
        let p = poly_mul(&poly_mul(&[-1.0, 1.0], &[2.0, 1.0]), &poly_mul(&[-3.0, 1.0], &[-0.5, 1.0]));
        let mut r = real_quartic_roots(&[p[0], p[1], p[2], p[3], p[4]]);
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([-2.0, 0.5, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn alignment_recovers_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = Pose::new(
            Vec3::new(1.0, -2.0, 0.5),
            nalgebra::UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
        );
        let src: Vec<Vec3> = (0..6).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let dst: Vec<Vec3> = src.iter().map(|p| truth.transform_point(p)).collect();
        let est = align_points(&src, &dst).unwrap();
        assert!(est.translation_distance(&truth) < 1e-12);
        assert!(est.rotation_angle_to(&truth) < 1e-12);
    }

    #[test]
    fn p3p_contains_true_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let truth = Pose::new(
                Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                nalgebra::UnitQuaternion::from_euler_angles(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-3.0..3.0),
                ),
            );
            let cam: Vec<Vec3> = (0..3)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..6.0)))
                .collect();
            let inv = truth.inverse();
            let world: [Vec3; 3] = std::array::from_fn(|i| inv.transform_point(&cam[i]));
            let bearing: [Vec3; 3] = std::array::from_fn(|i| cam[i]);
            let sols = p3p(&world, &bearing);
            let best = sols
                .iter()
                .map(|s| s.translation_distance(&truth) + s.rotation_angle_to(&truth))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "{best} over {} solutions", sols.len());
        }
    }
}
