//! Pose graph fusing sparse absolute fixes (prior factors) with dense
//! odometry (between factors), solved by Levenberg-Marquardt on SE(3).
//!
//! Residuals live in the tangent space: `log(Z⁻¹·X)` for a prior and
//! `log(Z⁻¹·Xa⁻¹·Xb)` for a between factor, each whitened by its sigmas.
//! States are perturbed on the right, `X·exp(δ)`. Since between factors
//! only link consecutive states, the normal equations are block
//! tridiagonal and are solved in linear time.

use nalgebra::{Matrix6, Vector6};
use thiserror::Error;

use crate::geometry::{se3_right_jacobian_inv, GeometryError, Pose, Tangent};

pub type Sigmas = Vector6<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("timestamp {t} is not after the last state at {last}")]
    NonMonotonicTimestamp { t: f64, last: f64 },
    #[error("state {0} does not exist")]
    UnknownState(usize),
    #[error("graph has no states")]
    EmptyGraph,
    #[error("no prior factor fixes the gauge")]
    NoGaugePrior,
    #[error("normal equations are singular")]
    SingularNormalEquations,
    #[error("sigmas must be positive and finite")]
    InvalidSigmas,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorFactor {
    pub state: usize,
    pub measured: Pose,
    pub sigmas: Sigmas,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetweenFactor {
    /// Links `a` and `a + 1`.
    pub a: usize,
    pub measured: Pose,
    pub sigmas: Sigmas,
}

/// Noise model defaults.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionParams {
    pub prior_sigma_t: f64,
    pub prior_sigma_r_deg: f64,
    pub odom_sigma_t: f64,
    /// Added translation sigma per meter of step length.
    pub odom_sigma_t_per_m: f64,
    pub odom_sigma_r_deg: f64,
    /// Number of trailing states optimized after each fix.
    pub window: usize,
    /// Huber threshold on whitened prior residual norms; `None` disables it.
    pub huber_delta: Option<f64>,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            prior_sigma_t: 0.1,
            prior_sigma_r_deg: 2.0,
            odom_sigma_t: 0.005,
            odom_sigma_t_per_m: 0.01,
            odom_sigma_r_deg: 0.5,
            window: 20,
            huber_delta: Some(3.0),
        }
    }
}

impl FusionParams {
    /// Fix sigmas, tightened as the inlier count grows past `min_inliers`.
    pub fn prior_sigmas(&self, inliers: usize, min_inliers: usize) -> Sigmas {
        let scale = if inliers == 0 { 1.0 } else { (min_inliers as f64 / inliers as f64).min(1.0) };
        let (t, r) = (self.prior_sigma_t * scale, self.prior_sigma_r_deg.to_radians() * scale);
        Sigmas::new(t, t, t, r, r, r)
    }

    pub fn odom_sigmas(&self, delta: &Pose) -> Sigmas {
        let t = self.odom_sigma_t + self.odom_sigma_t_per_m * delta.translation().norm();
        let r = self.odom_sigma_r_deg.to_radians();
        Sigmas::new(t, t, t, r, r, r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    All,
    Last(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted iterations.
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub accepted_costs: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FusionGraph {
    pub states: Vec<(Pose, f64)>,
    pub priors: Vec<PriorFactor>,
    pub betweens: Vec<BetweenFactor>,
    pub last_optimized_index: Option<usize>,
    pub huber_delta: Option<f64>,
}

const LAMBDA_INIT: f64 = 1e-4;
const MAX_ITERS: usize = 50;
const REL_DECREASE_STOP: f64 = 1e-9;
const COST_FLOOR: f64 = 1e-18;

fn check_sigmas(s: &Sigmas) -> Result<(), FusionError> {
    if s.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(FusionError::InvalidSigmas)
    }
}

/// Whitened prior residual and its Jacobian with respect to the state.
pub fn prior_residual(x: &Pose, measured: &Pose, sigmas: &Sigmas) -> Result<(Vector6<f64>, Matrix6<f64>), GeometryError> {
    let r = measured.inverse().compose(x).log()?;
    let j = se3_right_jacobian_inv(&r);
    let w = Matrix6::from_diagonal(&sigmas.map(|s| 1.0 / s));
    Ok((w * r.0, w * j))
}

/// Whitened between residual and its Jacobians with respect to `xa`, `xb`.
pub fn between_residual(
    xa: &Pose,
    xb: &Pose,
    measured: &Pose,
    sigmas: &Sigmas,
) -> Result<(Vector6<f64>, Matrix6<f64>, Matrix6<f64>), GeometryError> {
    let r = measured.inverse().compose(&xa.between(xb)).log()?;
    let jr = se3_right_jacobian_inv(&r);
    let jb = jr;
    let ja = -jr * xb.inverse().compose(xa).adjoint();
    let w = Matrix6::from_diagonal(&sigmas.map(|s| 1.0 / s));
    Ok((w * r.0, w * ja, w * jb))
}

fn huber(s2: f64, delta: Option<f64>) -> (f64, f64) {
    match delta {
        Some(d) if s2 > d * d => {
            let s = s2.sqrt();
            (2.0 * d * s - d * d, d / s)
        }
        _ => (s2, 1.0),
    }
}

impl FusionGraph {
    pub fn new(huber_delta: Option<f64>) -> Self {
        Self {
            huber_delta,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Appends an unconnected state. Only valid on an empty graph; later
    /// states come from [`FusionGraph::propagate`].
    pub fn init(&mut self, pose: Pose, timestamp: f64) -> Result<usize, FusionError> {
        if let Some((_, last)) = self.states.last() {
            return Err(FusionError::NonMonotonicTimestamp { t: timestamp, last: *last });
        }
        self.states.push((pose, timestamp));
        Ok(0)
    }

    pub fn propagate(&mut self, delta: &Pose, sigmas: Sigmas, timestamp: f64) -> Result<Pose, FusionError> {
        check_sigmas(&sigmas)?;
        let &(last_pose, last_t) = self.states.last().ok_or(FusionError::EmptyGraph)?;
        if !(timestamp > last_t) {
            return Err(FusionError::NonMonotonicTimestamp { t: timestamp, last: last_t });
        }
        let pose = last_pose.compose(delta);
        self.betweens.push(BetweenFactor {
            a: self.states.len() - 1,
            measured: *delta,
            sigmas,
        });
        self.states.push((pose, timestamp));
        Ok(pose)
    }

    pub fn add_vloc_fix(&mut self, state: usize, pose: Pose, sigmas: Sigmas) -> Result<(), FusionError> {
        check_sigmas(&sigmas)?;
        if state >= self.states.len() {
            return Err(FusionError::UnknownState(state));
        }
        self.priors.push(PriorFactor {
            state,
            measured: pose,
            sigmas,
        });
        Ok(())
    }

    /// State whose timestamp is nearest `t`; the earlier one on ties.
    pub fn state_nearest(&self, t: f64) -> Option<usize> {
        let i = self.states.partition_point(|s| s.1 < t);
        [i.checked_sub(1), (i < self.states.len()).then_some(i)]
            .into_iter()
            .flatten()
            .min_by(|a, b| (self.states[*a].1 - t).abs().total_cmp(&(self.states[*b].1 - t).abs()))
    }

    pub fn current_pose(&self) -> Result<(Pose, f64), FusionError> {
        self.states.last().copied().ok_or(FusionError::EmptyGraph)
    }

    fn window_start(&self, window: Window) -> usize {
        match window {
            Window::All => 0,
            Window::Last(n) => self.states.len().saturating_sub(n.max(1)),
        }
    }

    /// Total robust cost with the window `[start, len)` taken from `poses`.
    fn cost(&self, start: usize, poses: &[Pose]) -> Result<f64, FusionError> {
        let x = |i: usize| if i >= start { poses[i - start] } else { self.states[i].0 };
        let mut total = 0.0;
        for p in self.priors.iter().filter(|p| p.state >= start) {
            let (r, _) = prior_residual(&x(p.state), &p.measured, &p.sigmas)?;
            total += huber(r.norm_squared(), self.huber_delta).0;
        }
        for b in self.betweens.iter().filter(|b| b.a + 1 >= start) {
            let (r, _, _) = between_residual(&x(b.a), &x(b.a + 1), &b.measured, &b.sigmas)?;
            total += r.norm_squared();
        }
        Ok(total)
    }

    /// Gauss-Newton system: diagonal blocks, off-diagonal blocks `(i, i+1)`,
    /// and gradient.
    #[allow(clippy::type_complexity)]
    fn linearize(&self, start: usize, poses: &[Pose]) -> Result<(Vec<Matrix6<f64>>, Vec<Matrix6<f64>>, Vec<Vector6<f64>>), FusionError> {
        let m = poses.len();
        let x = |i: usize| if i >= start { poses[i - start] } else { self.states[i].0 };
        let mut d = vec![Matrix6::zeros(); m];
        let mut off = vec![Matrix6::zeros(); m.saturating_sub(1)];
        let mut g = vec![Vector6::zeros(); m];
        for p in self.priors.iter().filter(|p| p.state >= start) {
            let (r, j) = prior_residual(&x(p.state), &p.measured, &p.sigmas)?;
            let (_, w) = huber(r.norm_squared(), self.huber_delta);
            let k = p.state - start;
            d[k] += w * j.transpose() * j;
            g[k] += w * j.transpose() * r;
        }
        for b in self.betweens.iter().filter(|b| b.a + 1 >= start) {
            let (r, ja, jb) = between_residual(&x(b.a), &x(b.a + 1), &b.measured, &b.sigmas)?;
            let kb = b.a + 1 - start;
            d[kb] += jb.transpose() * jb;
            g[kb] += jb.transpose() * r;
            if b.a >= start {
                let ka = b.a - start;
                d[ka] += ja.transpose() * ja;
                g[ka] += ja.transpose() * r;
                off[ka] += ja.transpose() * jb;
            }
        }
        Ok((d, off, g))
    }

    /// Minimizes the factor cost over the window, holding earlier states
    /// fixed. Accepted costs never increase.
    pub fn optimize(&mut self, window: Window) -> Result<OptimizeReport, FusionError> {
        if self.states.is_empty() {
            return Err(FusionError::EmptyGraph);
        }
        let start = self.window_start(window);
        let anchored = self.priors.iter().any(|p| p.state >= start) || start > 0;
        if self.priors.is_empty() || !anchored {
            return Err(FusionError::NoGaugePrior);
        }
        let mut poses: Vec<Pose> = self.states[start..].iter().map(|s| s.0).collect();
        let mut cost = self.cost(start, &poses)?;
        let initial_cost = cost;
        let mut accepted_costs = vec![cost];
        let mut lambda = LAMBDA_INIT;
        let mut iterations = 0;
        let mut attempts = 0;
        while cost >= COST_FLOOR && attempts < MAX_ITERS {
            attempts += 1;
            let (d, off, g) = self.linearize(start, &poses)?;
            let step = match solve_block_tridiagonal(&d, &off, &g, lambda) {
                Some(s) => s,
                None if lambda < 1e12 => {
                    lambda *= 10.0;
                    continue;
                }
                None => return Err(FusionError::SingularNormalEquations),
            };
            let cand: Vec<Pose> = poses.iter().zip(&step).map(|(p, s)| p.retract(&Tangent(-s))).collect();
            let new_cost = self.cost(start, &cand).unwrap_or(f64::INFINITY);
            if new_cost < cost {
                let rel = (cost - new_cost) / cost;
                poses = cand;
                cost = new_cost;
                accepted_costs.push(cost);
                iterations += 1;
                lambda = (lambda / 10.0).max(1e-12);
                if rel < REL_DECREASE_STOP {
                    break;
                }
            } else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
            }
        }
        for (i, p) in poses.into_iter().enumerate() {
            self.states[start + i].0 = p;
        }
        self.last_optimized_index = Some(self.states.len() - 1);
        Ok(OptimizeReport {
            initial_cost,
            final_cost: cost,
            iterations,
            accepted_costs,
        })
    }
}

/// Solves `(H + λ·diag(H))·x = g` for block tridiagonal `H`.
fn solve_block_tridiagonal(d: &[Matrix6<f64>], off: &[Matrix6<f64>], g: &[Vector6<f64>], lambda: f64) -> Option<Vec<Vector6<f64>>> {
    let m = d.len();
    let damp = |h: &Matrix6<f64>| {
        let mut h = *h;
        for i in 0..6 {
            h[(i, i)] += lambda * h[(i, i)].max(1e-9);
        }
        h
    };
    let mut s: Vec<nalgebra::Cholesky<f64, nalgebra::U6>> = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        let mut si = damp(&d[i]);
        let mut yi = g[i];
        if i > 0 {
            let b = &off[i - 1];
            let prev = &s[i - 1];
            // L = Bᵀ S⁻¹
            let l = prev.solve(b).transpose();
            si -= l * b;
            yi -= l * y[i - 1];
        }
        s.push(si.cholesky()?);
        y.push(yi);
    }
    let mut x = vec![Vector6::zeros(); m];
    for i in (0..m).rev() {
        let mut rhs = y[i];
        if i + 1 < m {
            rhs -= off[i] * x[i + 1];
        }
        x[i] = s[i].solve(&rhs);
    }
    x.iter().all(|v| v.iter().all(|e| e.is_finite())).then_some(x)
}
