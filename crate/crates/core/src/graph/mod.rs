//! Calibration factor graph: camera poses, anchor landmarks and a shared
//! intrinsics block, tied together by pose priors, anchor priors and
//! reprojection factors.

mod linalg;
mod solver;
mod stages;

use nalgebra::{Matrix6, Vector2, Vector3, Vector6};

use crate::camera::{project_jacobians_with_min_depth, project_with_min_depth, DEFAULT_MIN_DEPTH, INTRINSICS_DIM};
use crate::geometry::so3_right_jacobian_inv;
use crate::robust::{self, Kernel};
use crate::{Huber, Intrinsics, Pixel, Pose, Result, Twist6};

pub use solver::{solve_lm, LmOptions, LmReport};
pub use stages::{
    build_graph, staged_optimize_with, NO_NADIR_ROT_LUMP_SCALE, camera_pose_prior, staged_optimize, Ablations, GraphInputs, InsPoseMeasurement, PriorBudget,
    StageConfig, StageKind, StageReport,
};

/// Current values of every variable in the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphState {
    /// Frame index of each pose, strictly increasing.
    pub frames: Vec<u32>,
    /// Camera-to-world poses.
    pub poses: Vec<Pose>,
    pub landmark_ids: Vec<u64>,
    pub landmarks: Vec<Vector3<f64>>,
    pub intrinsics: Intrinsics,
}

impl GraphState {
    pub fn pose_index(&self, frame: u32) -> Option<usize> {
        self.frames.binary_search(&frame).ok()
    }

    pub fn landmark_index(&self, id: u64) -> Option<usize> {
        self.landmark_ids.binary_search(&id).ok()
    }

    /// Length of the flattened tangent vector: poses, landmarks, intrinsics.
    pub fn tangent_dim(&self) -> usize {
        6 * self.poses.len() + 3 * self.landmarks.len() + INTRINSICS_DIM
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosePriorFactor {
    pub pose: usize,
    pub prior: Pose,
    /// `[rot (rad) x3; pos (m) x3]` standard deviations.
    pub sigma: Vector6<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnchorPriorFactor {
    pub landmark: usize,
    pub prior: Vector3<f64>,
    pub sigma: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReprojectionFactor {
    pub pose: usize,
    pub landmark: usize,
    pub pixel: Pixel,
    /// Isotropic pixel standard deviation.
    pub sigma: f64,
}

/// Robust kernel per factor family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSet {
    pub pose_prior: Kernel<f64>,
    pub anchor_prior: Kernel<f64>,
    pub reprojection: Kernel<f64>,
}

impl KernelSet {
    pub fn huber(delta: f64) -> Self {
        let k = Some(Huber::new(delta));
        Self {
            pose_prior: k,
            anchor_prior: k,
            reprojection: k,
        }
    }

    pub fn none() -> Self {
        Self {
            pose_prior: None,
            anchor_prior: None,
            reprojection: None,
        }
    }
}

impl Default for KernelSet {
    fn default() -> Self {
        Self::huber(1.345)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    pub pose_priors: Vec<PosePriorFactor>,
    pub anchor_priors: Vec<AnchorPriorFactor>,
    pub reprojections: Vec<ReprojectionFactor>,
    pub kernels: KernelSet,
    /// Reprojections closer than this camera depth are skipped.
    pub min_depth: f64,
}

impl Factors {
    pub fn new(kernels: KernelSet) -> Self {
        Self {
            pose_priors: Vec::new(),
            anchor_priors: Vec::new(),
            reprojections: Vec::new(),
            kernels,
            min_depth: DEFAULT_MIN_DEPTH,
        }
    }
}

/// Which variables (and sub-coordinates) may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveMask {
    pub pose_rotation: bool,
    pub pose_translation: bool,
    pub landmark_xy: bool,
    pub landmark_z: bool,
    pub intrinsics: [bool; INTRINSICS_DIM],
}

impl ActiveMask {
    pub fn none() -> Self {
        Self {
            pose_rotation: false,
            pose_translation: false,
            landmark_xy: false,
            landmark_z: false,
            intrinsics: [false; INTRINSICS_DIM],
        }
    }

    pub fn all() -> Self {
        Self {
            pose_rotation: true,
            pose_translation: true,
            landmark_xy: true,
            landmark_z: true,
            intrinsics: [true; INTRINSICS_DIM],
        }
    }

    pub fn poses_active(&self) -> bool {
        self.pose_rotation || self.pose_translation
    }

    pub fn landmarks_active(&self) -> bool {
        self.landmark_xy || self.landmark_z
    }

    pub fn intrinsics_active(&self) -> bool {
        self.intrinsics.iter().any(|&b| b)
    }

    pub fn any(&self) -> bool {
        self.poses_active() || self.landmarks_active() || self.intrinsics_active()
    }

    pub(crate) fn pose_coords(&self) -> [bool; 6] {
        let (r, t) = (self.pose_rotation, self.pose_translation);
        [r, r, r, t, t, t]
    }

    pub(crate) fn landmark_coords(&self) -> [bool; 3] {
        [self.landmark_xy, self.landmark_xy, self.landmark_z]
    }
}

/// `[Log(R_prior R^T); p_prior - p]`.
pub fn pose_prior_residual(prior: &Pose, c: &Pose) -> Twist6 {
    let rot = prior.rotation.compose(&c.rotation.inverse()).log();
    Twist6::new(rot, prior.translation - c.translation)
}

/// Residual and its Jacobian with respect to a right perturbation of `c`.
pub fn pose_prior_linearized(prior: &Pose, c: &Pose) -> (Vector6<f64>, Matrix6<f64>) {
    let r = pose_prior_residual(prior, c);
    let rm = c.rotation.matrix();
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-(so3_right_jacobian_inv(&r.rot) * rm)));
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-rm));
    (r.to_vector(), j)
}

pub fn anchor_prior_residual(prior: &Vector3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
    prior - x
}

/// Observed minus predicted pixel.
pub fn reprojection_residual(k: &Intrinsics, c: &Pose, x: &Vector3<f64>, u: &Pixel) -> Result<Vector2<f64>> {
    reprojection_residual_with_min_depth(k, c, x, u, DEFAULT_MIN_DEPTH)
}

pub fn reprojection_residual_with_min_depth(
    k: &Intrinsics,
    c: &Pose,
    x: &Vector3<f64>,
    u: &Pixel,
    min_depth: f64,
) -> Result<Vector2<f64>> {
    let p = project_with_min_depth(k, c, x, min_depth)?;
    Ok(u.to_vector() - p.to_vector())
}

fn whitened_sq<const N: usize>(r: &nalgebra::SVector<f64, N>, sigma: &nalgebra::SVector<f64, N>) -> f64 {
    r.component_div(sigma).norm_squared()
}

/// Per-family breakdown of [`total_cost`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub pose_priors: f64,
    pub anchor_priors: f64,
    pub reprojections: f64,
    /// Reprojection factors skipped because the point was behind the camera.
    pub skipped: usize,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.pose_priors + self.anchor_priors + self.reprojections
    }
}

pub fn cost_breakdown(state: &GraphState, factors: &Factors) -> CostBreakdown {
    let mut out = CostBreakdown::default();
    for f in &factors.pose_priors {
        let r = pose_prior_residual(&f.prior, &state.poses[f.pose]).to_vector();
        out.pose_priors += robust::rho(&factors.kernels.pose_prior, whitened_sq(&r, &f.sigma));
    }
    for f in &factors.anchor_priors {
        let r = anchor_prior_residual(&f.prior, &state.landmarks[f.landmark]);
        out.anchor_priors += robust::rho(&factors.kernels.anchor_prior, whitened_sq(&r, &f.sigma));
    }
    for f in &factors.reprojections {
        match reprojection_residual_with_min_depth(
            &state.intrinsics,
            &state.poses[f.pose],
            &state.landmarks[f.landmark],
            &f.pixel,
            factors.min_depth,
        ) {
            Ok(r) => {
                out.reprojections +=
                    robust::rho(&factors.kernels.reprojection, r.norm_squared() / (f.sigma * f.sigma))
            }
            Err(_) => out.skipped += 1,
        }
    }
    out
}

/// `sum rho(|Sigma^{-1/2} r|^2)` over every factor.
pub fn total_cost(state: &GraphState, factors: &Factors) -> f64 {
    cost_breakdown(state, factors).total()
}

/// Change in one factor's robust cost between two whitened residuals,
/// computed from their difference so it stays accurate when tiny.
fn rho_change(kernel: &Kernel<f64>, old: &[f64], new: &[f64]) -> f64 {
    let mut s_old = 0.0;
    let mut s_new = 0.0;
    let mut ds = 0.0;
    for (a, b) in old.iter().zip(new) {
        s_old += a * a;
        s_new += b * b;
        ds += (b - a) * (b + a);
    }
    match kernel {
        None => ds,
        Some(h) => {
            let d2 = h.delta() * h.delta();
            match (s_old <= d2, s_new <= d2) {
                (true, true) => ds,
                (false, false) => 2.0 * h.delta() * ds / (s_new.sqrt() + s_old.sqrt()),
                _ => h.rho(s_new) - h.rho(s_old),
            }
        }
    }
}

/// `total_cost(new) - total_cost(old)` without the cancellation of
/// subtracting two large totals. Both states must share the same structure.
pub fn cost_change(old: &GraphState, new: &GraphState, factors: &Factors) -> f64 {
    let mut d = 0.0;
    for f in &factors.pose_priors {
        let a = pose_prior_residual(&f.prior, &old.poses[f.pose]).to_vector().component_div(&f.sigma);
        let b = pose_prior_residual(&f.prior, &new.poses[f.pose]).to_vector().component_div(&f.sigma);
        d += rho_change(&factors.kernels.pose_prior, a.as_slice(), b.as_slice());
    }
    for f in &factors.anchor_priors {
        let a = anchor_prior_residual(&f.prior, &old.landmarks[f.landmark]).component_div(&f.sigma);
        let b = anchor_prior_residual(&f.prior, &new.landmarks[f.landmark]).component_div(&f.sigma);
        d += rho_change(&factors.kernels.anchor_prior, a.as_slice(), b.as_slice());
    }
    let k = &factors.kernels.reprojection;
    for f in &factors.reprojections {
        let res = |s: &GraphState| {
            reprojection_residual_with_min_depth(
                &s.intrinsics,
                &s.poses[f.pose],
                &s.landmarks[f.landmark],
                &f.pixel,
                factors.min_depth,
            )
            .ok()
            .map(|r| r / f.sigma)
        };
        d += match (res(old), res(new)) {
            (Some(a), Some(b)) => rho_change(k, a.as_slice(), b.as_slice()),
            (Some(a), None) => -robust::rho(k, a.norm_squared()),
            (None, Some(b)) => robust::rho(k, b.norm_squared()),
            (None, None) => 0.0,
        };
    }
    d
}

/// Gradient of [`total_cost`] in the flattened tangent order
/// `[poses x6, landmarks x3, intrinsics x8]`; masked coordinates are zero.
pub fn cost_gradient(state: &GraphState, factors: &Factors, mask: &ActiveMask) -> Vec<f64> {
    let mut g = vec![0.0; state.tangent_dim()];
    let pose_mask = mask.pose_coords();
    let lm_mask = mask.landmark_coords();
    let lm_off = 6 * state.poses.len();
    let k_off = lm_off + 3 * state.landmarks.len();

    if mask.poses_active() {
        for f in &factors.pose_priors {
            let (r, j) = pose_prior_linearized(&f.prior, &state.poses[f.pose]);
            let rw = r.component_div(&f.sigma);
            let w = robust::weight(&factors.kernels.pose_prior, rw.norm_squared());
            let jw = Matrix6::from_fn(|a, b| j[(a, b)] / f.sigma[a]);
            let gi = jw.transpose() * rw * (2.0 * w);
            for c in 0..6 {
                if pose_mask[c] {
                    g[6 * f.pose + c] += gi[c];
                }
            }
        }
    }
    if mask.landmarks_active() {
        for f in &factors.anchor_priors {
            let r = anchor_prior_residual(&f.prior, &state.landmarks[f.landmark]);
            let rw = r.component_div(&f.sigma);
            let w = robust::weight(&factors.kernels.anchor_prior, rw.norm_squared());
            for c in 0..3 {
                if lm_mask[c] {
                    // d r / d x = -I
                    g[lm_off + 3 * f.landmark + c] += -2.0 * w * rw[c] / f.sigma[c];
                }
            }
        }
    }
    for f in &factors.reprojections {
        let c = &state.poses[f.pose];
        let x = &state.landmarks[f.landmark];
        let Ok(j) = project_jacobians_with_min_depth(&state.intrinsics, c, x, factors.min_depth) else {
            continue;
        };
        let e = f.pixel.to_vector() - j.pixel.to_vector();
        let inv_var = 1.0 / (f.sigma * f.sigma);
        let w = robust::weight(&factors.kernels.reprojection, e.norm_squared() * inv_var);
        // residual = u - pi, so d residual = -d pi.
        let s = -2.0 * w * inv_var;
        if mask.poses_active() {
            let gp = j.d_pose.transpose() * e * s;
            for a in 0..6 {
                if pose_mask[a] {
                    g[6 * f.pose + a] += gp[a];
                }
            }
        }
        if mask.landmarks_active() {
            let gl = j.d_point.transpose() * e * s;
            for a in 0..3 {
                if lm_mask[a] {
                    g[lm_off + 3 * f.landmark + a] += gl[a];
                }
            }
        }
        let gk = j.d_intrinsics.transpose() * e * s;
        for a in 0..INTRINSICS_DIM {
            if mask.intrinsics[a] {
                g[k_off + a] += gk[a];
            }
        }
    }
    g
}

/// Applies a flattened tangent step with the right-multiplicative pose
/// retraction. Masked groups are left untouched.
pub fn retract_state(state: &GraphState, delta: &[f64], mask: &ActiveMask) -> GraphState {
    let mut out = state.clone();
    let lm_off = 6 * state.poses.len();
    let k_off = lm_off + 3 * state.landmarks.len();
    for (i, c) in out.poses.iter_mut().enumerate() {
        let d = Vector6::from_column_slice(&delta[6 * i..6 * i + 6]);
        *c = solver::retract_pose(c, &d, mask);
    }
    for (i, x) in out.landmarks.iter_mut().enumerate() {
        let d = Vector3::from_column_slice(&delta[lm_off + 3 * i..lm_off + 3 * i + 3]);
        solver::retract_landmark(x, &d, mask);
    }
    let mut d = [0.0; INTRINSICS_DIM];
    d.copy_from_slice(&delta[k_off..k_off + INTRINSICS_DIM]);
    out.intrinsics = solver::retract_intrinsics(&state.intrinsics, &d, mask);
    out
}


#[cfg(test)]
mod tests;
