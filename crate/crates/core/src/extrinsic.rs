//! Recovery of the INS-to-camera extrinsic from optimized camera poses and
//! INS poses by robust least squares on the per-frame SE(3) discrepancy.

use log::warn;
use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::geometry::{se3_right_jacobian_inv, so3_right_jacobian_inv};
use crate::robust::{self, Kernel};
use crate::{Error, Huber, Pose, Result, Twist6};

/// `(C*)^-1 P T`, subtracting the two nearby world positions first so that
/// georeferenced coordinates far from the origin cost no precision.
fn relative_pose(c_star: &Pose, p_ins: &Pose, t: &Pose) -> Pose {
    let rc_inv = c_star.rotation.inverse();
    let d = (p_ins.translation - c_star.translation) + p_ins.rotation.rotate(&t.translation);
    Pose::new(rc_inv.compose(&p_ins.rotation).compose(&t.rotation), rc_inv.rotate(&d))
}

/// `Log((C*)^-1 P T)`: zero when the camera pose is exactly `P T`.
pub fn relative_discrepancy(c_star: &Pose, p_ins: &Pose, t: &Pose) -> Twist6 {
    relative_pose(c_star, p_ins, t).log()
}

/// `[Log(R); t]` of `(C*)^-1 P T`, with the translation taken as is rather
/// than through the SE(3) `V^-1` factor.
pub fn relative_discrepancy_split(c_star: &Pose, p_ins: &Pose, t: &Pose) -> Twist6 {
    let m = relative_pose(c_star, p_ins, t);
    Twist6::new(m.rotation.log(), m.translation)
}

/// Coordinates in which the per-frame discrepancy is measured.
///
/// With [`DiscrepancyMap::Se3`] the translation part is `V^-1(phi) t`, which
/// couples rotation into translation in proportion to `|t|`: a frame pair
/// that is off by kilometers then pulls on the rotation of `T` with a
/// lever that no kernel on the norm can cap. [`DiscrepancyMap::Split`]
/// keeps the two parts separate and bounds each outlier's influence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyMap {
    Se3,
    #[default]
    Split,
}

fn discrepancy_linearized(map: DiscrepancyMap, c: &Pose, p: &Pose, t: &Pose) -> (Vector6<f64>, Matrix6<f64>) {
    match map {
        DiscrepancyMap::Se3 => {
            let d = relative_discrepancy(c, p, t);
            (d.to_vector(), se3_right_jacobian_inv(&d))
        }
        DiscrepancyMap::Split => {
            let m = relative_pose(c, p, t);
            let phi = m.rotation.log();
            let mut j = Matrix6::zeros();
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3_right_jacobian_inv(&phi));
            j.fixed_view_mut::<3, 3>(3, 3).copy_from(&m.rotation.matrix());
            (Twist6::new(phi, m.translation).to_vector(), j)
        }
    }
}

fn discrepancy(map: DiscrepancyMap, c: &Pose, p: &Pose, t: &Pose) -> Vector6<f64> {
    match map {
        DiscrepancyMap::Se3 => relative_discrepancy(c, p, t).to_vector(),
        DiscrepancyMap::Split => relative_discrepancy_split(c, p, t).to_vector(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtrinsicOptions {
    pub map: DiscrepancyMap,
    /// Applied to the squared norm of the scaled discrepancy.
    pub kernel: Kernel<f64>,
    /// Multiplies the rotation part (radians) before taking the norm.
    pub rot_scale: f64,
    /// Multiplies the translation part (meters) before taking the norm.
    pub trans_scale: f64,
    pub max_iterations: usize,
    /// Stop when the update norm drops below this.
    pub step_tol: f64,
}

impl Default for ExtrinsicOptions {
    fn default() -> Self {
        Self {
            map: DiscrepancyMap::default(),
            kernel: Some(Huber::new(0.1)),
            rot_scale: 1.0,
            trans_scale: 1.0,
            max_iterations: 100,
            step_tol: 1e-10,
        }
    }
}

impl ExtrinsicOptions {
    fn scale(&self) -> Vector6<f64> {
        let (r, t) = (self.rot_scale, self.trans_scale);
        Vector6::new(r, r, r, t, t, t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtrinsicEstimate {
    pub t_opt: Pose,
    /// `|S Delta_t(T_opt)|` per frame, in input order.
    pub residual_norms: Vec<f64>,
    /// Frames inside the kernel's quadratic region (all frames without a kernel).
    pub inliers: usize,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// False when the iteration cap was hit; `t_opt` is then the best so far.
    pub converged: bool,
}

fn cost(cam: &[Pose], ins: &[Pose], t: &Pose, opts: &ExtrinsicOptions) -> f64 {
    let s = opts.scale();
    cam.iter()
        .zip(ins)
        .map(|(c, p)| {
            let d = discrepancy(opts.map, c, p, t).component_mul(&s);
            robust::rho(&opts.kernel, d.norm_squared())
        })
        .sum()
}

/// Iteratively reweighted Gauss-Newton on `T <- T exp(delta)`, with step
/// halving so the robust cost never increases.
pub fn refine_extrinsics(
    cam_poses: &[Pose],
    ins_poses: &[Pose],
    t_init: &Pose,
    opts: &ExtrinsicOptions,
) -> Result<ExtrinsicEstimate> {
    if cam_poses.len() != ins_poses.len() {
        return Err(Error::InvalidInput(format!(
            "{} camera poses but {} INS poses",
            cam_poses.len(),
            ins_poses.len()
        )));
    }
    if cam_poses.len() < 3 {
        return Err(Error::InsufficientFrames {
            needed: 3,
            got: cam_poses.len(),
        });
    }
    let s = opts.scale();
    let mut t = *t_init;
    let initial_cost = cost(cam_poses, ins_poses, &t, opts);
    let mut current = initial_cost;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for (c, p) in cam_poses.iter().zip(ins_poses) {
            let (delta, j) = discrepancy_linearized(opts.map, c, p, &t);
            let r = delta.component_mul(&s);
            let j = Matrix6::from_diagonal(&s) * j;
            let w = robust::weight(&opts.kernel, r.norm_squared());
            h += j.transpose() * j * w;
            g += j.transpose() * r * w;
        }
        let Some(step) = h.cholesky().map(|ch| -ch.solve(&g)) else {
            return Err(Error::Degenerate("extrinsic normal equations are singular".into()));
        };
        if step.norm() < opts.step_tol {
            converged = true;
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = t.retract(&Twist6::from_vector(&(step * alpha)));
            let c = cost(cam_poses, ins_poses, &cand, opts);
            if c <= current {
                t = cand;
                current = c;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || (step * alpha).norm() < opts.step_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("extrinsic adjustment hit {} iterations", opts.max_iterations);
    }

    let residual_norms: Vec<f64> = cam_poses
        .iter()
        .zip(ins_poses)
        .map(|(c, p)| discrepancy(opts.map, c, p, &t).component_mul(&s).norm())
        .collect();
    let inliers = match opts.kernel {
        Some(k) => residual_norms.iter().filter(|&&r| r <= k.delta()).count(),
        None => residual_norms.len(),
    };
    Ok(ExtrinsicEstimate {
        t_opt: t,
        residual_norms,
        inliers,
        iterations,
        initial_cost,
        final_cost: current,
        converged,
    })
}
