//! Levenberg-Marquardt over the calibration graph. Landmarks are eliminated
//! with a Schur complement; the reduced camera system is factored with a
//! block-skyline Cholesky.

use log::{debug, trace};
use nalgebra::{Cholesky, Matrix3, Matrix6, SMatrix, Vector3, Vector6};

use super::linalg::{BlockSkyline, Matrix8, Matrix8x6, Vector8};
use super::{
    anchor_prior_residual, cost_change, pose_prior_linearized, total_cost, ActiveMask, Factors, GraphState,
};
use crate::camera::{project_jacobians_with_min_depth, INTRINSICS_DIM};
use crate::robust;
use crate::{Error, Intrinsics, Pose, Result, Rotation, Twist6};

type Matrix6x3 = SMatrix<f64, 6, 3>;
type Matrix8x3 = SMatrix<f64, 8, 3>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
    pub initial_lambda: f64,
    /// Give up growing the damping past this value.
    pub max_lambda: f64,
    /// Steps whose largest component is below this are treated as converged.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            rel_tol: 1e-8,
            initial_lambda: 1e-4,
            max_lambda: 1e16,
            step_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmReport {
    /// Number of linearizations performed.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
    /// Largest component of the last accepted step (0 if none was taken).
    pub last_step: f64,
}

/// Reprojection factors grouped by landmark, plus the pose envelope they induce.
struct Structure {
    lm_start: Vec<usize>,
    lm_obs: Vec<usize>,
    first: Vec<usize>,
}

impl Structure {
    fn new(state: &GraphState, factors: &Factors, mask: &ActiveMask) -> Self {
        let nl = state.landmarks.len();
        let np = state.poses.len();
        let mut counts = vec![0usize; nl + 1];
        for f in &factors.reprojections {
            counts[f.landmark + 1] += 1;
        }
        for j in 0..nl {
            counts[j + 1] += counts[j];
        }
        let lm_start = counts.clone();
        let mut fill = counts;
        let mut lm_obs = vec![0usize; factors.reprojections.len()];
        for (idx, f) in factors.reprojections.iter().enumerate() {
            lm_obs[fill[f.landmark]] = idx;
            fill[f.landmark] += 1;
        }
        let mut first: Vec<usize> = (0..np).collect();
        if mask.poses_active() && mask.landmarks_active() {
            for j in 0..nl {
                let obs = &lm_obs[lm_start[j]..lm_start[j + 1]];
                let Some(lo) = obs.iter().map(|&o| factors.reprojections[o].pose).min() else {
                    continue;
                };
                for &o in obs {
                    let i = factors.reprojections[o].pose;
                    first[i] = first[i].min(lo);
                }
            }
        }
        Self { lm_start, lm_obs, first }
    }

    fn obs(&self, j: usize) -> std::ops::Range<usize> {
        self.lm_start[j]..self.lm_start[j + 1]
    }
}

/// Gauss-Newton normal equations `H dx = b` at the current state, with IRLS
/// weights frozen. Masked Jacobian columns are zeroed.
struct Linearization {
    hpp: Vec<Matrix6<f64>>,
    bp: Vec<Vector6<f64>>,
    hll: Vec<Matrix3<f64>>,
    bl: Vec<Vector3<f64>>,
    /// Pose-landmark coupling per entry of `Structure::lm_obs`.
    hpl: Vec<Matrix6x3>,
    valid: Vec<bool>,
    hkp: Vec<Matrix8x6>,
    hkl: Vec<Matrix8x3>,
    hkk: Matrix8,
    bk: Vector8,
}

fn mask_cols<const R: usize, const C: usize>(m: &mut SMatrix<f64, R, C>, keep: &[bool; C]) {
    for (c, &k) in keep.iter().enumerate() {
        if !k {
            m.column_mut(c).fill(0.0);
        }
    }
}

fn linearize(state: &GraphState, factors: &Factors, mask: &ActiveMask, st: &Structure) -> Linearization {
    let np = state.poses.len();
    let nl = state.landmarks.len();
    let pm = mask.pose_coords();
    let lmm = mask.landmark_coords();
    let km = mask.intrinsics;
    let poses_on = mask.poses_active();
    let lms_on = mask.landmarks_active();
    let k_on = mask.intrinsics_active();

    let mut lin = Linearization {
        hpp: vec![Matrix6::zeros(); np],
        bp: vec![Vector6::zeros(); np],
        hll: vec![Matrix3::zeros(); nl],
        bl: vec![Vector3::zeros(); nl],
        hpl: if poses_on && lms_on {
            vec![Matrix6x3::zeros(); st.lm_obs.len()]
        } else {
            Vec::new()
        },
        valid: vec![false; st.lm_obs.len()],
        hkp: vec![Matrix8x6::zeros(); np],
        hkl: vec![Matrix8x3::zeros(); nl],
        hkk: Matrix8::zeros(),
        bk: Vector8::zeros(),
    };

    if poses_on {
        for f in &factors.pose_priors {
            let (r, mut j) = pose_prior_linearized(&f.prior, &state.poses[f.pose]);
            mask_cols(&mut j, &pm);
            let rw = r.component_div(&f.sigma);
            let w = robust::weight(&factors.kernels.pose_prior, rw.norm_squared());
            let jw = Matrix6::from_fn(|a, b| j[(a, b)] / f.sigma[a]);
            lin.hpp[f.pose] += jw.transpose() * jw * w;
            lin.bp[f.pose] -= jw.transpose() * rw * w;
        }
    }
    if lms_on {
        for f in &factors.anchor_priors {
            let r = anchor_prior_residual(&f.prior, &state.landmarks[f.landmark]);
            let rw = r.component_div(&f.sigma);
            let w = robust::weight(&factors.kernels.anchor_prior, rw.norm_squared());
            // d r / d x = -I, so J^T J is diagonal.
            for a in 0..3 {
                if lmm[a] {
                    let s = 1.0 / f.sigma[a];
                    lin.hll[f.landmark][(a, a)] += w * s * s;
                    lin.bl[f.landmark][a] += w * s * rw[a];
                }
            }
        }
    }

    for (pos, &o) in st.lm_obs.iter().enumerate() {
        let f = &factors.reprojections[o];
        let Ok(jac) = project_jacobians_with_min_depth(
            &state.intrinsics,
            &state.poses[f.pose],
            &state.landmarks[f.landmark],
            factors.min_depth,
        ) else {
            continue;
        };
        lin.valid[pos] = true;
        let e = f.pixel.to_vector() - jac.pixel.to_vector();
        let inv_var = 1.0 / (f.sigma * f.sigma);
        let w = robust::weight(&factors.kernels.reprojection, e.norm_squared() * inv_var) * inv_var;
        let mut jp = jac.d_pose;
        let mut jl = jac.d_point;
        let mut jk = jac.d_intrinsics;
        mask_cols(&mut jp, &pm);
        mask_cols(&mut jl, &lmm);
        mask_cols(&mut jk, &km);
        let (i, j) = (f.pose, f.landmark);
        if poses_on {
            lin.hpp[i] += jp.transpose() * jp * w;
            lin.bp[i] += jp.transpose() * e * w;
        }
        if lms_on {
            lin.hll[j] += jl.transpose() * jl * w;
            lin.bl[j] += jl.transpose() * e * w;
        }
        if poses_on && lms_on {
            lin.hpl[pos] = jp.transpose() * jl * w;
        }
        if k_on {
            lin.hkk += jk.transpose() * jk * w;
            lin.bk += jk.transpose() * e * w;
            if poses_on {
                lin.hkp[i] += jk.transpose() * jp * w;
            }
            if lms_on {
                lin.hkl[j] += jk.transpose() * jl * w;
            }
        }
    }
    lin
}

/// Tiny floor so that Marquardt scaling still damps a weakly observed
/// coordinate.
const DAMPING_FLOOR: f64 = 1e-12;

fn damp<const N: usize>(m: &SMatrix<f64, N, N>, keep: &[bool; N], lambda: f64) -> SMatrix<f64, N, N> {
    let mut out = *m;
    for a in 0..N {
        if keep[a] {
            out[(a, a)] += lambda * m[(a, a)].max(DAMPING_FLOOR);
        } else {
            out[(a, a)] = 1.0;
        }
    }
    out
}

/// Fails when an active coordinate receives no information at all.
fn check_observed(lin: &Linearization, mask: &ActiveMask, iteration: usize) -> Result<()> {
    let pm = mask.pose_coords();
    let lmm = mask.landmark_coords();
    let singular = Error::SingularSystem { iteration };
    if mask.poses_active() && lin.hpp.iter().any(|h| (0..6).any(|a| pm[a] && h[(a, a)] <= 0.0)) {
        return Err(singular);
    }
    if mask.landmarks_active() && lin.hll.iter().any(|h| (0..3).any(|a| lmm[a] && h[(a, a)] <= 0.0)) {
        return Err(singular);
    }
    if (0..INTRINSICS_DIM).any(|a| mask.intrinsics[a] && lin.hkk[(a, a)] <= 0.0) {
        return Err(singular);
    }
    Ok(())
}

struct Step {
    poses: Vec<Vector6<f64>>,
    landmarks: Vec<Vector3<f64>>,
    intrinsics: Vector8,
}

impl Step {
    fn amax(&self) -> f64 {
        let p = self.poses.iter().map(|d| d.amax()).fold(0.0, f64::max);
        let l = self.landmarks.iter().map(|d| d.amax()).fold(0.0, f64::max);
        p.max(l).max(self.intrinsics.amax())
    }
}

fn solve_damped(
    state: &GraphState,
    factors: &Factors,
    mask: &ActiveMask,
    st: &Structure,
    lin: &Linearization,
    lambda: f64,
) -> Option<Step> {
    let np = state.poses.len();
    let nl = state.landmarks.len();
    let pm = mask.pose_coords();
    let lmm = mask.landmark_coords();
    let poses_on = mask.poses_active();
    let lms_on = mask.landmarks_active();
    let k_on = mask.intrinsics_active();

    let mut sky = BlockSkyline::new(st.first.clone());
    let mut bp = lin.bp.clone();
    for i in 0..np {
        *sky.diag_mut(i) = damp(&lin.hpp[i], &pm, lambda);
        *sky.border_mut(i) = lin.hkp[i];
    }
    *sky.corner_mut() = damp(&lin.hkk, &mask.intrinsics, lambda);
    let mut bk = lin.bk;

    let mut hll_inv = Vec::new();
    if lms_on {
        hll_inv.reserve(nl);
        for j in 0..nl {
            let h = damp(&lin.hll[j], &lmm, lambda);
            let inv = Cholesky::new(h)?.inverse();
            hll_inv.push(inv);
            if !(poses_on || k_on) {
                continue;
            }
            let yk = lin.hkl[j] * inv;
            if k_on {
                bk -= yk * lin.bl[j];
                *sky.corner_mut() -= yk * lin.hkl[j].transpose();
            }
            if poses_on {
                let range = st.obs(j);
                for a in range.clone() {
                    if !lin.valid[a] {
                        continue;
                    }
                    let ia = factors.reprojections[st.lm_obs[a]].pose;
                    let ya = lin.hpl[a] * inv;
                    bp[ia] -= ya * lin.bl[j];
                    if k_on {
                        *sky.border_mut(ia) -= yk * lin.hpl[a].transpose();
                    }
                    for b in range.clone() {
                        if !lin.valid[b] {
                            continue;
                        }
                        let ib = factors.reprojections[st.lm_obs[b]].pose;
                        if ib <= ia {
                            *sky.block_mut(ia, ib) -= ya * lin.hpl[b].transpose();
                        }
                    }
                }
            }
        }
    }

    let factor = sky.factor().ok()?;
    factor.solve(&mut bp, &mut bk);
    for d in bp.iter_mut() {
        for a in 0..6 {
            if !pm[a] {
                d[a] = 0.0;
            }
        }
    }
    for a in 0..INTRINSICS_DIM {
        if !mask.intrinsics[a] {
            bk[a] = 0.0;
        }
    }

    let mut landmarks = vec![Vector3::zeros(); nl];
    if lms_on {
        for j in 0..nl {
            let mut rhs = lin.bl[j] - lin.hkl[j].transpose() * bk;
            if poses_on {
                for a in st.obs(j) {
                    if lin.valid[a] {
                        let ia = factors.reprojections[st.lm_obs[a]].pose;
                        rhs -= lin.hpl[a].transpose() * bp[ia];
                    }
                }
            }
            let mut d = hll_inv[j] * rhs;
            for a in 0..3 {
                if !lmm[a] {
                    d[a] = 0.0;
                }
            }
            landmarks[j] = d;
        }
    }
    Some(Step {
        poses: bp,
        landmarks,
        intrinsics: bk,
    })
}

pub(crate) fn retract_pose(c: &Pose, d: &Vector6<f64>, mask: &ActiveMask) -> Pose {
    let w = d.fixed_rows::<3>(0).into_owned();
    let v = d.fixed_rows::<3>(3).into_owned();
    match (mask.pose_rotation, mask.pose_translation) {
        (true, true) => c.retract(&Twist6::new(w, v)),
        (true, false) => Pose::new(c.rotation.compose(&Rotation::exp(&w)), c.translation),
        (false, true) => Pose::new(c.rotation, c.translation + c.rotation.rotate(&v)),
        (false, false) => *c,
    }
}

pub(crate) fn retract_landmark(x: &mut Vector3<f64>, d: &Vector3<f64>, mask: &ActiveMask) {
    let keep = mask.landmark_coords();
    for a in 0..3 {
        if keep[a] {
            x[a] += d[a];
        }
    }
}

/// Focal lengths are kept strictly positive.
const MIN_FOCAL: f64 = 1e-6;

pub(crate) fn retract_intrinsics(k: &Intrinsics, d: &[f64; INTRINSICS_DIM], mask: &ActiveMask) -> Intrinsics {
    let mut p = k.params();
    for a in 0..INTRINSICS_DIM {
        if mask.intrinsics[a] {
            p[a] += d[a];
        }
    }
    p[0] = p[0].max(MIN_FOCAL);
    p[1] = p[1].max(MIN_FOCAL);
    k.with_params(&p)
}

fn apply(state: &GraphState, step: &Step, mask: &ActiveMask) -> GraphState {
    let mut out = state.clone();
    if mask.poses_active() {
        for (c, d) in out.poses.iter_mut().zip(&step.poses) {
            *c = retract_pose(c, d, mask);
        }
    }
    if mask.landmarks_active() {
        for (x, d) in out.landmarks.iter_mut().zip(&step.landmarks) {
            retract_landmark(x, d, mask);
        }
    }
    if mask.intrinsics_active() {
        let mut d = [0.0; INTRINSICS_DIM];
        d.copy_from_slice(step.intrinsics.as_slice());
        out.intrinsics = retract_intrinsics(&state.intrinsics, &d, mask);
    }
    out
}

/// Minimizes [`total_cost`] over the variables enabled by `mask`; everything
/// else is left bit-identical. Accepted costs never increase.
pub fn solve_lm(state: &mut GraphState, factors: &Factors, mask: &ActiveMask, opts: &LmOptions) -> Result<LmReport> {
    if !mask.any() {
        return Err(Error::NoActiveVariables);
    }
    let st = Structure::new(state, factors, mask);
    let mut cost = total_cost(state, factors);
    let mut report = LmReport {
        iterations: 0,
        initial_cost: cost,
        final_cost: cost,
        converged: false,
        last_step: 0.0,
    };
    if cost == 0.0 {
        report.converged = true;
        return Ok(report);
    }
    let mut lambda = opts.initial_lambda;

    'outer: while report.iterations < opts.max_iterations {
        report.iterations += 1;
        let lin = linearize(state, factors, mask, &st);
        check_observed(&lin, mask, report.iterations)?;
        loop {
            let Some(step) = solve_damped(state, factors, mask, &st, &lin, lambda) else {
                lambda *= 10.0;
                if lambda > opts.max_lambda {
                    return Err(Error::SingularSystem {
                        iteration: report.iterations,
                    });
                }
                continue;
            };
            let size = step.amax();
            if !size.is_finite() {
                return Err(Error::SingularSystem {
                    iteration: report.iterations,
                });
            }
            if size < opts.step_tol {
                report.converged = true;
                break 'outer;
            }
            let candidate = apply(state, &step, mask);
            let change = cost_change(state, &candidate, factors);
            trace!("lm iter {} lambda {lambda:.1e} cost {cost:.6e} change {change:.3e}", report.iterations);
            if change < 0.0 {
                let rel = -change / cost;
                *state = candidate;
                cost += change;
                report.last_step = size;
                lambda = (lambda * 0.1).max(1e-15);
                if rel < opts.rel_tol {
                    report.converged = true;
                    break 'outer;
                }
                break;
            }
            if change <= 1e-15 * cost {
                // Flat to working precision.
                report.converged = true;
                break 'outer;
            }
            lambda *= 10.0;
            if lambda > opts.max_lambda {
                report.converged = true;
                break 'outer;
            }
        }
    }
    // Report a freshly summed total so consecutive runs chain exactly; the
    // running value above only differs by rounding.
    report.final_cost = total_cost(state, factors);
    debug!(
        "lm: {} iterations, cost {:.6e} -> {:.6e}, converged {}",
        report.iterations, report.initial_cost, report.final_cost, report.converged
    );
    Ok(report)
}
