//! Camera pose from 2D-3D correspondences: linear initialization (DLT, or a
//! plane-induced homography when the points are coplanar) followed by robust
//! Levenberg-Marquardt on the reprojection error.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Matrix6, SymmetricEigen, Vector2, Vector3, Vector6};

use crate::camera::{project, project_jacobians, undistort};
use crate::error::{Error, Result};
use crate::geometry::Twist6;
use crate::robust::{self, Kernel};
use crate::{Huber, Intrinsics, Pixel, Pose, Rotation};

pub const PNP_MIN_POINTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnpOptions {
    /// Kernel on the squared pixel error.
    pub kernel: Kernel<f64>,
    pub max_iterations: usize,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            kernel: Some(Huber::new(2.0)),
            max_iterations: 100,
        }
    }
}

/// Camera-to-world pose from at least six correspondences.
pub fn solve_pnp(points: &[(Vector3<f64>, Pixel)], k: &Intrinsics) -> Result<Pose> {
    solve_pnp_with(points, k, &PnpOptions::default())
}

pub fn solve_pnp_with(points: &[(Vector3<f64>, Pixel)], k: &Intrinsics, opts: &PnpOptions) -> Result<Pose> {
    if points.len() < PNP_MIN_POINTS {
        return Err(Error::Degenerate(format!(
            "PnP needs at least {PNP_MIN_POINTS} points, got {}",
            points.len()
        )));
    }
    let world: Vec<Vector3<f64>> = points.iter().map(|p| p.0).collect();
    let image = points
        .iter()
        .map(|(_, px)| undistort(&k.pixel_to_normalized(px), k))
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::new();
    if let Some(c) = dlt(&world, &image) {
        candidates.push(c);
    }
    if let Some(c) = homography_init(&world, &image) {
        candidates.push(c);
    }
    if candidates.is_empty() {
        return Err(Error::Degenerate("correspondences do not constrain a pose".into()));
    }

    let mut best: Option<(f64, Pose)> = None;
    let mut last_err = None;
    for c in candidates {
        match refine(points, k, c, opts) {
            Ok((pose, cost)) => {
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    best = Some((cost, pose));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, pose)), _) => Ok(pose),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one candidate was tried"),
    }
}

/// Similarity that moves the centroid to the origin and sets the mean
/// distance to sqrt(2).
fn normalize2(pts: &[Vector2<f64>]) -> Option<(Matrix3<f64>, Vec<Vector2<f64>>)> {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vector2<f64>>() / n;
    let d = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(d > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / d;
    let t = Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0);
    Some((t, pts.iter().map(|p| (p - c) * s).collect()))
}

fn normalize3(pts: &[Vector3<f64>]) -> Option<(Matrix4<f64>, Vec<Vector3<f64>>)> {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vector3<f64>>() / n;
    let d = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(d > 0.0) {
        return None;
    }
    let s = 3f64.sqrt() / d;
    let mut t = Matrix4::identity() * s;
    t[(3, 3)] = 1.0;
    t.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-s * c));
    Some((t, pts.iter().map(|p| (p - c) * s).collect()))
}

/// Right singular vector of the smallest singular value, plus the singular
/// values in descending order.
fn null_vector(a: DMatrix<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let cols = a.ncols();
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    if order.len() < cols {
        return None;
    }
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let last = *order.last()?;
    Some((v_t.row(last).iter().copied().collect(), s))
}

/// Nearest rotation in the Frobenius sense.
fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Some(u * d * v_t)
}

fn camera_pose(r_cw: &Matrix3<f64>, t_cw: &Vector3<f64>) -> Pose {
    let r_wc = Rotation::from_matrix(&r_cw.transpose());
    let p = -(r_cw.transpose() * t_cw);
    Pose::new(r_wc, p)
}

/// Linear 3x4 projection from 2n equations. Fails on coplanar or otherwise
/// rank-deficient configurations.
fn dlt(world: &[Vector3<f64>], image: &[Vector2<f64>]) -> Option<Pose> {
    let (tw, xw) = normalize3(world)?;
    let (ti, xi) = normalize2(image)?;
    let n = world.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (r, (x, u)) in xw.iter().zip(&xi).enumerate() {
        let h = [x.x, x.y, x.z, 1.0];
        for c in 0..4 {
            a[(2 * r, c)] = h[c];
            a[(2 * r, 8 + c)] = -u.x * h[c];
            a[(2 * r + 1, 4 + c)] = h[c];
            a[(2 * r + 1, 8 + c)] = -u.y * h[c];
        }
    }
    let (v, s) = null_vector(a)?;
    // A unique solution needs rank 11.
    if s[10] <= 1e-9 * s[0] {
        return None;
    }
    let pn = Matrix3x4::from_row_slice(&v);
    let p = ti.try_inverse()? * pn * tw;
    let m = p.fixed_view::<3, 3>(0, 0).into_owned();
    let det = m.determinant();
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let sv = m.singular_values();
    let scale = det.signum() * sv.mean();
    let r = nearest_rotation(&(m / scale))?;
    let t = p.column(3) / scale;
    Some(camera_pose(&r, &t))
}

/// Pose from the homography between the best-fit plane of the world points
/// and the image.
fn homography_init(world: &[Vector3<f64>], image: &[Vector2<f64>]) -> Option<Pose> {
    let n = world.len() as f64;
    let c = world.iter().sum::<Vector3<f64>>() / n;
    let cov = world.iter().fold(Matrix3::zeros(), |acc, x| {
        let d = x - c;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    if !(eig.eigenvalues[order[1]] > 1e-12 * eig.eigenvalues[order[0]]) {
        return None;
    }
    let e1: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let normal: Vector3<f64> = eig.eigenvectors.column(order[2]).into_owned();
    let e2 = normal.cross(&e1);
    let plane: Vec<Vector2<f64>> = world.iter().map(|x| Vector2::new((x - c).dot(&e1), (x - c).dot(&e2))).collect();

    let (tq, q) = normalize2(&plane)?;
    let (ti, xi) = normalize2(image)?;
    let mut a = DMatrix::<f64>::zeros(2 * world.len(), 9);
    for (r, (p, u)) in q.iter().zip(&xi).enumerate() {
        let h = [p.x, p.y, 1.0];
        for k in 0..3 {
            a[(2 * r, k)] = h[k];
            a[(2 * r, 6 + k)] = -u.x * h[k];
            a[(2 * r + 1, 3 + k)] = h[k];
            a[(2 * r + 1, 6 + k)] = -u.y * h[k];
        }
    }
    let (v, s) = null_vector(a)?;
    if s[7] <= 1e-9 * s[0] {
        return None;
    }
    let h = ti.try_inverse()? * Matrix3::from_row_slice(&v) * tq;
    let (h1, h2, h3) = (h.column(0), h.column(1), h.column(2));
    let mut lambda = 0.5 * (h1.norm() + h2.norm());
    if !(lambda > 0.0) {
        return None;
    }
    // The plane centroid must lie in front of the camera.
    if h3.z < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 / lambda;
    let r2 = h2 / lambda;
    let r_cp = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]))?;
    let basis = Matrix3::from_columns(&[e1, e2, normal]);
    let r_cw = r_cp * basis.transpose();
    let t_cw = h3 / lambda - r_cw * c;
    Some(camera_pose(&r_cw, &t_cw))
}

fn robust_cost(points: &[(Vector3<f64>, Pixel)], k: &Intrinsics, c: &Pose, kernel: &Kernel<f64>) -> Option<f64> {
    let mut cost = 0.0;
    for (x, px) in points {
        let q = project(k, c, x).ok()?;
        cost += robust::rho(kernel, px.distance(&q).powi(2));
    }
    Some(cost)
}

fn refine(points: &[(Vector3<f64>, Pixel)], k: &Intrinsics, init: Pose, opts: &PnpOptions) -> Result<(Pose, f64)> {
    let mut pose = init;
    let mut cost = robust_cost(points, k, &pose, &opts.kernel)
        .ok_or_else(|| Error::Degenerate("initial pose places points behind the camera".into()))?;
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iterations {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for (x, px) in points {
            let j = project_jacobians(k, &pose, x)?;
            let e = px.to_vector() - j.pixel.to_vector();
            let w = robust::weight(&opts.kernel, e.norm_squared());
            h += w * j.d_pose.transpose() * j.d_pose;
            g += w * j.d_pose.transpose() * e;
        }
        loop {
            let mut hd = h;
            for i in 0..6 {
                hd[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(delta) = hd.cholesky().map(|ch| ch.solve(&g)) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return Ok((pose, cost));
                }
                continue;
            };
            let cand = pose.retract(&Twist6::from_vector(&delta));
            match robust_cost(points, k, &cand, &opts.kernel) {
                Some(c) if c < cost => {
                    let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    pose = cand;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-15);
                    if rel < 1e-12 || delta.amax() < 1e-12 {
                        return Ok((pose, cost));
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        // No descent left at rounding level.
                        return Ok((pose, cost));
                    }
                }
            }
        }
    }
    Err(Error::NoConvergence(format!(
        "PnP did not converge in {} iterations",
        opts.max_iterations
    )))
}
