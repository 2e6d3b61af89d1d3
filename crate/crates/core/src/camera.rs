//! Pinhole projection with radial-tangential distortion.
//!
//! Camera frame: +z along the optical axis, +x right, +y down. Pixel origin
//! is the top-left corner, `u` rightward and `v` downward.

use nalgebra::{Matrix2, SMatrix, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{skew, Pose};
use crate::scalar::Real;

/// Default minimum camera-frame depth for a valid projection, meters.
pub const DEFAULT_MIN_DEPTH: f64 = 1e-3;

/// Number of intrinsic parameters `[fx, fy, cx, cy, k1, k2, p1, p2]`.
pub const INTRINSICS_DIM: usize = 8;

pub type Matrix2x6<T> = SMatrix<T, 2, 6>;
pub type Matrix2x3<T> = SMatrix<T, 2, 3>;
pub type Matrix2x8<T> = SMatrix<T, 2, 8>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel<T: Real> {
    pub u: T,
    pub v: T,
}

impl<T: Real> Pixel<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn to_vector(&self) -> Vector2<T> {
        Vector2::new(self.u, self.v)
    }

    pub fn from_vector(v: &Vector2<T>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Camera intrinsics together with the image size they apply to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub k1: T,
    pub k2: T,
    pub p1: T,
    pub p2: T,
    pub width: u32,
    pub height: u32,
}

/// Sanity limits checked by [`Intrinsics::validate`].
#[derive(Clone, Copy, Debug)]
pub struct IntrinsicsBounds {
    pub max_radial: f64,
    pub max_tangential: f64,
}

impl Default for IntrinsicsBounds {
    fn default() -> Self {
        Self {
            max_radial: 2.0,
            max_tangential: 0.1,
        }
    }
}

impl<T: Real> Intrinsics<T> {
    /// Distortion-free intrinsics.
    pub fn pinhole(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Self {
        let z = T::zero();
        Self {
            fx,
            fy,
            cx,
            cy,
            k1: z,
            k2: z,
            p1: z,
            p2: z,
            width,
            height,
        }
    }

    pub fn params(&self) -> [T; INTRINSICS_DIM] {
        [
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.p1, self.p2,
        ]
    }

    pub fn with_params(&self, p: &[T; INTRINSICS_DIM]) -> Self {
        Self {
            fx: p[0],
            fy: p[1],
            cx: p[2],
            cy: p[3],
            k1: p[4],
            k2: p[5],
            p1: p[6],
            p2: p[7],
            width: self.width,
            height: self.height,
        }
    }

    pub fn validate(&self, bounds: &IntrinsicsBounds) -> Result<()> {
        let f = |x: T| x.as_f64();
        let ok = f(self.fx) > 0.0
            && f(self.fy) > 0.0
            && f(self.cx) > 0.0
            && f(self.cx) < self.width as f64
            && f(self.cy) > 0.0
            && f(self.cy) < self.height as f64
            && f(self.k1).abs() < bounds.max_radial
            && f(self.k2).abs() < bounds.max_radial
            && f(self.p1).abs() < bounds.max_tangential
            && f(self.p2).abs() < bounds.max_tangential;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("intrinsics out of bounds: {self:?}")))
        }
    }

    pub fn contains(&self, px: &Pixel<T>) -> bool {
        px.u >= T::zero()
            && px.v >= T::zero()
            && px.u < T::lit(self.width as f64)
            && px.v < T::lit(self.height as f64)
    }

    /// Normalized (distorted) image coordinates of a pixel.
    pub fn pixel_to_normalized(&self, px: &Pixel<T>) -> Vector2<T> {
        Vector2::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy)
    }

    pub fn normalized_to_pixel(&self, d: &Vector2<T>) -> Pixel<T> {
        Pixel::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy)
    }

    pub fn cast<U: Real>(&self) -> Intrinsics<U> {
        let p = self.params().map(|x| U::lit(x.as_f64()));
        Intrinsics::pinhole(p[0], p[1], p[2], p[3], self.width, self.height).with_params(&p)
    }
}

/// Applies radial-tangential distortion to a normalized point.
pub fn distort<T: Real>(n: &Vector2<T>, k: &Intrinsics<T>) -> Vector2<T> {
    let (x, y) = (n.x, n.y);
    let two = T::lit(2.0);
    let r2 = x * x + y * y;
    let radial = T::one() + k.k1 * r2 + k.k2 * r2 * r2;
    Vector2::new(
        x * radial + two * k.p1 * x * y + k.p2 * (r2 + two * x * x),
        y * radial + k.p1 * (r2 + two * y * y) + two * k.p2 * x * y,
    )
}

/// Jacobian of [`distort`] with respect to the normalized point.
pub fn distort_jacobian<T: Real>(n: &Vector2<T>, k: &Intrinsics<T>) -> Matrix2<T> {
    let (x, y) = (n.x, n.y);
    let two = T::lit(2.0);
    let r2 = x * x + y * y;
    let radial = T::one() + k.k1 * r2 + k.k2 * r2 * r2;
    // d(radial)/dx = (2 k1 + 4 k2 r2) x
    let dradial = two * k.k1 + T::lit(4.0) * k.k2 * r2;
    let dxx = radial + x * dradial * x + two * k.p1 * y + T::lit(6.0) * k.p2 * x;
    let dxy = x * dradial * y + two * k.p1 * x + two * k.p2 * y;
    let dyx = y * dradial * x + two * k.p1 * x + two * k.p2 * y;
    let dyy = radial + y * dradial * y + T::lit(6.0) * k.p1 * y + two * k.p2 * x;
    Matrix2::new(dxx, dxy, dyx, dyy)
}

/// Inverts [`distort`] by Newton iteration.
pub fn undistort<T: Real>(d: &Vector2<T>, k: &Intrinsics<T>) -> Result<Vector2<T>> {
    const MAX_ITERS: usize = 20;
    let target = T::lit(1e-10).max(T::default_epsilon() * T::lit(10.0));
    let accept = T::lit(1e-8).max(T::default_epsilon() * T::lit(100.0));
    let mut n = *d;
    let mut residual = T::max_value().unwrap_or(T::one());
    for _ in 0..MAX_ITERS {
        let err = distort(&n, k) - d;
        residual = err.amax();
        if residual <= target {
            return Ok(n);
        }
        let j = distort_jacobian(&n, k);
        match j.try_inverse() {
            Some(ji) => n -= ji * err,
            None => break,
        }
    }
    let err = (distort(&n, k) - d).amax();
    if err <= accept {
        Ok(n)
    } else {
        Err(Error::NoConvergence(format!(
            "undistort residual {:.3e} (last {:.3e})",
            err.as_f64(),
            residual.as_f64()
        )))
    }
}

fn camera_point<T: Real>(c: &Pose<T>, x: &Vector3<T>, min_depth: T) -> Result<Vector3<T>> {
    let xc = c.inverse_transform_point(x);
    if xc.z <= min_depth {
        return Err(Error::BehindCamera {
            depth: xc.z.as_f64(),
        });
    }
    Ok(xc)
}

/// Projects a world point through camera pose `c` (camera-to-world).
pub fn project<T: Real>(k: &Intrinsics<T>, c: &Pose<T>, x: &Vector3<T>) -> Result<Pixel<T>> {
    project_with_min_depth(k, c, x, T::lit(DEFAULT_MIN_DEPTH))
}

pub fn project_with_min_depth<T: Real>(
    k: &Intrinsics<T>,
    c: &Pose<T>,
    x: &Vector3<T>,
    min_depth: T,
) -> Result<Pixel<T>> {
    let xc = camera_point(c, x, min_depth)?;
    let n = Vector2::new(xc.x / xc.z, xc.y / xc.z);
    Ok(k.normalized_to_pixel(&distort(&n, k)))
}

/// Lifts a pixel to the world point at the given camera-frame depth.
pub fn backproject<T: Real>(k: &Intrinsics<T>, c: &Pose<T>, px: &Pixel<T>, depth: T) -> Result<Vector3<T>> {
    let n = undistort(&k.pixel_to_normalized(px), k)?;
    Ok(c.transform_point(&Vector3::new(n.x * depth, n.y * depth, depth)))
}

/// Projection together with its derivatives.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionJacobians<T: Real> {
    pub pixel: Pixel<T>,
    /// With respect to a right perturbation `C * exp([w; v])`.
    pub d_pose: Matrix2x6<T>,
    pub d_point: Matrix2x3<T>,
    /// Columns ordered `[fx, fy, cx, cy, k1, k2, p1, p2]`.
    pub d_intrinsics: Matrix2x8<T>,
}

pub fn project_jacobians<T: Real>(
    k: &Intrinsics<T>,
    c: &Pose<T>,
    x: &Vector3<T>,
) -> Result<ProjectionJacobians<T>> {
    project_jacobians_with_min_depth(k, c, x, T::lit(DEFAULT_MIN_DEPTH))
}

pub fn project_jacobians_with_min_depth<T: Real>(
    k: &Intrinsics<T>,
    c: &Pose<T>,
    x: &Vector3<T>,
    min_depth: T,
) -> Result<ProjectionJacobians<T>> {
    let xc = camera_point(c, x, min_depth)?;
    let inv_z = T::one() / xc.z;
    let n = Vector2::new(xc.x * inv_z, xc.y * inv_z);
    let d = distort(&n, k);
    let pixel = k.normalized_to_pixel(&d);

    let z = T::zero();
    let two = T::lit(2.0);
    // d(pixel)/d(n)
    let dd_dn = distort_jacobian(&n, k);
    let dpix_dn = Matrix2::new(k.fx, z, z, k.fy) * dd_dn;
    // d(n)/d(xc)
    let dn_dxc = Matrix2x3::new(
        inv_z,
        z,
        -xc.x * inv_z * inv_z,
        z,
        inv_z,
        -xc.y * inv_z * inv_z,
    );
    let dpix_dxc = dpix_dn * dn_dxc;

    // xc' = xc + [xc]x w - v to first order.
    let mut dxc_dpose = SMatrix::<T, 3, 6>::zeros();
    dxc_dpose.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xc));
    dxc_dpose
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-nalgebra::Matrix3::identity()));
    let d_pose = dpix_dxc * dxc_dpose;
    let d_point = dpix_dxc * c.rotation.inverse().matrix();

    let (xn, yn) = (n.x, n.y);
    let r2 = xn * xn + yn * yn;
    let r4 = r2 * r2;
    let xy2 = two * xn * yn;
    #[rustfmt::skip]
    let d_intrinsics = Matrix2x8::from_row_slice(&[
        d.x, z, T::one(), z, k.fx * xn * r2, k.fx * xn * r4, k.fx * xy2, k.fx * (r2 + two * xn * xn),
        z, d.y, z, T::one(), k.fy * yn * r2, k.fy * yn * r4, k.fy * (r2 + two * yn * yn), k.fy * xy2,
    ]);

    Ok(ProjectionJacobians {
        pixel,
        d_pose,
        d_point,
        d_intrinsics,
    })
}
