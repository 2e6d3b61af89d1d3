//! Rigid-body geometry on SO(3) and SE(3).
//!
//! Conventions used throughout the crate:
//!
//! - Rotations are stored as unit quaternions and renormalized after every
//!   composition.
//! - A [`Pose`] maps points from its own (body or camera) frame into the
//!   world frame: `x_world = R * x_local + p`.
//! - Tangent vectors are ordered `[rotation; translation]`, and pose
//!   perturbations act on the right: `T * exp(delta)`.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::scalar::Real;

/// Angle below which the trigonometric coefficient functions switch to
/// their Taylor series. Truncation error is then at the level of machine
/// epsilon while cancellation in the closed forms is avoided.
#[inline]
fn series_threshold<T: Real>() -> T {
    T::default_epsilon().powf(T::lit(1.0 / 6.0))
}

/// Cross-product matrix `[v]x`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// `(1 - cos t) / t^2` and `(t - sin t) / t^3`.
fn left_jacobian_coeffs<T: Real>(theta: T) -> (T, T) {
    if theta < series_threshold() {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            T::lit(0.5) - t2 / T::lit(24.0) + t4 / T::lit(720.0),
            T::lit(1.0 / 6.0) - t2 / T::lit(120.0) + t4 / T::lit(5040.0),
        )
    } else {
        let t2 = theta * theta;
        (
            (T::one() - theta.cos()) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    }
}

/// Coefficient of `[phi]x^2` in the inverse left Jacobian.
fn inverse_jacobian_coeff<T: Real>(theta: T) -> T {
    if theta < series_threshold() {
        let t2 = theta * theta;
        T::lit(1.0 / 12.0) + t2 / T::lit(720.0) + t2 * t2 / T::lit(30240.0)
    } else {
        let half = theta * T::lit(0.5);
        T::one() / (theta * theta) - half.cos() / (T::lit(2.0) * theta * half.sin())
    }
}

/// Left Jacobian of SO(3); also the `V` matrix of the SE(3) exponential.
pub fn so3_left_jacobian<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let (a, b) = left_jacobian_coeffs(phi.norm());
    let k = skew(phi);
    Matrix3::identity() + k * a + k * k * b
}

pub fn so3_left_jacobian_inv<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let c = inverse_jacobian_coeff(phi.norm());
    let k = skew(phi);
    Matrix3::identity() - k * T::lit(0.5) + k * k * c
}

/// Right Jacobian of SO(3): `exp(phi + d) ~= exp(phi) exp(Jr d)`.
pub fn so3_right_jacobian<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    so3_left_jacobian(&-phi)
}

/// `log(exp(phi) exp(d)) ~= phi + Jr^-1 d`.
pub fn so3_right_jacobian_inv<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    so3_left_jacobian_inv(&-phi)
}

/// The off-diagonal block of the SE(3) left Jacobian for a twist with
/// rotation `phi` and translation `rho`.
fn se3_q_block<T: Real>(phi: &Vector3<T>, rho: &Vector3<T>) -> Matrix3<T> {
    let theta = phi.norm();
    let (a1, a2, a3) = if theta < series_threshold() {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            T::lit(1.0 / 6.0) - t2 / T::lit(120.0) + t4 / T::lit(5040.0),
            T::lit(1.0 / 24.0) - t2 / T::lit(720.0) + t4 / T::lit(40320.0),
            T::lit(1.0 / 120.0) - t2 / T::lit(2520.0) + t4 / T::lit(120960.0),
        )
    } else {
        let (s, c) = (theta.sin(), theta.cos());
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let t4 = t2 * t2;
        (
            (theta - s) / t3,
            (t2 + T::lit(2.0) * c - T::lit(2.0)) / (T::lit(2.0) * t4),
            (T::lit(2.0) * theta - T::lit(3.0) * s + theta * c) / (T::lit(2.0) * t4 * theta),
        )
    };
    let p = skew(phi);
    let r = skew(rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * T::lit(0.5)
        + (pr + rp + prp) * a1
        + (p * pr + rp * p - prp * T::lit(3.0)) * a2
        + (prp * p + p * prp) * a3
}

/// Left Jacobian of SE(3) in `[rot; trans]` ordering.
pub fn se3_left_jacobian<T: Real>(xi: &Twist6<T>) -> Matrix6<T> {
    let j = so3_left_jacobian(&xi.rot);
    let q = se3_q_block(&xi.rot, &xi.trans);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
    out
}

/// Inverse of the SE(3) left Jacobian in `[rot; trans]` ordering.
pub fn se3_left_jacobian_inv<T: Real>(xi: &Twist6<T>) -> Matrix6<T> {
    let ji = so3_left_jacobian_inv(&xi.rot);
    let q = se3_q_block(&xi.rot, &xi.trans);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&ji);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&ji);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-(ji * q * ji)));
    out
}

/// `log(exp(xi) exp(d)) ~= xi + Jr^-1 d`.
pub fn se3_right_jacobian_inv<T: Real>(xi: &Twist6<T>) -> Matrix6<T> {
    se3_left_jacobian_inv(&Twist6::new(-xi.rot, -xi.trans))
}

/// SO(3) exponential (Rodrigues) from an axis-angle vector in radians.
pub fn so3_exp<T: Real>(omega: &Vector3<T>) -> Rotation<T> {
    let theta = omega.norm();
    let half = theta * T::lit(0.5);
    let (w, k) = if theta < T::small_angle() {
        let t2 = theta * theta;
        (
            T::one() - t2 / T::lit(8.0),
            T::lit(0.5) - t2 / T::lit(48.0),
        )
    } else {
        (half.cos(), half.sin() / theta)
    };
    let v = omega * k;
    Rotation::from_quaternion(w, v.x, v.y, v.z)
}

/// SO(3) logarithm; the returned angle lies in `[0, pi]`.
pub fn so3_log<T: Real>(r: &Rotation<T>) -> Vector3<T> {
    let q = r.q.quaternion();
    // q and -q are the same rotation; w >= 0 keeps the angle in [0, pi].
    let (w, v) = if q.w < T::zero() {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let n = v.norm();
    let scale = if n < T::small_angle() {
        // atan2(n, w) / n for small n.
        let w2 = w * w;
        T::lit(2.0) / w * (T::one() - n * n / (T::lit(3.0) * w2))
    } else {
        T::lit(2.0) * n.atan2(w) / n
    };
    v * scale
}

/// SE(3) exponential of a `[rot; trans]` twist.
pub fn se3_exp<T: Real>(xi: &Twist6<T>) -> Pose<T> {
    let rotation = so3_exp(&xi.rot);
    let translation = so3_left_jacobian(&xi.rot) * xi.trans;
    Pose::new(rotation, translation)
}

/// SE(3) logarithm as a `[rot; trans]` twist.
pub fn se3_log<T: Real>(pose: &Pose<T>) -> Twist6<T> {
    let rot = so3_log(&pose.rotation);
    let trans = so3_left_jacobian_inv(&rot) * pose.translation;
    Twist6::new(rot, trans)
}

/// A 3D rotation backed by a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation<T: Real> {
    q: UnitQuaternion<T>,
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self {
            q: UnitQuaternion::identity(),
        }
    }

    /// Builds a rotation from quaternion components, normalizing them.
    pub fn from_quaternion(w: T, x: T, y: T, z: T) -> Self {
        Self {
            q: UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
        }
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<T>) -> Self {
        Self::from_quaternion(q.w, q.i, q.j, q.k)
    }

    /// Projects an approximately orthonormal matrix onto SO(3).
    pub fn from_matrix(m: &Matrix3<T>) -> Self {
        let r = nalgebra::Rotation3::from_matrix_eps(m, T::default_epsilon(), 100, nalgebra::Rotation3::identity());
        Self::from_unit_quaternion(UnitQuaternion::from_rotation_matrix(&r))
    }

    pub fn exp(omega: &Vector3<T>) -> Self {
        so3_exp(omega)
    }

    pub fn log(&self) -> Vector3<T> {
        so3_log(self)
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<T> {
        &self.q
    }

    /// Quaternion components `[w, x, y, z]` with the sign chosen so that `w >= 0`.
    pub fn wxyz(&self) -> [T; 4] {
        let q = self.q.quaternion();
        if q.w < T::zero() {
            [-q.w, -q.i, -q.j, -q.k]
        } else {
            [q.w, q.i, q.j, q.k]
        }
    }

    pub fn matrix(&self) -> Matrix3<T> {
        self.q.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self {
            q: self.q.inverse(),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        let p = self.q.quaternion() * other.q.quaternion();
        Self {
            q: UnitQuaternion::new_normalize(p),
        }
    }

    pub fn rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.q.transform_vector(v)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> T {
        so3_log(self).norm()
    }

    /// Angle of `self^-1 * other`.
    pub fn angle_to(&self, other: &Self) -> T {
        self.inverse().compose(other).angle()
    }

    pub fn cast<U: Real>(&self) -> Rotation<U> {
        let [w, x, y, z] = self.wxyz();
        Rotation::from_quaternion(
            U::lit(w.as_f64()),
            U::lit(x.as_f64()),
            U::lit(y.as_f64()),
            U::lit(z.as_f64()),
        )
    }
}

impl<T: Real> Default for Rotation<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Mul for Rotation<T> {
    type Output = Rotation<T>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(&rhs)
    }
}

/// A `[rot; trans]` tangent vector of SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist6<T: Real> {
    /// Radians.
    pub rot: Vector3<T>,
    /// Meters.
    pub trans: Vector3<T>,
}

impl<T: Real> Twist6<T> {
    pub fn new(rot: Vector3<T>, trans: Vector3<T>) -> Self {
        Self { rot, trans }
    }

    pub fn zeros() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Self::new(
            v.fixed_rows::<3>(0).into_owned(),
            v.fixed_rows::<3>(3).into_owned(),
        )
    }

    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.rot.x,
            self.rot.y,
            self.rot.z,
            self.trans.x,
            self.trans.y,
            self.trans.z,
        )
    }

    pub fn norm(&self) -> T {
        self.to_vector().norm()
    }
}

/// Rigid transform mapping points from the local frame into the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Rotation<T>,
    /// Meters, in the world frame.
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Rotation<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn exp(xi: &Twist6<T>) -> Self {
        se3_exp(xi)
    }

    pub fn log(&self) -> Twist6<T> {
        se3_log(self)
    }

    /// `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self {
            translation: -r.rotate(&self.translation),
            rotation: r,
        }
    }

    pub fn transform_point(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation.rotate(x) + self.translation
    }

    /// Maps a world point into the local frame.
    pub fn inverse_transform_point(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation.inverse().rotate(&(x - self.translation))
    }

    /// Right-multiplicative update `self * exp(delta)`.
    pub fn retract(&self, delta: &Twist6<T>) -> Self {
        self.compose(&se3_exp(delta))
    }

    /// `log(self^-1 * other)`.
    pub fn between(&self, other: &Self) -> Twist6<T> {
        se3_log(&self.inverse().compose(other))
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose::new(
            self.rotation.cast(),
            self.translation.map(|x| U::lit(x.as_f64())),
        )
    }
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Mul for Pose<T> {
    type Output = Pose<T>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(&rhs)
    }
}
