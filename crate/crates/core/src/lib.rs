//! Refinement of camera intrinsics and INS-to-camera extrinsics from
//! GNSS/INS pose priors and georeferenced 2D-3D anchors.
//!
//! The geometry, camera and robust-kernel layers are generic over the
//! scalar type ([`Real`]: `f32` or `f64`). The optimization layers work in
//! `f64` through the aliases exported here.

pub mod anchors;
pub mod camera;
pub mod error;
pub mod eval;
pub mod extrinsic;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod robust;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Rotation = geometry::Rotation<f64>;
pub type Pose = geometry::Pose<f64>;
pub type Twist6 = geometry::Twist6<f64>;
pub type Intrinsics = camera::Intrinsics<f64>;
pub type Pixel = camera::Pixel<f64>;
pub type Huber = robust::Huber<f64>;

pub type Rotation32 = geometry::Rotation<f32>;
pub type Pose32 = geometry::Pose<f32>;
pub type Intrinsics32 = camera::Intrinsics<f32>;
