//! Calibration quality metrics: anchor reprojection error and frame-wise
//! visual localization by PnP.

mod pnp;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::anchors::Anchor;
use crate::camera::project;
use crate::error::{Error, Result};
use crate::{Intrinsics, Pixel, Pose};

pub use pnp::{solve_pnp, solve_pnp_with, PnpOptions, PNP_MIN_POINTS};

/// Median of a sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (lower, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *m;
    if n % 2 == 1 {
        Some(hi)
    } else {
        let lo = lower.iter().copied().max_by(f64::total_cmp).expect("n >= 2");
        Some(0.5 * (lo + hi))
    }
}

/// Median absolute deviation `median(|e - median(e)|)`, unscaled.
pub fn mad(values: &[f64]) -> Option<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprojReport {
    /// Pixel errors, ordered by anchor id then frame.
    pub errors: Vec<f64>,
    pub median: f64,
    pub mad: f64,
    pub count: usize,
    pub behind_camera: usize,
    /// Observations in frames without a pose.
    pub missing_frames: usize,
}

/// Reprojection error of every anchor observation, projecting the anchor's
/// world prior (not an optimized landmark) through the camera pose of its
/// frame.
pub fn evaluate_reprojection(anchors: &[Anchor], poses: &BTreeMap<u32, Pose>, k: &Intrinsics) -> Result<ReprojReport> {
    let mut order: Vec<&Anchor> = anchors.iter().collect();
    order.sort_by_key(|a| a.id);
    let mut errors = Vec::new();
    let mut behind_camera = 0;
    let mut missing_frames = 0;
    for a in order {
        let mut obs: Vec<&(u32, Pixel)> = a.observations.iter().collect();
        obs.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.u.total_cmp(&y.1.u)).then(x.1.v.total_cmp(&y.1.v)));
        for (frame, px) in obs {
            let Some(c) = poses.get(frame) else {
                missing_frames += 1;
                continue;
            };
            match project(k, c, &a.world_prior) {
                Ok(q) => errors.push(px.distance(&q)),
                Err(Error::BehindCamera { .. }) => behind_camera += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let (Some(median), Some(mad)) = (median(&errors), mad(&errors)) else {
        return Err(Error::EmptyInput("no anchor observation could be evaluated".into()));
    };
    Ok(ReprojReport {
        count: errors.len(),
        errors,
        median,
        mad,
        behind_camera,
        missing_frames,
    })
}

/// 2D-3D matches of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct VlFrame {
    pub frame: u32,
    pub matches: Vec<(Vector3<f64>, Pixel)>,
}

/// Joint `(meters, degrees)` thresholds reported by default.
pub const DEFAULT_VL_THRESHOLDS: [(f64, f64); 3] = [(2.0, 2.0), (5.0, 5.0), (10.0, 10.0)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VlFrameError {
    pub frame: u32,
    pub rotation_deg: f64,
    pub translation_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VlAccuracy {
    pub meters: f64,
    pub degrees: f64,
    /// Fraction of attempted frames within both thresholds; skipped frames
    /// count as failures.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VlReport {
    pub frames: Vec<VlFrameError>,
    pub rotation_median: Option<f64>,
    pub rotation_mad: Option<f64>,
    pub translation_median: Option<f64>,
    pub translation_mad: Option<f64>,
    pub accuracy: Vec<VlAccuracy>,
    pub skipped: usize,
    pub skipped_frames: Vec<u32>,
}

/// Estimates each frame's camera pose by PnP under intrinsics `k`, maps it to
/// an INS pose through `extrinsic` (`P = C T^-1`) and compares against
/// `gt_ins`. Frames without ground truth or where PnP fails are skipped.
pub fn vl_benchmark(
    frames: &[VlFrame],
    k: &Intrinsics,
    extrinsic: &Pose,
    gt_ins: &BTreeMap<u32, Pose>,
    thresholds: &[(f64, f64)],
) -> VlReport {
    let t_inv = extrinsic.inverse();
    let mut sorted: Vec<&VlFrame> = frames.iter().collect();
    sorted.sort_by_key(|f| f.frame);
    let mut results = Vec::new();
    let mut skipped_frames = Vec::new();
    for f in sorted {
        let Some(gt) = gt_ins.get(&f.frame) else {
            log::warn!("frame {} has no ground-truth pose, skipped", f.frame);
            skipped_frames.push(f.frame);
            continue;
        };
        match solve_pnp(&f.matches, k) {
            Ok(c) => {
                let est = c.compose(&t_inv);
                results.push(VlFrameError {
                    frame: f.frame,
                    rotation_deg: est.rotation.angle_to(&gt.rotation).to_degrees(),
                    translation_m: (est.translation - gt.translation).norm(),
                });
            }
            Err(e) => {
                log::debug!("frame {}: PnP failed: {e}", f.frame);
                skipped_frames.push(f.frame);
            }
        }
    }
    let rot: Vec<f64> = results.iter().map(|r| r.rotation_deg).collect();
    let trans: Vec<f64> = results.iter().map(|r| r.translation_m).collect();
    let attempted = frames.len().max(1) as f64;
    let accuracy = thresholds
        .iter()
        .map(|&(meters, degrees)| {
            let hits = results
                .iter()
                .filter(|r| r.translation_m <= meters && r.rotation_deg <= degrees)
                .count();
            VlAccuracy {
                meters,
                degrees,
                fraction: hits as f64 / attempted,
            }
        })
        .collect();
    VlReport {
        rotation_median: median(&rot),
        rotation_mad: mad(&rot),
        translation_median: median(&trans),
        translation_mad: mad(&trans),
        frames: results,
        accuracy,
        skipped: skipped_frames.len(),
        skipped_frames,
    }
}
