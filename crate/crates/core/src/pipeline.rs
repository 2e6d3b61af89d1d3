//! End-to-end refinement: anchors from correspondences, the staged factor
//! graph, then the extrinsic adjustment against the INS poses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anchors::{build_anchors, AnchorFilterConfig, AnchorSet, ElevationGrid, FrameCorrespondences, OrthoMeta};
use crate::error::{Error, Result};
use crate::extrinsic::{refine_extrinsics, DiscrepancyMap, ExtrinsicOptions};
use crate::graph::{
    build_graph, staged_optimize_with, Ablations, GraphInputs, InsPoseMeasurement, KernelSet, PriorBudget, StageConfig, StageReport,
};
use crate::{Huber, Intrinsics, Pose};

/// Huber thresholds on whitened residuals. `inf` disables a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSettings {
    pub pose_prior: f64,
    pub anchor_prior: f64,
    pub reprojection: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            pose_prior: 1.345,
            anchor_prior: 1.345,
            reprojection: 1.345,
        }
    }
}

fn kernel(delta: f64, what: &str) -> Result<Option<Huber>> {
    if delta == f64::INFINITY {
        Ok(None)
    } else if delta > 0.0 {
        Ok(Some(Huber::new(delta)))
    } else {
        Err(Error::Config(format!("{what} Huber delta must be positive, got {delta}")))
    }
}

impl KernelSettings {
    pub fn to_kernels(&self) -> Result<KernelSet> {
        Ok(KernelSet {
            pose_prior: kernel(self.pose_prior, "pose prior")?,
            anchor_prior: kernel(self.anchor_prior, "anchor prior")?,
            reprojection: kernel(self.reprojection, "reprojection")?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtrinsicSettings {
    pub map: DiscrepancyMap,
    /// `inf` gives plain least squares.
    pub huber_delta: f64,
    pub rot_scale: f64,
    pub trans_scale: f64,
    pub max_iterations: usize,
    pub step_tol: f64,
}

impl Default for ExtrinsicSettings {
    fn default() -> Self {
        let o = ExtrinsicOptions::default();
        Self {
            map: o.map,
            huber_delta: o.kernel.map_or(f64::INFINITY, |k| k.delta()),
            rot_scale: o.rot_scale,
            trans_scale: o.trans_scale,
            max_iterations: o.max_iterations,
            step_tol: o.step_tol,
        }
    }
}

impl ExtrinsicSettings {
    pub fn to_options(&self) -> Result<ExtrinsicOptions> {
        if !(self.rot_scale > 0.0 && self.trans_scale > 0.0) {
            return Err(Error::Config("extrinsic scales must be positive".into()));
        }
        Ok(ExtrinsicOptions {
            map: self.map,
            kernel: kernel(self.huber_delta, "extrinsic")?,
            rot_scale: self.rot_scale,
            trans_scale: self.trans_scale,
            max_iterations: self.max_iterations,
            step_tol: self.step_tol,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    /// Isotropic reprojection sigma, pixels.
    pub pixel_sigma: f64,
    pub filters: AnchorFilterConfig,
    pub budget: PriorBudget,
    pub stages: StageConfig,
    pub kernels: KernelSettings,
    pub extrinsic: ExtrinsicSettings,
    pub ablations: Ablations,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            pixel_sigma: 1.0,
            filters: AnchorFilterConfig::default(),
            budget: PriorBudget::default(),
            stages: StageConfig::default(),
            kernels: KernelSettings::default(),
            extrinsic: ExtrinsicSettings::default(),
            ablations: Ablations::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_sigma > 0.0 && self.pixel_sigma.is_finite()) {
            return Err(Error::Config("pixel_sigma must be positive".into()));
        }
        let b = &self.budget;
        if [b.sigma_rot_calib, b.sigma_pos_calib, b.sigma_rot_lump, b.sigma_pos_lump]
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(Error::Config("prior budget sigmas must be non-negative".into()));
        }
        let f = &self.filters;
        if !(f.sigma_match >= 0.0 && f.min_spacing_px >= 0.0 && f.slope_window_radius >= 0.0 && f.slope_max_range >= 0.0) {
            return Err(Error::Config("anchor filter parameters must be non-negative".into()));
        }
        self.stages.validate()?;
        self.kernels.to_kernels()?;
        self.extrinsic.to_options()?;
        Ok(())
    }

    /// Filter settings with the ablations applied.
    pub fn effective_filters(&self) -> AnchorFilterConfig {
        let mut f = self.filters;
        if self.ablations.no_nadir {
            f.slope_enabled = false;
            f.spacing_enabled = false;
        }
        f
    }

    pub fn effective_stages(&self) -> StageConfig {
        StageConfig {
            ablations: self.ablations,
            ..self.stages.clone()
        }
    }
}

/// Camera poses `P_t T` implied by INS poses and an extrinsic.
pub fn ins_camera_poses(ins: &[InsPoseMeasurement], extrinsic: &Pose) -> BTreeMap<u32, Pose> {
    ins.iter().map(|m| (m.frame, m.pose.compose(extrinsic))).collect()
}

pub struct RefineInputs<'a> {
    pub ins: &'a [InsPoseMeasurement],
    pub correspondences: &'a [FrameCorrespondences],
    pub ortho: &'a OrthoMeta,
    pub dem: &'a ElevationGrid,
    pub intrinsics: Intrinsics,
    pub extrinsic: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicReport {
    pub frames: usize,
    pub inliers: usize,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct RefineOutput {
    pub anchors: AnchorSet,
    pub intrinsics: Intrinsics,
    /// Optimized camera poses by frame.
    pub camera_poses: BTreeMap<u32, Pose>,
    pub stages: Vec<StageReport>,
    pub extrinsic: Pose,
    pub extrinsic_report: ExtrinsicReport,
}

/// Runs the whole refinement. `on_stage` receives each stage report when the
/// stage finishes.
pub fn refine(inputs: &RefineInputs, cfg: &RefineConfig, on_stage: impl FnMut(&StageReport)) -> Result<RefineOutput> {
    cfg.validate()?;
    let anchors = build_anchors(inputs.correspondences, inputs.ortho, inputs.dem, &cfg.effective_filters());
    log::info!(
        "anchors: {} kept of {} candidates ({} spacing, {} slope, {} out of bounds, {} inconsistent)",
        anchors.stats.kept,
        anchors.stats.candidates,
        anchors.stats.dropped_spacing,
        anchors.stats.dropped_slope,
        anchors.stats.dropped_out_of_bounds,
        anchors.stats.dropped_inconsistent
    );
    if anchors.anchors.is_empty() {
        return Err(Error::EmptyInput("no anchors survived filtering".into()));
    }
    let (mut state, factors) = build_graph(&GraphInputs {
        ins: inputs.ins,
        anchors: &anchors.anchors,
        intrinsics: inputs.intrinsics,
        extrinsic: inputs.extrinsic,
        budget: cfg.ablations.budget(&cfg.budget),
        pixel_sigma: cfg.pixel_sigma,
        kernels: cfg.kernels.to_kernels()?,
    })?;
    let stages = staged_optimize_with(&mut state, &factors, &cfg.effective_stages(), on_stage)?;

    let camera_poses: BTreeMap<u32, Pose> = state.frames.iter().copied().zip(state.poses.iter().copied()).collect();
    let mut cams = Vec::with_capacity(inputs.ins.len());
    let mut ins = Vec::with_capacity(inputs.ins.len());
    for m in inputs.ins {
        if let Some(c) = camera_poses.get(&m.frame) {
            cams.push(*c);
            ins.push(m.pose);
        }
    }
    let est = refine_extrinsics(&cams, &ins, &inputs.extrinsic, &cfg.extrinsic.to_options()?)?;
    log::info!(
        "extrinsic adjustment: {} iterations, {} of {} frames inside the kernel",
        est.iterations,
        est.inliers,
        cams.len()
    );
    Ok(RefineOutput {
        anchors,
        intrinsics: state.intrinsics,
        camera_poses,
        stages,
        extrinsic: est.t_opt,
        extrinsic_report: ExtrinsicReport {
            frames: cams.len(),
            inliers: est.inliers,
            iterations: est.iterations,
            initial_cost: est.initial_cost,
            final_cost: est.final_cost,
            converged: est.converged,
        },
    })
}
