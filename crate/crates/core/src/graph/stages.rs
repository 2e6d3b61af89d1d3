use log::{info, warn};
use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::{solve_lm, ActiveMask, AnchorPriorFactor, Factors, GraphState, KernelSet, LmOptions, PosePriorFactor, ReprojectionFactor};
use crate::anchors::Anchor;
use crate::camera::INTRINSICS_DIM;
use crate::{Error, Intrinsics, Pose, Result};

/// GNSS/INS body pose with per-axis isotropic standard deviations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsPoseMeasurement {
    pub frame: u32,
    pub pose: Pose,
    /// Radians.
    pub sigma_rot: f64,
    /// Meters.
    pub sigma_pos: f64,
}

/// Extra camera-pose uncertainty on top of the INS noise: the extrinsic
/// calibration itself plus a lumped term for everything unmodeled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorBudget {
    pub sigma_rot_calib: f64,
    pub sigma_pos_calib: f64,
    pub sigma_rot_lump: f64,
    pub sigma_pos_lump: f64,
}

impl Default for PriorBudget {
    fn default() -> Self {
        Self {
            sigma_rot_calib: 1f64.to_radians(),
            sigma_pos_calib: 0.2,
            sigma_rot_lump: 0.2f64.to_radians(),
            sigma_pos_lump: 0.1,
        }
    }
}

/// Camera pose prior `P_ins * T` and its per-axis sigmas `[rot x3; pos x3]`,
/// with the budget terms added in quadrature.
pub fn camera_pose_prior(m: &InsPoseMeasurement, t_init: &Pose, budget: &PriorBudget) -> (Pose, Vector6<f64>) {
    let rot = (m.sigma_rot.powi(2) + budget.sigma_rot_calib.powi(2) + budget.sigma_rot_lump.powi(2)).sqrt();
    let pos = (m.sigma_pos.powi(2) + budget.sigma_pos_calib.powi(2) + budget.sigma_pos_lump.powi(2)).sqrt();
    (m.pose.compose(t_init), Vector6::new(rot, rot, rot, pos, pos, pos))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Drop the anchor slope/spacing filters and widen the lumped rotation prior.
    pub no_nadir: bool,
    /// Optimize full poses in one stage instead of rotations then translations.
    pub cam_opt_joint: bool,
    /// Skip the final joint stage.
    pub no_fine_adjust: bool,
}

/// How much `no_nadir` inflates the lumped rotation sigma.
pub const NO_NADIR_ROT_LUMP_SCALE: f64 = 10.0;

impl Ablations {
    pub fn budget(&self, base: &PriorBudget) -> PriorBudget {
        let mut b = *base;
        if self.no_nadir {
            b.sigma_rot_lump *= NO_NADIR_ROT_LUMP_SCALE;
        }
        b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Rotations,
    Translations,
    /// Rotations and translations together.
    Poses,
    #[serde(rename = "landmarks_xy")]
    LandmarksXY,
    #[serde(rename = "intrinsics")]
    IntrinsicsOnly,
    Joint,
}

impl StageKind {
    pub fn name(&self) -> &'static str {
        match self {
            StageKind::Rotations => "rotations",
            StageKind::Translations => "translations",
            StageKind::Poses => "poses",
            StageKind::LandmarksXY => "landmarks_xy",
            StageKind::IntrinsicsOnly => "intrinsics",
            StageKind::Joint => "joint",
        }
    }

    pub fn mask(&self, intrinsics: &[bool; INTRINSICS_DIM]) -> ActiveMask {
        let mut m = ActiveMask::none();
        match self {
            StageKind::Rotations => m.pose_rotation = true,
            StageKind::Translations => m.pose_translation = true,
            StageKind::Poses => {
                m.pose_rotation = true;
                m.pose_translation = true;
            }
            StageKind::LandmarksXY => m.landmark_xy = true,
            StageKind::IntrinsicsOnly => m.intrinsics = *intrinsics,
            StageKind::Joint => {
                m = ActiveMask::all();
                m.intrinsics = *intrinsics;
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    pub schedule: Vec<StageKind>,
    pub max_iterations: usize,
    pub joint_max_iterations: usize,
    pub rel_tol: f64,
    /// Intrinsic coordinates allowed to move, `[fx, fy, cx, cy, k1, k2, p1, p2]`.
    pub intrinsics_mask: [bool; INTRINSICS_DIM],
    /// Set from the run's ablation flags, not read from stage settings.
    #[serde(skip)]
    pub ablations: Ablations,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            schedule: vec![
                StageKind::Rotations,
                StageKind::Translations,
                StageKind::LandmarksXY,
                StageKind::IntrinsicsOnly,
                StageKind::Joint,
            ],
            max_iterations: 50,
            joint_max_iterations: 100,
            rel_tol: 1e-8,
            intrinsics_mask: [true; INTRINSICS_DIM],
            ablations: Ablations::default(),
        }
    }
}

impl StageConfig {
    /// The schedule after applying the ablation flags.
    pub fn effective_schedule(&self) -> Vec<StageKind> {
        let mut out = Vec::with_capacity(self.schedule.len());
        for &s in &self.schedule {
            match s {
                StageKind::Rotations | StageKind::Translations if self.ablations.cam_opt_joint => {
                    if !out.contains(&StageKind::Poses) {
                        out.push(StageKind::Poses);
                    }
                }
                StageKind::Joint if self.ablations.no_fine_adjust => {}
                s => out.push(s),
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("stage schedule is empty".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// 1-based position in the executed schedule.
    pub stage: usize,
    pub name: String,
    pub iterations: usize,
    pub cost_before: f64,
    pub cost_after: f64,
    pub converged: bool,
}

/// Runs the schedule stage by stage. `on_stage` sees each report as soon as
/// the stage finishes, so progress survives a later failure.
pub fn staged_optimize_with(
    state: &mut GraphState,
    factors: &Factors,
    cfg: &StageConfig,
    mut on_stage: impl FnMut(&StageReport),
) -> Result<Vec<StageReport>> {
    cfg.validate()?;
    let mut reports = Vec::new();
    for (idx, kind) in cfg.effective_schedule().into_iter().enumerate() {
        let opts = LmOptions {
            max_iterations: if kind == StageKind::Joint {
                cfg.joint_max_iterations
            } else {
                cfg.max_iterations
            },
            rel_tol: cfg.rel_tol,
            ..LmOptions::default()
        };
        let mask = kind.mask(&cfg.intrinsics_mask);
        let wrap = |e: Error| Error::Stage {
            stage: idx + 1,
            name: kind.name().to_string(),
            source: Box::new(e),
        };
        let r = solve_lm(state, factors, &mask, &opts).map_err(wrap)?;
        if !r.converged {
            warn!("stage {} ({}) hit the iteration cap", idx + 1, kind.name());
        }
        info!(
            "stage {} ({}): {} iterations, cost {:.6e} -> {:.6e}",
            idx + 1,
            kind.name(),
            r.iterations,
            r.initial_cost,
            r.final_cost
        );
        let report = StageReport {
            stage: idx + 1,
            name: kind.name().to_string(),
            iterations: r.iterations,
            cost_before: r.initial_cost,
            cost_after: r.final_cost,
            converged: r.converged,
        };
        on_stage(&report);
        reports.push(report);
    }
    Ok(reports)
}

pub fn staged_optimize(state: &mut GraphState, factors: &Factors, cfg: &StageConfig) -> Result<Vec<StageReport>> {
    staged_optimize_with(state, factors, cfg, |_| {})
}

/// Everything needed to assemble the calibration graph.
#[derive(Clone, Debug)]
pub struct GraphInputs<'a> {
    pub ins: &'a [InsPoseMeasurement],
    pub anchors: &'a [Anchor],
    pub intrinsics: Intrinsics,
    pub extrinsic: Pose,
    pub budget: PriorBudget,
    /// Isotropic reprojection sigma, pixels.
    pub pixel_sigma: f64,
    pub kernels: KernelSet,
}

/// Poses start at their priors and landmarks at their anchor world priors.
/// Observations in frames without an INS measurement are ignored.
pub fn build_graph(inputs: &GraphInputs) -> Result<(GraphState, Factors)> {
    if inputs.ins.is_empty() {
        return Err(Error::EmptyInput("no INS measurements".into()));
    }
    if !(inputs.pixel_sigma > 0.0) {
        return Err(Error::InvalidInput("pixel sigma must be positive".into()));
    }
    let mut ins: Vec<&InsPoseMeasurement> = inputs.ins.iter().collect();
    ins.sort_by_key(|m| m.frame);
    if ins.windows(2).any(|w| w[0].frame == w[1].frame) {
        return Err(Error::InvalidInput("duplicate frame in INS sequence".into()));
    }
    if ins.iter().any(|m| !(m.sigma_rot > 0.0) || !(m.sigma_pos > 0.0)) {
        return Err(Error::InvalidInput("INS sigmas must be positive".into()));
    }

    let mut factors = Factors::new(inputs.kernels);
    let mut state = GraphState {
        frames: Vec::with_capacity(ins.len()),
        poses: Vec::with_capacity(ins.len()),
        landmark_ids: Vec::with_capacity(inputs.anchors.len()),
        landmarks: Vec::with_capacity(inputs.anchors.len()),
        intrinsics: inputs.intrinsics,
    };
    for (i, m) in ins.iter().enumerate() {
        let (prior, sigma) = camera_pose_prior(m, &inputs.extrinsic, &inputs.budget);
        state.frames.push(m.frame);
        state.poses.push(prior);
        factors.pose_priors.push(PosePriorFactor { pose: i, prior, sigma });
    }

    let mut anchors: Vec<&Anchor> = inputs.anchors.iter().collect();
    anchors.sort_by_key(|a| a.id);
    if anchors.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidInput("duplicate anchor id".into()));
    }
    let mut orphans = 0usize;
    for (j, a) in anchors.iter().enumerate() {
        state.landmark_ids.push(a.id);
        state.landmarks.push(a.world_prior);
        factors.anchor_priors.push(AnchorPriorFactor {
            landmark: j,
            prior: a.world_prior,
            sigma: a.sigma,
        });
        for (frame, px) in &a.observations {
            match state.pose_index(*frame) {
                Some(i) => factors.reprojections.push(ReprojectionFactor {
                    pose: i,
                    landmark: j,
                    pixel: *px,
                    sigma: inputs.pixel_sigma,
                }),
                None => orphans += 1,
            }
        }
    }
    if orphans > 0 {
        warn!("{orphans} observations reference frames without an INS pose");
    }
    info!(
        "graph: {} poses, {} landmarks, {} reprojections, initial cost {:.6e}",
        state.poses.len(),
        state.landmarks.len(),
        factors.reprojections.len(),
        super::total_cost(&state, &factors)
    );
    Ok((state, factors))
}
