use geocalib::io::IntrinsicsJson;
use geocalib::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainConfig {
    /// East and north size of the elevation grid, meters.
    pub extent: [f64; 2],
    pub cell_size: f64,
    pub base_height: f64,
    /// Peak amplitude of the smooth value-noise relief, meters.
    pub roughness: f64,
    /// Wavelength of the coarsest noise octave, meters.
    pub feature_scale: f64,
    pub octaves: u32,
    /// Buildings per square kilometer.
    pub building_density: f64,
    /// Footprint side range, meters.
    pub building_size: [f64; 2],
    pub building_height: [f64; 2],
    /// Vertical noise added to every emitted DEM cell, meters.
    pub dem_noise: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            extent: [2700.0, 2300.0],
            cell_size: 4.0,
            base_height: 120.0,
            roughness: 25.0,
            feature_scale: 700.0,
            octaves: 3,
            building_density: 15.0,
            building_size: [15.0, 40.0],
            building_height: [6.0, 20.0],
            dem_noise: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightPattern {
    /// One straight line along the initial heading.
    Straight,
    /// Parallel east-west legs joined by half-circle turns.
    Lawnmower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub altitude_agl: f64,
    /// Meters per second.
    pub speed: f64,
    /// Hz.
    pub frame_rate: f64,
    pub frames: u32,
    pub pattern: FlightPattern,
    /// Heading of the first leg, degrees counterclockwise from east.
    pub heading_deg: f64,
    pub leg_length: f64,
    pub leg_spacing: f64,
    /// Amplitude of the slow roll/pitch/yaw oscillation, degrees.
    pub attitude_wobble_deg: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            altitude_agl: 400.0,
            speed: 40.0,
            frame_rate: 5.0,
            frames: 1500,
            pattern: FlightPattern::Lawnmower,
            heading_deg: 0.0,
            leg_length: 1700.0,
            leg_spacing: 250.0,
            attitude_wobble_deg: 1.5,
        }
    }
}

/// Camera mount on the INS body (x forward, y left, z up). The nominal mount
/// looks straight down with image rows running backward; `misalignment_deg`
/// rotates the camera away from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MountConfig {
    pub misalignment_deg: [f64; 3],
    /// Camera center in the body frame, meters.
    pub lever_arm: [f64; 3],
}

impl Default for MountConfig {
    fn default() -> Self {
        Self {
            misalignment_deg: [0.6, -0.4, 0.9],
            lever_arm: [0.25, -0.1, -0.35],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub ins_rot_deg: f64,
    pub ins_pos: f64,
    pub pixel: f64,
    /// Horizontal error of each track's orthophoto point, meters. Vertical
    /// error comes from the DEM (`terrain.dem_noise`).
    pub anchor_xy: f64,
    pub outlier_fraction: f64,
    /// Outlier tracks get their orthophoto point displaced uniformly within
    /// this radius, meters.
    pub outlier_radius: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            ins_rot_deg: 0.05,
            ins_pos: 0.05,
            pixel: 0.5,
            anchor_xy: 0.1,
            outlier_fraction: 0.0,
            outlier_radius: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationConfig {
    /// Landmark density is chosen so a frame sees about this many.
    pub landmarks_per_frame: f64,
    /// Longest track before a landmark is re-matched as a new anchor.
    pub track_length: u32,
    /// Orthophoto resolution, pixels per meter.
    pub ortho_resolution: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            landmarks_per_frame: 300.0,
            track_length: 40,
            ortho_resolution: 10.0,
        }
    }
}

/// Offsets applied to the true calibration to form the initial guess.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeConfig {
    /// Right-multiplied rotation, degrees, in the camera frame.
    pub rot_deg: [f64; 3],
    /// Right-multiplied translation, meters, in the camera frame.
    pub trans: [f64; 3],
    /// Relative focal length error applied to fx and fy.
    pub focal_rel: f64,
    pub principal_point: [f64; 2],
    pub dist: [f64; 4],
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            rot_deg: [0.0, 0.0, 2.0],
            trans: [0.06, 0.06, 0.05],
            focal_rel: 0.01,
            principal_point: [5.0, 5.0],
            dist: [0.0; 4],
        }
    }
}

impl DegradeConfig {
    pub fn none() -> Self {
        Self {
            rot_deg: [0.0; 3],
            trans: [0.0; 3],
            focal_rel: 0.0,
            principal_point: [0.0; 2],
            dist: [0.0; 4],
        }
    }
}

/// Held-out 2D-3D matches for the localization benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VlConfig {
    /// Emit matches for every n-th frame; 0 disables.
    pub every: u32,
    pub matches: usize,
}

impl Default for VlConfig {
    fn default() -> Self {
        Self { every: 10, matches: 150 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    /// Map coordinates of the local frame origin, recorded in the sequence
    /// header.
    pub map_origin: [f64; 3],
    pub terrain: TerrainConfig,
    pub trajectory: TrajectoryConfig,
    pub camera: IntrinsicsJson,
    pub mount: MountConfig,
    pub noise: NoiseConfig,
    pub observations: ObservationConfig,
    pub degrade: DegradeConfig,
    pub vl: VlConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            map_origin: [500_000.0, 5_400_000.0, 0.0],
            terrain: TerrainConfig::default(),
            trajectory: TrajectoryConfig::default(),
            // 1600x1100 px with about 60 x 43 degrees field of view.
            camera: IntrinsicsJson {
                fx: 1385.0,
                fy: 1385.0,
                cx: 800.0,
                cy: 550.0,
                dist: [-0.04, 0.01, 2e-4, -1e-4],
                width: 1600,
                height: 1100,
            },
            mount: MountConfig::default(),
            noise: NoiseConfig::default(),
            observations: ObservationConfig::default(),
            degrade: DegradeConfig::default(),
            vl: VlConfig::default(),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl SimConfig {
    /// Every noise source off, nothing degraded.
    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseConfig {
            ins_rot_deg: 0.0,
            ins_pos: 0.0,
            pixel: 0.0,
            anchor_xy: 0.0,
            outlier_fraction: 0.0,
            ..self.noise
        };
        self.terrain.dem_noise = 0.0;
        self.degrade = DegradeConfig::none();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.terrain;
        check(t.extent.iter().all(|e| *e > 0.0 && e.is_finite()), "terrain.extent must be positive")?;
        check(t.cell_size > 0.0 && t.cell_size.is_finite(), "terrain.cell_size must be positive")?;
        check(t.extent.iter().all(|e| e / t.cell_size >= 2.0), "terrain.extent must span at least two cells")?;
        check(t.roughness >= 0.0 && t.feature_scale > 0.0, "terrain.roughness must be >= 0 and feature_scale > 0")?;
        check(t.building_density >= 0.0, "terrain.building_density must be >= 0")?;
        check(
            t.building_size[0] > 0.0 && t.building_size[0] <= t.building_size[1],
            "terrain.building_size must be an increasing positive range",
        )?;
        check(t.building_height[0] <= t.building_height[1], "terrain.building_height must be an increasing range")?;
        check(t.dem_noise >= 0.0, "terrain.dem_noise must be >= 0")?;
        check(all_finite(&[t.base_height, t.roughness, t.building_height[0], t.building_height[1]]), "terrain values must be finite")?;

        let tr = &self.trajectory;
        check(tr.altitude_agl > 0.0, "trajectory.altitude_agl must be positive")?;
        check(tr.speed >= 0.0 && tr.speed.is_finite(), "trajectory.speed must be >= 0")?;
        check(tr.frame_rate > 0.0 && tr.frame_rate.is_finite(), "trajectory.frame_rate must be positive")?;
        check(tr.frames >= 1, "trajectory.frames must be at least 1")?;
        check(tr.leg_length > 0.0 && tr.leg_spacing > 0.0, "trajectory legs must be positive")?;
        check(tr.attitude_wobble_deg.abs() < 30.0, "trajectory.attitude_wobble_deg must stay below 30")?;

        self.camera.to_intrinsics().map_err(|m| Error::Config(format!("camera: {m}")))?;

        let n = &self.noise;
        check(
            [n.ins_rot_deg, n.ins_pos, n.pixel, n.anchor_xy, n.outlier_radius].iter().all(|x| *x >= 0.0 && x.is_finite()),
            "noise sigmas must be finite and >= 0",
        )?;
        check((0.0..=1.0).contains(&n.outlier_fraction), "noise.outlier_fraction must lie in [0, 1]")?;

        let o = &self.observations;
        check(o.landmarks_per_frame > 0.0, "observations.landmarks_per_frame must be positive")?;
        check(o.track_length >= 1, "observations.track_length must be at least 1")?;
        check(o.ortho_resolution > 0.0, "observations.ortho_resolution must be positive")?;

        let d = &self.degrade;
        check(
            all_finite(&d.rot_deg) && all_finite(&d.trans) && all_finite(&d.principal_point) && all_finite(&d.dist) && d.focal_rel > -1.0,
            "degrade magnitudes must be finite",
        )?;
        check(all_finite(&self.mount.misalignment_deg) && all_finite(&self.mount.lever_arm), "mount values must be finite")?;
        Ok(())
    }
}
