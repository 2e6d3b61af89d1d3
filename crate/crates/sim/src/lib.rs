//! Synthetic aerial surveys with known calibration: terrain with buildings,
//! a flight over it, identity-based feature tracks, noisy INS poses and
//! orthophoto correspondences.
//!
//! Everything is drawn from one seed. Each noise source has its own random
//! stream, so turning one off leaves the others unchanged.

mod config;
mod render;
mod trajectory;
mod world;

use std::path::Path;

use geocalib::anchors::{ElevationGrid, OrthoMeta};
use geocalib::eval::VlFrame;
use geocalib::io::{self, Sequence, SequenceHeader, Truth, SEQUENCE_FORMAT, SEQUENCE_VERSION};
use geocalib::{Intrinsics, Pose, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    DegradeConfig, FlightPattern, MountConfig, NoiseConfig, ObservationConfig, SimConfig, TerrainConfig, TrajectoryConfig, VlConfig,
};
pub use render::{perturb_calibration, render_observations, RenderRngs, Rendered, SimStats};
pub use trajectory::{generate_trajectory, mount_extrinsic};
pub use world::{footprint_area, generate_world, Building, SmoothTerrain, World};

/// File names inside a dataset directory.
pub mod files {
    pub const SEQUENCE: &str = "sequence.jsonl";
    pub const DEM: &str = "dem.json";
    pub const ORTHO: &str = "ortho.json";
    pub const TRUTH: &str = "truth.json";
    pub const INTRINSICS_INIT: &str = "intrinsics_init.json";
    pub const EXTRINSICS_INIT: &str = "extrinsics_init.json";
    pub const VL_MATCHES: &str = "vl_matches.jsonl";
    pub const STATS: &str = "simulation.json";
}

/// A generated dataset together with its ground truth.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub sequence: Sequence,
    /// DEM as written, with measurement noise.
    pub dem: ElevationGrid,
    /// Noise-free DEM the landmarks sit on.
    pub dem_true: ElevationGrid,
    pub ortho: OrthoMeta,
    pub truth: Truth,
    pub init_intrinsics: Intrinsics,
    pub init_extrinsic: Pose,
    pub vl: Vec<VlFrame>,
    pub stats: SimStats,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Generates a full dataset. The world frame is a local east-north-up frame
/// whose horizontal origin is the first true INS position.
pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let k = cfg
        .camera
        .to_intrinsics()
        .map_err(|m| geocalib::Error::Config(format!("camera: {m}")))?;
    let t = mount_extrinsic(cfg);

    let mut world = generate_world(cfg, &mut stream(cfg.seed, 1))?;
    let mut ins_true = generate_trajectory(cfg, &world, &mut stream(cfg.seed, 2))?;

    let p0 = ins_true[0].translation;
    let shift = nalgebra::Vector3::new(p0.x, p0.y, 0.0);
    world.dem.origin = [world.dem.origin[0] - p0.x, world.dem.origin[1] - p0.y];
    for x in &mut world.landmarks {
        *x -= shift;
    }
    for p in &mut ins_true {
        p.translation -= shift;
    }

    let extent = world.dem.extent();
    let res = cfg.observations.ortho_resolution;
    let ortho = OrthoMeta::new(
        [extent[0], extent[1]],
        res,
        ((extent[2] - extent[0]) * res).floor() as u32 + 1,
        ((extent[3] - extent[1]) * res).floor() as u32 + 1,
    )?;

    let mut rngs = RenderRngs {
        pixel: stream(cfg.seed, 3),
        ins: stream(cfg.seed, 4),
        anchors: stream(cfg.seed, 5),
        dem: stream(cfg.seed, 6),
        vl: stream(cfg.seed, 7),
    };
    let r = render_observations(cfg, &k, &t, &ins_true, &world.landmarks, &world.dem, &ortho, &mut rngs)?;
    log::info!(
        "simulated {} frames, {} tracks, {:.1} observations per frame",
        r.stats.frames,
        r.stats.tracks,
        r.stats.observations_per_frame_mean
    );
    let (init_intrinsics, init_extrinsic) = perturb_calibration(&k, &t, &cfg.degrade);
    let map_origin = [cfg.map_origin[0] + p0.x, cfg.map_origin[1] + p0.y, cfg.map_origin[2]];
    Ok(Dataset {
        sequence: Sequence {
            header: SequenceHeader {
                format: SEQUENCE_FORMAT.into(),
                version: SEQUENCE_VERSION,
                enu_origin: map_origin,
                frames: r.ins.len(),
            },
            ins: r.ins,
            correspondences: r.correspondences,
        },
        dem: r.dem,
        dem_true: world.dem,
        ortho,
        truth: Truth {
            intrinsics: k,
            extrinsic: t,
            ins_poses: ins_true.iter().enumerate().map(|(i, p)| (i as u32, *p)).collect(),
            landmarks: r.track_truth,
        },
        init_intrinsics,
        init_extrinsic,
        vl: r.vl,
        stats: r.stats,
    })
}

/// Writes every dataset file into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_sequence(&dir.join(files::SEQUENCE), &ds.sequence)?;
    io::write_dem(&dir.join(files::DEM), &ds.dem)?;
    io::write_ortho(&dir.join(files::ORTHO), &ds.ortho)?;
    io::write_truth(&dir.join(files::TRUTH), &ds.truth)?;
    io::write_intrinsics(&dir.join(files::INTRINSICS_INIT), &ds.init_intrinsics)?;
    io::write_pose(&dir.join(files::EXTRINSICS_INIT), &ds.init_extrinsic)?;
    if !ds.vl.is_empty() {
        io::write_vl_matches(&dir.join(files::VL_MATCHES), &ds.vl)?;
    }
    io::write_json(&dir.join(files::STATS), &ds.stats)?;
    Ok(())
}
