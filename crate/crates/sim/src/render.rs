//! Observations, tracks, noisy measurements and held-out matches.

use std::collections::BTreeMap;

use geocalib::anchors::{Correspondence, ElevationGrid, FrameCorrespondences, OrthoMeta};
use geocalib::camera::project;
use geocalib::eval::VlFrame;
use geocalib::graph::InsPoseMeasurement;
use geocalib::{Intrinsics, Pixel, Pose, Result, Rotation, Twist6};
use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{DegradeConfig, SimConfig};

/// Applies the configured offsets: `K' = K + offsets` (focal lengths scaled)
/// and `T' = T exp([rot; trans])`.
pub fn perturb_calibration(k: &Intrinsics, t: &Pose, d: &DegradeConfig) -> (Intrinsics, Pose) {
    let mut k2 = *k;
    k2.fx *= 1.0 + d.focal_rel;
    k2.fy *= 1.0 + d.focal_rel;
    k2.cx += d.principal_point[0];
    k2.cy += d.principal_point[1];
    k2.k1 += d.dist[0];
    k2.k2 += d.dist[1];
    k2.p1 += d.dist[2];
    k2.p2 += d.dist[3];
    let rot = Vector3::from(d.rot_deg).map(f64::to_radians);
    if rot.iter().all(|x| *x == 0.0) && d.trans.iter().all(|x| *x == 0.0) {
        return (k2, *t);
    }
    (k2, t.retract(&Twist6::new(rot, Vector3::from(d.trans))))
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma is finite and non-negative")
}

/// Uniform point in a disc of the given radius.
fn disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    (r * a.cos(), r * a.sin())
}

/// Landmarks bucketed on a square grid for footprint queries.
struct Buckets {
    size: f64,
    origin: [f64; 2],
    cols: usize,
    rows: usize,
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(points: &[Vector3<f64>], origin: [f64; 2], extent: [f64; 2], size: f64) -> Self {
        let cols = (extent[0] / size).ceil() as usize + 1;
        let rows = (extent[1] / size).ceil() as usize + 1;
        let mut cells = vec![Vec::new(); rows * cols];
        for (i, p) in points.iter().enumerate() {
            let c = (((p.x - origin[0]) / size).floor().max(0.0) as usize).min(cols - 1);
            let r = (((p.y - origin[1]) / size).floor().max(0.0) as usize).min(rows - 1);
            cells[r * cols + c].push(i);
        }
        Self {
            size,
            origin,
            cols,
            rows,
            cells,
        }
    }

    /// Indices within the square of half-width `radius`, in ascending order.
    fn near(&self, x: f64, y: f64, radius: f64) -> Vec<usize> {
        let idx = |v: f64, o: f64, n: usize| (((v - o) / self.size).floor().max(0.0) as usize).min(n - 1);
        let (c0, c1) = (idx(x - radius, self.origin[0], self.cols), idx(x + radius, self.origin[0], self.cols));
        let (r0, r1) = (idx(y - radius, self.origin[1], self.rows), idx(y + radius, self.origin[1], self.rows));
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                out.extend_from_slice(&self.cells[r * self.cols + c]);
            }
        }
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct SimStats {
    pub frames: usize,
    pub landmarks: usize,
    pub tracks: usize,
    pub outlier_tracks: usize,
    pub observations: usize,
    pub observations_per_frame_mean: f64,
    pub observations_per_frame_min: usize,
    pub observations_per_frame_max: usize,
    pub vl_frames: usize,
}

pub struct Rendered {
    pub ins: Vec<InsPoseMeasurement>,
    pub correspondences: Vec<FrameCorrespondences>,
    /// True world point of every track id.
    pub track_truth: BTreeMap<u64, Vector3<f64>>,
    pub dem: ElevationGrid,
    pub vl: Vec<VlFrame>,
    pub stats: SimStats,
}

/// Random streams used while rendering, one per noise source so that
/// changing one magnitude leaves the other draws untouched.
pub struct RenderRngs {
    pub pixel: ChaCha8Rng,
    pub ins: ChaCha8Rng,
    pub anchors: ChaCha8Rng,
    pub dem: ChaCha8Rng,
    pub vl: ChaCha8Rng,
}

/// Projects every landmark into every frame where it is visible, groups the
/// sightings into tracks and draws all measurement noise.
#[allow(clippy::too_many_arguments)]
pub fn render_observations(
    cfg: &SimConfig,
    k: &Intrinsics,
    extrinsic: &Pose,
    ins_true: &[Pose],
    landmarks: &[Vector3<f64>],
    dem_true: &ElevationGrid,
    ortho: &OrthoMeta,
    rngs: &mut RenderRngs,
) -> Result<Rendered> {
    let extent = dem_true.extent();
    let buckets = Buckets::new(
        landmarks,
        [extent[0], extent[1]],
        [extent[2] - extent[0], extent[3] - extent[1]],
        100.0,
    );
    let h = cfg.trajectory.altitude_agl + cfg.terrain.roughness + cfg.terrain.building_height[1];
    let radius = 0.5 * ((k.width as f64 / k.fx).hypot(k.height as f64 / k.fy)) * h + h * 0.2 + 50.0;

    // Clean sightings per landmark, in frame order.
    let mut sightings: Vec<Vec<(u32, Pixel)>> = vec![Vec::new(); landmarks.len()];
    let mut visible: Vec<Vec<(usize, Pixel)>> = Vec::with_capacity(ins_true.len());
    for (f, p) in ins_true.iter().enumerate() {
        let c = p.compose(extrinsic);
        let mut seen = Vec::new();
        for j in buckets.near(c.translation.x, c.translation.y, radius) {
            if let Ok(px) = project(k, &c, &landmarks[j]) {
                if k.contains(&px) {
                    sightings[j].push((f as u32, px));
                    seen.push((j, px));
                }
            }
        }
        visible.push(seen);
    }

    let n = &cfg.noise;
    let pix = normal(n.pixel);
    let axy = normal(n.anchor_xy);
    let mut per_frame: Vec<Vec<Correspondence>> = vec![Vec::new(); ins_true.len()];
    let mut track_truth = BTreeMap::new();
    let mut outlier_tracks = 0;
    let mut next_id = 0u64;
    let max_len = cfg.observations.track_length as usize;
    for (j, obs) in sightings.iter().enumerate() {
        let mut start = 0;
        while start < obs.len() {
            // A track is a run of consecutive frames, at most `max_len` long.
            let mut end = start + 1;
            while end < obs.len() && end - start < max_len && obs[end].0 == obs[end - 1].0 + 1 {
                end += 1;
            }
            let id = next_id;
            next_id += 1;
            let x = landmarks[j];
            track_truth.insert(id, x);
            let (dx, dy) = if rngs.anchors.random::<f64>() < n.outlier_fraction {
                outlier_tracks += 1;
                disc(&mut rngs.anchors, n.outlier_radius)
            } else {
                (axy.sample(&mut rngs.anchors), axy.sample(&mut rngs.anchors))
            };
            let sat = ortho.planar_to_pixel(x.x + dx, x.y + dy);
            for &(f, px) in &obs[start..end] {
                let u = Pixel::new(px.u + pix.sample(&mut rngs.pixel), px.v + pix.sample(&mut rngs.pixel));
                if k.contains(&u) {
                    per_frame[f as usize].push(Correspondence {
                        frame: f,
                        landmark: id,
                        uav: u,
                        sat,
                    });
                }
            }
            start = end;
        }
    }

    let rot = normal(n.ins_rot_deg.to_radians());
    let pos = normal(n.ins_pos);
    let ins = ins_true
        .iter()
        .enumerate()
        .map(|(f, p)| {
            let mut draw = |d: &Normal<f64>| Vector3::new(d.sample(&mut rngs.ins), d.sample(&mut rngs.ins), d.sample(&mut rngs.ins));
            let dr = draw(&rot);
            let dp = draw(&pos);
            InsPoseMeasurement {
                frame: f as u32,
                pose: Pose::new(p.rotation.compose(&Rotation::exp(&dr)), p.translation + dp),
                sigma_rot: n.ins_rot_deg.to_radians().max(1e-9),
                sigma_pos: n.ins_pos.max(1e-6),
            }
        })
        .collect();

    let dz = normal(cfg.terrain.dem_noise);
    let heights = dem_true
        .heights
        .iter()
        .map(|h| (h + dz.sample(&mut rngs.dem)) as f32 as f64)
        .collect();
    let dem = ElevationGrid::new(dem_true.origin, dem_true.cell_size, dem_true.rows, dem_true.cols, heights, cfg.terrain.dem_noise)?;

    let mut vl = Vec::new();
    if cfg.vl.every > 0 {
        let zn = normal(cfg.terrain.dem_noise);
        for (f, seen) in visible.iter().enumerate() {
            if f as u32 % cfg.vl.every != 0 {
                continue;
            }
            let m = cfg.vl.matches.min(seen.len());
            let mut picks: Vec<usize> = sample(&mut rngs.vl, seen.len(), m).into_vec();
            picks.sort_unstable();
            let matches = picks
                .into_iter()
                .map(|i| {
                    let (j, px) = seen[i];
                    let x = landmarks[j];
                    let xn = Vector3::new(x.x + axy.sample(&mut rngs.vl), x.y + axy.sample(&mut rngs.vl), x.z + zn.sample(&mut rngs.vl));
                    (xn, Pixel::new(px.u + pix.sample(&mut rngs.vl), px.v + pix.sample(&mut rngs.vl)))
                })
                .collect();
            vl.push(VlFrame { frame: f as u32, matches });
        }
    }

    let counts: Vec<usize> = per_frame.iter().map(|c| c.len()).collect();
    let observations: usize = counts.iter().sum();
    let stats = SimStats {
        frames: ins_true.len(),
        landmarks: landmarks.len(),
        tracks: track_truth.len(),
        outlier_tracks,
        observations,
        observations_per_frame_mean: observations as f64 / counts.len().max(1) as f64,
        observations_per_frame_min: counts.iter().copied().min().unwrap_or(0),
        observations_per_frame_max: counts.iter().copied().max().unwrap_or(0),
        vl_frames: vl.len(),
    };
    let correspondences = per_frame
        .into_iter()
        .enumerate()
        .map(|(f, corrs)| FrameCorrespondences { frame: f as u32, corrs })
        .collect();
    Ok(Rendered {
        ins,
        correspondences,
        track_truth,
        dem,
        vl,
        stats,
    })
}
