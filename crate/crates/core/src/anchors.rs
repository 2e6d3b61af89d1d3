//! Lifting satellite correspondences to georeferenced 3D anchors.
//!
//! The world frame is a local metric East-North-Up frame. An
//! [`ElevationGrid`] stores terrain heights at cell centers, rows running
//! north and columns east; an [`OrthoMeta`] describes a north-up
//! orthophoto (pixel rows run south).

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Pixel;

/// Lower bound on any anchor standard deviation, meters.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ElevationGrid {
    /// East/north coordinates of the center of cell (0, 0).
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major heights in meters; row `r` is `r * cell_size` north of the origin.
    pub heights: Vec<f64>,
    /// Reported vertical accuracy (1 sigma), meters.
    pub sigma_z: f64,
}

impl ElevationGrid {
    pub fn new(
        origin: [f64; 2],
        cell_size: f64,
        rows: usize,
        cols: usize,
        heights: Vec<f64>,
        sigma_z: f64,
    ) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::InvalidInput(format!("cell_size must be positive, got {cell_size}")));
        }
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidInput("elevation grid needs at least 2x2 cells".into()));
        }
        if heights.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} heights, got {}",
                rows * cols,
                heights.len()
            )));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite height at index {i}")));
        }
        if !(sigma_z >= 0.0) {
            return Err(Error::InvalidInput("sigma_z must be non-negative".into()));
        }
        Ok(Self {
            origin,
            cell_size,
            rows,
            cols,
            heights,
            sigma_z,
        })
    }

    /// Grid filled with a constant height.
    pub fn flat(origin: [f64; 2], cell_size: f64, rows: usize, cols: usize, height: f64) -> Result<Self> {
        Self::new(origin, cell_size, rows, cols, vec![height; rows * cols], 0.0)
    }

    #[inline]
    pub fn height(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.cols + col]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + col as f64 * self.cell_size,
            self.origin[1] + row as f64 * self.cell_size,
        ]
    }

    /// `[min_x, min_y, max_x, max_y]` spanned by the cell centers.
    pub fn extent(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + (self.cols - 1) as f64 * self.cell_size,
            self.origin[1] + (self.rows - 1) as f64 * self.cell_size,
        ]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.extent();
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    /// Bilinear interpolation between the four surrounding cell centers.
    pub fn sample(&self, x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            return Err(Error::OutOfBounds { x, y });
        }
        let fc = (x - self.origin[0]) / self.cell_size;
        let fr = (y - self.origin[1]) / self.cell_size;
        let c0 = (fc.floor() as usize).min(self.cols - 2);
        let r0 = (fr.floor() as usize).min(self.rows - 2);
        let tx = fc - c0 as f64;
        let ty = fr - r0 as f64;
        let h00 = self.height(r0, c0);
        let h01 = self.height(r0, c0 + 1);
        let h10 = self.height(r0 + 1, c0);
        let h11 = self.height(r0 + 1, c0 + 1);
        Ok((1.0 - ty) * ((1.0 - tx) * h00 + tx * h01) + ty * ((1.0 - tx) * h10 + tx * h11))
    }
}

pub fn sample_elevation(dem: &ElevationGrid, x: f64, y: f64) -> Result<f64> {
    dem.sample(x, y)
}

/// Georeference of a north-up orthophoto.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthoMeta {
    /// East/north coordinates of the bottom-left pixel.
    pub origin: [f64; 2],
    /// Pixels per meter.
    pub resolution: f64,
    pub width: u32,
    pub height: u32,
}

impl OrthoMeta {
    pub fn new(origin: [f64; 2], resolution: f64, width: u32, height: u32) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidInput(format!("ortho resolution must be positive, got {resolution}")));
        }
        Ok(Self {
            origin,
            resolution,
            width,
            height,
        })
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u <= (self.width - 1) as f64 && px.v <= (self.height - 1) as f64
    }

    /// Planar east/north coordinates of an orthophoto pixel.
    pub fn pixel_to_planar(&self, px: &Pixel) -> [f64; 2] {
        [
            self.origin[0] + px.u / self.resolution,
            self.origin[1] + ((self.height - 1) as f64 - px.v) / self.resolution,
        ]
    }

    /// Continuous orthophoto pixel of a planar location.
    pub fn planar_to_pixel(&self, x: f64, y: f64) -> Pixel {
        Pixel::new(
            (x - self.origin[0]) * self.resolution,
            (self.height - 1) as f64 - (y - self.origin[1]) * self.resolution,
        )
    }
}

/// Lifts an orthophoto pixel to a world point using the DEM height.
pub fn sat_pixel_to_world(v: &Pixel, ortho: &OrthoMeta, dem: &ElevationGrid) -> Result<Vector3<f64>> {
    let [x, y] = ortho.pixel_to_planar(v);
    if !ortho.contains(v) {
        return Err(Error::OutOfBounds { x, y });
    }
    Ok(Vector3::new(x, y, dem.sample(x, y)?))
}

/// Accepts a candidate when the DEM height range within `window_radius`
/// does not exceed `max_range`. Windows not fully inside the grid are
/// rejected.
pub fn slope_filter(candidate: &Vector3<f64>, dem: &ElevationGrid, window_radius: f64, max_range: f64) -> bool {
    if max_range == f64::INFINITY {
        return true;
    }
    let (x, y) = (candidate.x, candidate.y);
    let [x0, y0, x1, y1] = dem.extent();
    if x - window_radius < x0 || x + window_radius > x1 || y - window_radius < y0 || y + window_radius > y1 {
        return false;
    }
    let cs = dem.cell_size;
    let c_lo = ((x - window_radius - dem.origin[0]) / cs).ceil().max(0.0) as usize;
    let c_hi = (((x + window_radius - dem.origin[0]) / cs).floor() as usize).min(dem.cols - 1);
    let r_lo = ((y - window_radius - dem.origin[1]) / cs).ceil().max(0.0) as usize;
    let r_hi = (((y + window_radius - dem.origin[1]) / cs).floor() as usize).min(dem.rows - 1);
    let r2 = window_radius * window_radius;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let [cx, cy] = dem.cell_center(r, c);
            if (cx - x).powi(2) + (cy - y).powi(2) <= r2 {
                let h = dem.height(r, c);
                lo = lo.min(h);
                hi = hi.max(h);
            }
        }
    }
    // An empty window carries no evidence against the candidate.
    !(hi - lo > max_range)
}

/// One aerial-to-satellite match.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub frame: u32,
    pub landmark: u64,
    /// Pixel in the aerial image.
    pub uav: Pixel,
    /// Pixel in the orthophoto.
    pub sat: Pixel,
}

/// Greedy pass in input order keeping candidates at least `spacing` pixels
/// (in the aerial image) from every previously kept one.
pub fn min_spacing_filter(candidates: &[Correspondence], spacing: f64) -> Vec<Correspondence> {
    let mut kept: Vec<Correspondence> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if kept.iter().all(|k| k.uav.distance(&c.uav) >= spacing) {
            kept.push(*c);
        }
    }
    kept
}

/// Per-axis anchor standard deviations from orthophoto resolution, DEM
/// vertical accuracy and matching noise, combined as independent variances.
pub fn anchor_covariance(ortho: &OrthoMeta, sigma_dem_z: f64, sigma_match: f64) -> Vector3<f64> {
    let sxy = ((1.0 / ortho.resolution).powi(2) + sigma_match.powi(2)).sqrt();
    let sz = (sigma_dem_z.powi(2) + sigma_match.powi(2)).sqrt();
    Vector3::new(sxy.max(SIGMA_FLOOR), sxy.max(SIGMA_FLOOR), sz.max(SIGMA_FLOOR))
}

/// A georeferenced landmark with its aerial observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub id: u64,
    pub world_prior: Vector3<f64>,
    /// Per-axis standard deviations, meters.
    pub sigma: Vector3<f64>,
    /// `(frame, pixel)` sorted by frame, each frame at most once.
    pub observations: Vec<(u32, Pixel)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorFilterConfig {
    pub slope_enabled: bool,
    pub slope_window_radius: f64,
    pub slope_max_range: f64,
    pub spacing_enabled: bool,
    /// Minimum aerial-image spacing between newly created anchors, pixels.
    pub min_spacing_px: f64,
    /// Matching noise folded into the anchor covariance, meters.
    pub sigma_match: f64,
}

impl Default for AnchorFilterConfig {
    fn default() -> Self {
        Self {
            slope_enabled: true,
            slope_window_radius: 5.0,
            slope_max_range: 3.0,
            spacing_enabled: true,
            min_spacing_px: 8.0,
            sigma_match: 0.3,
        }
    }
}

/// Correspondences of one aerial frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCorrespondences {
    pub frame: u32,
    pub corrs: Vec<Correspondence>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorStats {
    pub candidates: usize,
    pub kept: usize,
    pub dropped_spacing: usize,
    pub dropped_slope: usize,
    pub dropped_out_of_bounds: usize,
    pub dropped_inconsistent: usize,
    pub duplicate_observations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
    pub stats: AnchorStats,
}

/// Groups correspondences into tracks by landmark id and lifts each track
/// to an anchor. The world prior comes from the first frame of the track;
/// filters are applied to the track's creating correspondence and a failing
/// track is dropped as a whole.
pub fn build_anchors(
    frames: &[FrameCorrespondences],
    ortho: &OrthoMeta,
    dem: &ElevationGrid,
    cfg: &AnchorFilterConfig,
) -> AnchorSet {
    let mut order: Vec<&FrameCorrespondences> = frames.iter().collect();
    order.sort_by_key(|f| f.frame);

    let mut stats = AnchorStats::default();
    // landmark -> (creating correspondence, observations)
    let mut tracks: BTreeMap<u64, (Correspondence, Vec<Correspondence>)> = BTreeMap::new();
    let mut rejected: std::collections::BTreeSet<u64> = Default::default();

    for f in order {
        let mut fresh = Vec::new();
        for c in &f.corrs {
            let c = Correspondence { frame: f.frame, ..*c };
            if rejected.contains(&c.landmark) {
                continue;
            }
            match tracks.get_mut(&c.landmark) {
                Some((_, obs)) => {
                    if obs.last().is_some_and(|o| o.frame == c.frame) {
                        stats.duplicate_observations += 1;
                    } else {
                        obs.push(c);
                    }
                }
                None => {
                    if fresh.iter().any(|o: &Correspondence| o.landmark == c.landmark) {
                        stats.duplicate_observations += 1;
                    } else {
                        fresh.push(c);
                    }
                }
            }
        }
        stats.candidates += fresh.len();
        let survivors = if cfg.spacing_enabled {
            min_spacing_filter(&fresh, cfg.min_spacing_px)
        } else {
            fresh.clone()
        };
        if survivors.len() != fresh.len() {
            let keep: std::collections::BTreeSet<u64> = survivors.iter().map(|c| c.landmark).collect();
            for c in &fresh {
                if !keep.contains(&c.landmark) {
                    stats.dropped_spacing += 1;
                    rejected.insert(c.landmark);
                }
            }
        }
        for c in survivors {
            tracks.insert(c.landmark, (c, vec![c]));
        }
    }

    let sigma = anchor_covariance(ortho, dem.sigma_z, cfg.sigma_match);
    let mut anchors = Vec::with_capacity(tracks.len());
    'tracks: for (id, (first, obs)) in tracks {
        let prior = match sat_pixel_to_world(&first.sat, ortho, dem) {
            Ok(p) => p,
            Err(_) => {
                stats.dropped_out_of_bounds += 1;
                continue;
            }
        };
        if cfg.slope_enabled && !slope_filter(&prior, dem, cfg.slope_window_radius, cfg.slope_max_range) {
            stats.dropped_slope += 1;
            continue;
        }
        for o in &obs[1..] {
            if let Ok(other) = sat_pixel_to_world(&o.sat, ortho, dem) {
                let d = other - prior;
                if (0..3).any(|i| d[i].abs() > 3.0 * sigma[i]) {
                    log::warn!("{}", Error::InconsistentTrack { landmark: id });
                    stats.dropped_inconsistent += 1;
                    continue 'tracks;
                }
            }
        }
        anchors.push(Anchor {
            id,
            world_prior: prior,
            sigma,
            observations: obs.iter().map(|o| (o.frame, o.uav)).collect(),
        });
    }
    stats.kept = anchors.len();
    AnchorSet { anchors, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp_grid() -> ElevationGrid {
        // heights = 100 + 10 * col, constant along rows
        let (rows, cols) = (4, 5);
        let heights = (0..rows).flat_map(|_| (0..cols).map(|c| 100.0 + 10.0 * c as f64)).collect();
        ElevationGrid::new([0.0, 0.0], 2.0, rows, cols, heights, 0.5).unwrap()
    }

    fn ortho() -> OrthoMeta {
        OrthoMeta::new([0.0, 0.0], 10.0, 80, 60).unwrap()
    }

    #[test]
    fn sample_elevation_cases() {
        let g = ramp_grid();
        assert_eq!(sample_elevation(&g, 4.0, 2.0).unwrap(), g.height(1, 2));
        assert_relative_eq!(sample_elevation(&g, 1.0, 3.3).unwrap(), 105.0, epsilon = 1e-12);
        let flat = ElevationGrid::flat([-10.0, -10.0], 1.0, 21, 21, 120.0).unwrap();
        for (x, y) in [(-10.0, -10.0), (0.3, 7.7), (10.0, 10.0)] {
            assert_eq!(sample_elevation(&flat, x, y).unwrap(), 120.0);
        }
        assert!(matches!(g.sample(-0.1, 1.0), Err(Error::OutOfBounds { .. })));
        assert!(g.sample(8.0, 6.0).is_ok());
        assert!(g.sample(8.0001, 6.0).is_err());
    }

    #[test]
    fn ortho_lift_cases() {
        let o = ortho();
        let g = ElevationGrid::flat([0.0, 0.0], 1.0, 8, 10, 42.0).unwrap();
        let corner = sat_pixel_to_world(&Pixel::new(0.0, 59.0), &o, &g).unwrap();
        assert_eq!(corner, Vector3::new(0.0, 0.0, 42.0));
        let east = sat_pixel_to_world(&Pixel::new(1.0, 59.0), &o, &g).unwrap();
        assert_relative_eq!(east.x, 0.1, epsilon = 1e-15);
        assert!(sat_pixel_to_world(&Pixel::new(-1.0, 0.0), &o, &g).is_err());
    }

    #[test]
    fn quantized_round_trip_within_half_pixel() {
        let o = ortho();
        for i in 0..200 {
            let x = 0.037 * i as f64;
            let y = 5.9 - 0.029 * i as f64;
            let px = o.planar_to_pixel(x, y);
            let q = Pixel::new(px.u.round(), px.v.round());
            let [bx, by] = o.pixel_to_planar(&q);
            assert!((bx - x).abs() <= 0.5 / o.resolution + 1e-12);
            assert!((by - y).abs() <= 0.5 / o.resolution + 1e-12);
            let [ex, ey] = o.pixel_to_planar(&px);
            assert!((ex - x).abs() < 1e-12 && (ey - y).abs() < 1e-12);
        }
    }

    fn step_grid() -> ElevationGrid {
        // 1 m cells, ground at 50 m, a 10 m building for x >= 20.
        let (rows, cols) = (41, 41);
        let heights = (0..rows)
            .flat_map(|_| (0..cols).map(|c| if c >= 20 { 60.0 } else { 50.0 }))
            .collect();
        ElevationGrid::new([0.0, 0.0], 1.0, rows, cols, heights, 0.5).unwrap()
    }

    #[test]
    fn slope_filter_cases() {
        let flat = ElevationGrid::flat([0.0, 0.0], 1.0, 41, 41, 50.0).unwrap();
        assert!(slope_filter(&Vector3::new(20.0, 20.0, 50.0), &flat, 3.0, 2.0));
        let step = step_grid();
        let beside = Vector3::new(18.5, 20.0, 50.0);
        // Brute-force window range for the constructed step.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..41 {
            for c in 0..41 {
                if ((c as f64 - 18.5).powi(2) + (r as f64 - 20.0).powi(2)).sqrt() <= 3.0 {
                    lo = lo.min(step.height(r, c));
                    hi = hi.max(step.height(r, c));
                }
            }
        }
        assert_eq!(hi - lo, 10.0);
        assert!(!slope_filter(&beside, &step, 3.0, 2.0));
        assert!(slope_filter(&Vector3::new(8.0, 20.0, 50.0), &step, 3.0, 2.0));
        assert!(slope_filter(&beside, &step, 3.0, f64::INFINITY));
        // Partial window coverage is rejected.
        assert!(!slope_filter(&Vector3::new(1.0, 20.0, 50.0), &flat, 3.0, 2.0));
    }

    fn corr(frame: u32, lm: u64, u: f64, v: f64) -> Correspondence {
        Correspondence {
            frame,
            landmark: lm,
            uav: Pixel::new(u, v),
            sat: Pixel::new(0.0, 0.0),
        }
    }

    #[test]
    fn spacing_filter_cases() {
        let cs: Vec<_> = (0..5).map(|i| corr(0, i, 10.0 * i as f64, 0.0)).collect();
        assert_eq!(min_spacing_filter(&cs, 0.0).len(), 5);
        let dup = [corr(0, 1, 3.0, 4.0), corr(0, 2, 3.0, 4.0)];
        let kept = min_spacing_filter(&dup, 1.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].landmark, 1);
    }

    #[test]
    fn spacing_filter_matches_brute_force_greedy() {
        let mut cs = Vec::new();
        let mut id = 0;
        for i in 0..12 {
            for j in 0..9 {
                // scrambled order
                let (a, b) = ((i * 7) % 12, (j * 5) % 9);
                cs.push(corr(0, id, 5.0 * a as f64, 5.0 * b as f64));
                id += 1;
            }
        }
        let kept: Vec<u64> = min_spacing_filter(&cs, 8.0).iter().map(|c| c.landmark).collect();
        let mut oracle: Vec<(f64, f64, u64)> = Vec::new();
        for c in &cs {
            let ok = oracle
                .iter()
                .all(|&(u, v, _)| ((u - c.uav.u).powi(2) + (v - c.uav.v).powi(2)).sqrt() >= 8.0);
            if ok {
                oracle.push((c.uav.u, c.uav.v, c.landmark));
            }
        }
        let oracle: Vec<u64> = oracle.into_iter().map(|o| o.2).collect();
        assert_eq!(kept, oracle);
    }

    #[test]
    fn anchor_covariance_cases() {
        let o = OrthoMeta::new([0.0, 0.0], 10.0, 10, 10).unwrap();
        assert_relative_eq!(anchor_covariance(&o, 0.5, 0.0), Vector3::new(0.1, 0.1, 0.5), epsilon = 1e-15);
        assert_eq!(anchor_covariance(&o, 0.0, 0.0).z, SIGMA_FLOOR);
        assert_relative_eq!(anchor_covariance(&o, 0.5, 0.1).x, 0.02f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(anchor_covariance(&o, 0.5, 0.1).x, 0.1414, epsilon = 1e-4);
    }

    fn lift_setup() -> (OrthoMeta, ElevationGrid) {
        let o = OrthoMeta::new([0.0, 0.0], 10.0, 1000, 1000).unwrap();
        let g = ElevationGrid::flat([0.0, 0.0], 1.0, 100, 100, 30.0).unwrap();
        (o, g)
    }

    fn sat_corr(frame: u32, lm: u64, uav: (f64, f64), world: (f64, f64), o: &OrthoMeta) -> Correspondence {
        Correspondence {
            frame,
            landmark: lm,
            uav: Pixel::new(uav.0, uav.1),
            sat: o.planar_to_pixel(world.0, world.1),
        }
    }

    #[test]
    fn build_anchors_tracks_and_edge_cases() {
        let (o, g) = lift_setup();
        let cfg = AnchorFilterConfig::default();
        assert!(build_anchors(&[], &o, &g, &cfg).anchors.is_empty());

        let single = [FrameCorrespondences {
            frame: 3,
            corrs: vec![sat_corr(3, 9, (100.0, 100.0), (50.0, 50.0), &o)],
        }];
        let set = build_anchors(&single, &o, &g, &cfg);
        assert_eq!(set.anchors.len(), 1);
        assert_eq!(set.anchors[0].observations.len(), 1);
        assert_relative_eq!(set.anchors[0].world_prior, Vector3::new(50.0, 50.0, 30.0), epsilon = 1e-9);

        // Frames supplied out of order; a five-frame track with a consistent
        // satellite point and a second track whose later lift jumps 10 m.
        let frames: Vec<_> = (0..5u32)
            .rev()
            .map(|t| FrameCorrespondences {
                frame: t,
                corrs: vec![
                    sat_corr(t, 1, (100.0 + 20.0 * t as f64, 300.0), (40.0, 40.0), &o),
                    sat_corr(t, 2, (600.0, 300.0), (60.0 + if t == 3 { 10.0 } else { 0.0 }, 40.0), &o),
                ],
            })
            .collect();
        let set = build_anchors(&frames, &o, &g, &cfg);
        assert_eq!(set.anchors.len(), 1);
        assert_eq!(set.stats.dropped_inconsistent, 1);
        let a = &set.anchors[0];
        assert_eq!(a.id, 1);
        let order: Vec<u32> = a.observations.iter().map(|o| o.0).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);

        // Deterministic for identical inputs.
        assert_eq!(build_anchors(&frames, &o, &g, &cfg), set);
    }

    #[test]
    fn spacing_rejects_whole_track() {
        let (o, g) = lift_setup();
        let cfg = AnchorFilterConfig::default();
        let frames = vec![
            FrameCorrespondences {
                frame: 0,
                corrs: vec![
                    sat_corr(0, 1, (100.0, 100.0), (40.0, 40.0), &o),
                    sat_corr(0, 2, (103.0, 100.0), (42.0, 40.0), &o),
                ],
            },
            FrameCorrespondences {
                frame: 1,
                corrs: vec![
                    sat_corr(1, 1, (100.0, 150.0), (40.0, 40.0), &o),
                    sat_corr(1, 2, (300.0, 150.0), (42.0, 40.0), &o),
                ],
            },
        ];
        let set = build_anchors(&frames, &o, &g, &cfg);
        assert_eq!(set.anchors.len(), 1);
        assert_eq!(set.stats.dropped_spacing, 1);
        assert_eq!(set.anchors[0].observations.len(), 2);
        let relaxed = AnchorFilterConfig { spacing_enabled: false, ..cfg };
        assert_eq!(build_anchors(&frames, &o, &g, &relaxed).anchors.len(), 2);
    }

    #[test]
    fn filters_never_modify_survivors() {
        let (o, g) = lift_setup();
        let frames = vec![FrameCorrespondences {
            frame: 0,
            corrs: (0..20).map(|i| sat_corr(0, i, (7.0 * i as f64, 10.0), (20.0 + i as f64, 30.0), &o)).collect(),
        }];
        let all = build_anchors(&frames, &o, &g, &AnchorFilterConfig { spacing_enabled: false, ..Default::default() });
        let some = build_anchors(&frames, &o, &g, &AnchorFilterConfig::default());
        assert!(some.anchors.len() < all.anchors.len());
        for a in &some.anchors {
            assert!(all.anchors.contains(a));
        }
    }
}
