//! Terrain and landmark field.

use geocalib::anchors::ElevationGrid;
use geocalib::{Error, Result};
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{SimConfig, TerrainConfig};

/// Sum of value-noise octaves with smoothstep interpolation.
#[derive(Clone, Debug)]
pub struct SmoothTerrain {
    base: f64,
    octaves: Vec<Lattice>,
}

#[derive(Clone, Debug)]
struct Lattice {
    spacing: f64,
    amplitude: f64,
    cols: usize,
    values: Vec<f64>,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Lattice {
    fn value(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.spacing, y / self.spacing);
        let (c, r) = (gx.floor().max(0.0) as usize, gy.floor().max(0.0) as usize);
        let rows = self.values.len() / self.cols;
        let c = c.min(self.cols - 2);
        let r = r.min(rows - 2);
        let (tx, ty) = (smoothstep((gx - c as f64).clamp(0.0, 1.0)), smoothstep((gy - r as f64).clamp(0.0, 1.0)));
        let at = |r: usize, c: usize| self.values[r * self.cols + c];
        let top = at(r, c) * (1.0 - tx) + at(r, c + 1) * tx;
        let bottom = at(r + 1, c) * (1.0 - tx) + at(r + 1, c + 1) * tx;
        self.amplitude * (top * (1.0 - ty) + bottom * ty)
    }
}

impl SmoothTerrain {
    pub fn new(cfg: &TerrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut octaves = Vec::new();
        let mut spacing = cfg.feature_scale;
        let mut amplitude = cfg.roughness;
        let norm: f64 = (0..cfg.octaves).map(|o| 0.5f64.powi(o as i32)).sum();
        for _ in 0..cfg.octaves {
            let cols = (cfg.extent[0] / spacing).ceil() as usize + 2;
            let rows = (cfg.extent[1] / spacing).ceil() as usize + 2;
            let values = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            octaves.push(Lattice {
                spacing,
                amplitude: if norm > 0.0 { amplitude / norm } else { 0.0 },
                cols,
                values,
            });
            spacing *= 0.5;
            amplitude *= 0.5;
        }
        Self {
            base: cfg.base_height,
            octaves,
        }
    }

    /// Height at grid-relative coordinates (meters from the grid origin).
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.base + self.octaves.iter().map(|o| o.value(x, y)).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Building {
    /// Grid-relative `[x0, y0, x1, y1]`.
    pub rect: [f64; 4],
    pub height: f64,
}

/// True terrain in grid-relative coordinates, before the local-frame shift.
#[derive(Clone, Debug)]
pub struct World {
    pub smooth: SmoothTerrain,
    pub buildings: Vec<Building>,
    /// Terrain plus buildings sampled at cell centers and rounded to `f32`,
    /// so the written DEM reproduces it exactly.
    pub dem: ElevationGrid,
    pub landmarks: Vec<Vector3<f64>>,
}

fn f32_round(h: f64) -> f64 {
    h as f32 as f64
}

/// Ground footprint area of one frame at the configured altitude, m^2.
pub fn footprint_area(cfg: &SimConfig) -> f64 {
    let k = &cfg.camera;
    let h = cfg.trajectory.altitude_agl;
    (k.width as f64 / k.fx * h) * (k.height as f64 / k.fy * h)
}

/// Terrain, buildings and landmarks on the true surface, in coordinates
/// relative to the grid's cell (0, 0).
pub fn generate_world(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<World> {
    cfg.validate()?;
    let t = &cfg.terrain;
    let smooth = SmoothTerrain::new(t, rng);

    let area_km2 = t.extent[0] * t.extent[1] * 1e-6;
    let n_buildings = (t.building_density * area_km2).round() as usize;
    let buildings: Vec<Building> = (0..n_buildings)
        .map(|_| {
            let w = rng.random_range(t.building_size[0]..=t.building_size[1]);
            let d = rng.random_range(t.building_size[0]..=t.building_size[1]);
            let x0 = rng.random_range(0.0..(t.extent[0] - w).max(f64::MIN_POSITIVE));
            let y0 = rng.random_range(0.0..(t.extent[1] - d).max(f64::MIN_POSITIVE));
            Building {
                rect: [x0, y0, x0 + w, y0 + d],
                height: rng.random_range(t.building_height[0]..=t.building_height[1]),
            }
        })
        .collect();

    let cols = (t.extent[0] / t.cell_size).floor() as usize + 1;
    let rows = (t.extent[1] / t.cell_size).floor() as usize + 1;
    let mut heights = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (c as f64 * t.cell_size, r as f64 * t.cell_size);
            let mut h = smooth.height(x, y);
            for b in &buildings {
                if x >= b.rect[0] && x < b.rect[2] && y >= b.rect[1] && y < b.rect[3] {
                    h += b.height;
                }
            }
            heights.push(f32_round(h));
        }
    }
    let dem = ElevationGrid::new([0.0, 0.0], t.cell_size, rows, cols, heights, t.dem_noise)
        .map_err(|e| Error::Config(format!("terrain: {e}")))?;

    let density = cfg.observations.landmarks_per_frame / footprint_area(cfg);
    let span = [(cols - 1) as f64 * t.cell_size, (rows - 1) as f64 * t.cell_size];
    let n_landmarks = (density * span[0] * span[1]).round() as usize;
    let mut landmarks = Vec::with_capacity(n_landmarks);
    for _ in 0..n_landmarks {
        let x = rng.random_range(0.0..span[0]);
        let y = rng.random_range(0.0..span[1]);
        landmarks.push(Vector3::new(x, y, dem.sample(x, y)?));
    }
    Ok(World {
        smooth,
        buildings,
        dem,
        landmarks,
    })
}
