//! Flight path and true INS attitude.

use std::f64::consts::PI;

use geocalib::{Error, Pose, Result, Rotation};
use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{FlightPattern, SimConfig};
use crate::world::World;

/// Position in the pattern frame (u along the first leg, w to its left)
/// and heading relative to the first leg, at arc length `s`.
fn pattern_point(pattern: FlightPattern, leg: f64, spacing: f64, s: f64) -> (Vector2<f64>, f64) {
    match pattern {
        FlightPattern::Straight => (Vector2::new(s, 0.0), 0.0),
        FlightPattern::Lawnmower => {
            let radius = 0.5 * spacing;
            let seg = leg + PI * radius;
            let k = (s / seg).floor();
            let r = s - k * seg;
            let w = k * spacing;
            let even = (k as u64) % 2 == 0;
            if r < leg {
                if even {
                    (Vector2::new(r, w), 0.0)
                } else {
                    (Vector2::new(leg - r, w), PI)
                }
            } else {
                let a = (r - leg) / radius;
                if even {
                    (Vector2::new(leg + radius * a.sin(), w + radius - radius * a.cos()), a)
                } else {
                    (Vector2::new(-radius * a.sin(), w + radius - radius * a.cos()), PI - a)
                }
            }
        }
    }
}

/// Distance from the camera nadir to the farthest image corner on the
/// ground, plus the lateral shift from the largest tilt.
fn footprint_margin(cfg: &SimConfig) -> f64 {
    let k = &cfg.camera;
    let h = cfg.trajectory.altitude_agl + cfg.terrain.roughness + cfg.terrain.building_height[1];
    let half_w = k.width.max(1) as f64 / k.fx * h * 0.5;
    let half_h = k.height.max(1) as f64 / k.fy * h * 0.5;
    let tilt = (cfg.trajectory.attitude_wobble_deg.abs() * 3f64.sqrt()
        + cfg.mount.misalignment_deg.iter().map(|a| a.abs()).fold(0.0, f64::max))
    .to_radians();
    (half_w * half_w + half_h * half_h).sqrt() + h * tilt.tan() + 20.0
}

/// True INS poses (body x forward, y left, z up) in grid-relative
/// coordinates, one per frame. The pattern is centered on the grid.
pub fn generate_trajectory(cfg: &SimConfig, world: &World, rng: &mut ChaCha8Rng) -> Result<Vec<Pose>> {
    let tr = &cfg.trajectory;
    let heading0 = tr.heading_deg.to_radians();
    let (c0, s0) = (heading0.cos(), heading0.sin());
    let samples: Vec<(Vector2<f64>, f64)> = (0..tr.frames)
        .map(|k| {
            let s = tr.speed * k as f64 / tr.frame_rate;
            let (p, psi) = pattern_point(tr.pattern, tr.leg_length, tr.leg_spacing, s);
            (Vector2::new(c0 * p.x - s0 * p.y, s0 * p.x + c0 * p.y), heading0 + psi)
        })
        .collect();
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for (p, _) in &samples {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = world.dem.extent();
    let center = Vector2::new(0.5 * (extent[0] + extent[2]), 0.5 * (extent[1] + extent[3]));
    let shift = center - 0.5 * (lo + hi);
    let margin = footprint_margin(cfg);

    let amp = tr.attitude_wobble_deg.to_radians();
    let wobble: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.02..0.1), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let mut poses = Vec::with_capacity(samples.len());
    for (k, (p, psi)) in samples.iter().enumerate() {
        let xy = p + shift;
        if xy.x < extent[0] + margin || xy.x > extent[2] - margin || xy.y < extent[1] + margin || xy.y > extent[3] - margin {
            return Err(Error::OutOfBounds { x: xy.x, y: xy.y });
        }
        let time = k as f64 / tr.frame_rate;
        let w: Vec<f64> = wobble.iter().map(|(f, ph)| amp * (2.0 * PI * f * time + ph).sin()).collect();
        let r = Rotation::exp(&Vector3::new(0.0, 0.0, psi + w[2]))
            .compose(&Rotation::exp(&Vector3::new(0.0, w[1], 0.0)))
            .compose(&Rotation::exp(&Vector3::new(w[0], 0.0, 0.0)));
        let z = world.smooth.height(xy.x, xy.y) + tr.altitude_agl;
        poses.push(Pose::new(r, Vector3::new(xy.x, xy.y, z)));
    }
    Ok(poses)
}

/// True INS-to-camera extrinsic from the mount configuration.
pub fn mount_extrinsic(cfg: &SimConfig) -> Pose {
    // Camera x = body right, camera y = body backward, camera z = body down.
    let nominal = Rotation::from_matrix(&nalgebra::Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0));
    let m = cfg.mount.misalignment_deg;
    let mis = Rotation::exp(&Vector3::new(m[0].to_radians(), m[1].to_radians(), m[2].to_radians()));
    Pose::new(nominal.compose(&mis), Vector3::from(cfg.mount.lever_arm))
}
