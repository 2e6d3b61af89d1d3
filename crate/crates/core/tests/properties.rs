//! Invariants of the public API, checked on random inputs.

use geocalib::anchors::{min_spacing_filter, sample_elevation, Correspondence, ElevationGrid, OrthoMeta};
use geocalib::camera::{backproject, distort, project, undistort};
use geocalib::extrinsic::{refine_extrinsics, ExtrinsicOptions};
use geocalib::geometry::{se3_exp, se3_log, so3_exp, so3_log};
use geocalib::graph::pose_prior_residual;
use geocalib::io::{read_intrinsics, read_pose, write_intrinsics, write_pose};
use geocalib::{Huber, Intrinsics, Pixel, Pose, Rotation, Twist6};
use nalgebra::{Matrix3, Vector2, Vector3};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

/// Rotation vectors with angle below `max`.
fn rotvec(max: f64) -> impl Strategy<Value = Vector3<f64>> {
    (vec3(1.0), 0.0..max).prop_filter_map("zero axis", |(v, a)| (v.norm() > 1e-3).then(|| v.normalize() * a))
}

fn pose() -> impl Strategy<Value = Pose> {
    (rotvec(std::f64::consts::PI), vec3(500.0)).prop_map(|(w, t)| Pose::new(so3_exp(&w), t))
}

fn nadir() -> Rotation {
    Rotation::from_matrix(&Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0))
}

fn camera() -> Intrinsics {
    let mut k = Intrinsics::pinhole(1385.0, 1385.0, 800.0, 550.0, 1600, 1100);
    k.k1 = -0.05;
    k.k2 = 0.01;
    k.p1 = 4e-4;
    k.p2 = -2e-4;
    k
}

proptest! {
    #[test]
    fn so3_log_inverts_exp(w in rotvec(std::f64::consts::PI - 0.1)) {
        let back = so3_log(&so3_exp(&w));
        prop_assert!((back - w).norm() < 1e-10);
        prop_assert!(back.norm() <= std::f64::consts::PI);
    }

    #[test]
    fn se3_log_inverts_exp(w in rotvec(std::f64::consts::PI - 0.1), v in vec3(100.0)) {
        let xi = Twist6::new(w, v);
        let back = se3_log(&se3_exp(&xi));
        prop_assert!((back.rot - xi.rot).norm() < 1e-10);
        prop_assert!((back.trans - xi.trans).norm() < 1e-9);
    }

    #[test]
    fn pose_times_inverse_is_identity(p in pose()) {
        for q in [p.compose(&p.inverse()), p.inverse().compose(&p)] {
            prop_assert!(q.rotation.angle() < 1e-9);
            prop_assert!(q.translation.norm() < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose()) {
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        prop_assert!(l.rotation.angle_to(&r.rotation) < 1e-9);
        prop_assert!((l.translation - r.translation).norm() < 1e-9);
    }

    #[test]
    fn long_chains_stay_orthonormal(steps in prop::collection::vec(rotvec(0.3), 200..400)) {
        let mut r = Rotation::identity();
        for w in &steps {
            r = r.compose(&so3_exp(w));
        }
        let m = r.matrix();
        prop_assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-9);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transform_then_inverse_transform(p in pose(), x in vec3(1000.0)) {
        prop_assert!((p.inverse_transform_point(&p.transform_point(&x)) - x).norm() < 1e-9);
    }

    #[test]
    fn pose_prior_residual_vanishes_at_the_prior(p in pose()) {
        prop_assert!(pose_prior_residual(&p, &p).norm() < 1e-12);
    }

    #[test]
    fn undistort_inverts_distort(x in -0.5f64..0.5, y in -0.4f64..0.4) {
        let k = camera();
        let n = Vector2::new(x, y);
        let back = undistort(&distort(&n, &k), &k).unwrap();
        prop_assert!((back - n).norm() < 1e-9);
    }

    #[test]
    fn backproject_inverts_project(
        w in rotvec(0.3),
        c in vec3(50.0),
        u in 0.0f64..1600.0,
        v in 0.0f64..1100.0,
        depth in 50.0f64..800.0,
    ) {
        let k = camera();
        let cam = Pose::new(nadir().compose(&so3_exp(&w)), c + Vector3::new(0.0, 0.0, 400.0));
        let px = Pixel::new(u, v);
        let x = backproject(&k, &cam, &px, depth).unwrap();
        let again = project(&k, &cam, &x).unwrap();
        prop_assert!(again.distance(&px) < 1e-6);
        prop_assert!((cam.inverse_transform_point(&x).z - depth).abs() < 1e-6);
    }

    #[test]
    fn bilinear_height_stays_within_the_cell(
        heights in prop::collection::vec(0.0f64..300.0, 16),
        fx in 0.0f64..3.0,
        fy in 0.0f64..3.0,
    ) {
        let dem = ElevationGrid::new([10.0, -5.0], 2.5, 4, 4, heights.clone(), 0.5).unwrap();
        let (x, y) = (10.0 + fx * 2.5, -5.0 + fy * 2.5);
        let h = sample_elevation(&dem, x, y).unwrap();
        let (r, c) = ((fy.floor() as usize).min(2), (fx.floor() as usize).min(2));
        let corners = [heights[r * 4 + c], heights[r * 4 + c + 1], heights[(r + 1) * 4 + c], heights[(r + 1) * 4 + c + 1]];
        let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(h >= lo - 1e-9 && h <= hi + 1e-9);
    }

    #[test]
    fn ortho_pixel_round_trips(u in 0.0f64..999.0, v in 0.0f64..799.0, res in 0.1f64..10.0) {
        let o = OrthoMeta::new([350.0, -20.0], res, 1000, 800).unwrap();
        let [x, y] = o.pixel_to_planar(&Pixel::new(u, v));
        let back = o.planar_to_pixel(x, y);
        prop_assert!((back.u - u).abs() < 1e-9 && (back.v - v).abs() < 1e-9);
    }

    #[test]
    fn spacing_filter_keeps_a_spaced_subset(
        pts in prop::collection::vec((0.0f64..200.0, 0.0f64..200.0), 0..60),
        spacing in 0.0f64..40.0,
    ) {
        let cands: Vec<Correspondence> = pts
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| Correspondence { frame: 0, landmark: i as u64, uav: Pixel::new(u, v), sat: Pixel::new(u, v) })
            .collect();
        let kept = min_spacing_filter(&cands, spacing);
        for (i, a) in kept.iter().enumerate() {
            prop_assert!(cands.contains(a));
            for b in &kept[i + 1..] {
                prop_assert!(a.uav.distance(&b.uav) >= spacing);
            }
        }
        // Every dropped candidate is too close to a kept one.
        for c in &cands {
            if !kept.contains(c) {
                prop_assert!(kept.iter().any(|k| k.uav.distance(&c.uav) < spacing));
            }
        }
    }

    #[test]
    fn huber_is_bounded_by_least_squares(s in 0.0f64..1e4, delta in 0.05f64..10.0) {
        let h = Huber::new(delta);
        prop_assert!(h.rho(s) <= s + 1e-12);
        let w = h.weight(s);
        prop_assert!(w > 0.0 && w <= 1.0);
    }

    #[test]
    fn exact_camera_poses_give_back_the_extrinsic(
        t_true in (rotvec(0.2), vec3(0.5)).prop_map(|(w, t)| Pose::new(nadir().compose(&so3_exp(&w)), t)),
        ins in prop::collection::vec(pose(), 3..12),
        dw in rotvec(0.05),
        dt in vec3(0.1),
    ) {
        let cams: Vec<Pose> = ins.iter().map(|p| p.compose(&t_true)).collect();
        let t0 = t_true.compose(&Pose::new(so3_exp(&dw), dt));
        let est = refine_extrinsics(&cams, &ins, &t0, &ExtrinsicOptions::default()).unwrap();
        prop_assert!(est.t_opt.rotation.angle_to(&t_true.rotation) < 1e-9);
        prop_assert!((est.t_opt.translation - t_true.translation).norm() < 1e-9);
    }

    #[test]
    fn calibration_files_round_trip_exactly(p in pose(), f in 500.0f64..3000.0, c in 100.0f64..900.0) {
        let dir = tempfile::tempdir().unwrap();
        let mut k = camera();
        k.fx = f;
        k.cy = c;
        write_intrinsics(&dir.path().join("k.json"), &k).unwrap();
        write_pose(&dir.path().join("t.json"), &p).unwrap();
        prop_assert_eq!(read_intrinsics(&dir.path().join("k.json")).unwrap(), k);
        let back = read_pose(&dir.path().join("t.json")).unwrap();
        prop_assert!(back.rotation.angle_to(&p.rotation) < 1e-12);
        prop_assert_eq!(back.translation, p.translation);
    }
}
