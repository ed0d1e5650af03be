use lanesim_core::augmentation::{Provenance, SampleRecord};
use lanesim_core::geometry::{ground_plane_homography, CameraPose, Pose2};
use lanesim_core::labels::{extract_anchored, ManeuverTag, TrajectoryLabel};
use lanesim_core::metrics::{comfort, mapa_score, precision, MapaInputs};
use lanesim_core::patches::{solve_multires_coeffs, MultiResSpec};
use lanesim_core::path::Polyline;
use lanesim_core::world::{CameraId, CameraRig};
use proptest::prelude::*;

fn curvy_path() -> Polyline {
    let pts = (0..=1600)
        .map(|i| {
            let s = i as f64 * 0.25;
            [s, 6.0 * (s / 70.0).sin()]
        })
        .collect();
    Polyline::new(pts).unwrap()
}

fn inputs() -> impl Strategy<Value = MapaInputs> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.1f64..2.0, -2.0f64..-0.1).prop_map(|(y_l, y_r, y_hl, y_hr)| MapaInputs {
        y_l,
        y_r,
        y_hl,
        y_hr,
    })
}

proptest! {
    #[test]
    fn pose_compose_and_relative_invert(
        x in -100.0f64..100.0, y in -100.0f64..100.0, h in -3.1f64..3.1,
        dx in -10.0f64..10.0, dy in -10.0f64..10.0, dh in -1.0f64..1.0,
    ) {
        let base = Pose2::new(x, y, h);
        let local = Pose2::new(dx, dy, dh);
        let back = base.compose(&local).relative_to(&base);
        prop_assert!((back.x - dx).abs() < 1e-9);
        prop_assert!((back.y - dy).abs() < 1e-9);
        prop_assert!((back.heading - dh).abs() < 1e-9);
    }

    #[test]
    fn corrected_label_is_the_rigid_transform(
        s in 5.0f64..200.0, off in -1.0f64..1.0,
        shift in -1.5f64..1.5, yaw in -0.17f64..0.17,
    ) {
        let path = curvy_path();
        let anchor = path_pose(&path, s, off);
        let delta = Pose2::new(0.0, shift, yaw);
        let frame = anchor.compose(&delta);
        let plain = TrajectoryLabel {
            points: extract_anchored(&path, &anchor, &anchor, 100, 1.0, None).unwrap(),
            maneuver: ManeuverTag::LaneStable,
        };
        let corrected = extract_anchored(&path, &anchor, &frame, 100, 1.0, None).unwrap();
        for (a, b) in plain.in_frame(&delta).points.iter().zip(&corrected) {
            prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn ground_homography_agrees_with_projection(
        gx in 6.0f64..60.0, gy in -8.0f64..8.0,
        dy in -1.5f64..1.5, dyaw in -0.17f64..0.17,
    ) {
        let intr = CameraRig::default_intrinsics();
        let cam = CameraPose::standard();
        let src = cam.mounted_on(&Pose2::new(0.0, 0.0, 0.0));
        let dst = cam.mounted_on(&Pose2::new(0.0, dy, dyaw));
        let p = [gx, gy, 0.0];
        if let (Some(a), Some(b)) = (src.project(&intr, p), dst.project(&intr, p)) {
            let h = ground_plane_homography(&src, &dst, &intr).unwrap();
            let m = h.apply(a[0], a[1]).unwrap();
            prop_assert!((m[0] - b[0]).abs() < 1e-6 && (m[1] - b[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn mapa_ignores_a_common_bias(m in inputs(), c in -3.0f64..3.0) {
        let shifted = MapaInputs { y_l: m.y_l + c, y_r: m.y_r + c, ..m };
        prop_assert!((mapa_score(&m).unwrap() - mapa_score(&shifted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mapa_is_mirror_symmetric(m in inputs()) {
        let mirrored = MapaInputs { y_l: -m.y_r, y_r: -m.y_l, y_hl: -m.y_hr, y_hr: -m.y_hl };
        prop_assert!((mapa_score(&m).unwrap() - mapa_score(&mirrored).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn precision_is_bounded_and_sign_blind(xs in prop::collection::vec(-0.9f64..0.9, 1..200)) {
        let p = precision(&xs).unwrap();
        let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
        prop_assert!(p > 10.0 - 1e-9 && p <= 100.0);
        prop_assert_eq!(p, precision(&neg).unwrap());
    }

    #[test]
    fn comfort_ignores_constant_offsets(xs in prop::collection::vec(-3.0f64..3.0, 2..200), c in -5.0f64..5.0) {
        let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
        let a = comfort(&xs, 0.05, 20.0).unwrap();
        let b = comfort(&shifted, 0.05, 20.0).unwrap();
        prop_assert!((a - b).abs() < 1e-6);
        prop_assert!(a <= 100.0);
    }

    #[test]
    fn multires_constraints_hold(
        w in 4usize..400, h in 2usize..200,
        sw in 1.0f64..8.0, sh in 1.0f64..8.0,
        rw in 1.0f64..6.0, rh in 1.0f64..12.0,
    ) {
        let spec = MultiResSpec { roi_bw: w as f64 * sw, roi_h: h as f64 * sh, patch_w: w, patch_h: h, ratio_w: rw, ratio_h: rh };
        let c = solve_multires_coeffs(&spec).unwrap();
        for r in c.residuals(&spec) {
            prop_assert!(r.abs() < 1e-9);
        }
        for i in 1..h {
            prop_assert!(c.dh(i) >= c.dh(i - 1) && c.dw(i) >= c.dw(i - 1));
        }
    }

    #[test]
    fn sample_records_round_trip(
        patch in prop::collection::vec(any::<f32>(), 1..64),
        label in prop::collection::vec(-50.0f32..50.0, 1..64),
        rec in any::<u32>(), frame in any::<u32>(), cam in 0u8..3,
        shift in -1.0f64..1.0, yaw in -0.1f64..0.1,
    ) {
        let r = SampleRecord {
            patch: patch.clone(),
            label: label.clone(),
            maneuver: ManeuverTag::LaneStable,
            provenance: Provenance { recording: rec, frame, camera: CameraId::from_index(cam).unwrap(), shift_m: shift, yaw_rad: yaw },
        };
        let mut bytes = Vec::new();
        r.encode(&mut bytes);
        let back = SampleRecord::decode(&bytes, patch.len(), label.len()).unwrap();
        let mut again = Vec::new();
        back.encode(&mut again);
        prop_assert_eq!(bytes, again);
    }
}

fn path_pose(path: &Polyline, s: f64, off: f64) -> Pose2 {
    let a = path.point_at(s);
    let b = path.point_at(s + 0.5);
    let h = (b[1] - a[1]).atan2(b[0] - a[0]);
    Pose2::new(a[0] - off * h.sin(), a[1] + off * h.cos(), h)
}
