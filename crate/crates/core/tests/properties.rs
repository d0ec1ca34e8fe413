use cornerpose::corner::*;
use cornerpose::geometry::*;
use cornerpose::mesh::CornerFrame;
use cornerpose::metrics::{add_metric, adi_metric, EvaluationRecord};
use cornerpose::render::{line_pixels, normalized_cross_correlation, Raster};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(3.0), vec3(1.0)).prop_map(|(w, t)| Pose::from_rotvec(&w, t + Vec3::new(0.0, 0.0, 4.0)))
}

fn permutation() -> impl Strategy<Value = AmbiguityPermutation> {
    (0usize..3).prop_map(AmbiguityPermutation::from_power)
}

fn detection() -> impl Strategy<Value = CornerDetection> {
    (
        prop::array::uniform7((0.0..640.0f64, 0.0..480.0f64)),
        0.0..=1.0f64,
    )
        .prop_map(|(pts, c)| CornerDetection::new(pts.map(|(x, y)| Vec2::new(x, y)), c).unwrap())
}

proptest! {
    #[test]
    fn pose_stays_rigid(a in pose(), b in pose(), c in pose(), p in vec3(2.0)) {
        let ab_c = a.compose(&b).compose(&c);
        let a_bc = a.compose(&b.compose(&c));
        prop_assert!((ab_c.transform_point(&p) - a_bc.transform_point(&p)).norm() < 1e-9);
        prop_assert!(orthonormality_error(ab_c.rotation()) < 1e-9);
        let back = a.inverse().transform_point(&a.transform_point(&p));
        prop_assert!((back - p).norm() < 1e-9);
        // distances are preserved
        let q = Vec3::new(0.3, -0.1, 0.2);
        prop_assert!(((a.transform_point(&p) - a.transform_point(&q)).norm() - (p - q).norm()).abs() < 1e-9);
    }

    #[test]
    fn pose_json_round_trips(p in pose()) {
        let back: Pose = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn control_points_invariants(p in pose(), s in 0.01..5.0f64) {
        let r = p.rotation();
        let frame = CornerFrame {
            apex: *p.translation(),
            axes: [r.column(0).into(), r.column(1).into(), r.column(2).into()],
        };
        let m = control_points(&frame, s).unwrap();
        prop_assert!((m.points[0] - frame.apex).norm() < 1e-12);
        for i in [1, 3, 5] {
            prop_assert!(((m.points[i] - m.points[0]).norm() - s).abs() < 1e-6 * s.max(1.0));
            prop_assert!((m.points[i + 1] - (2.0 * m.points[0] - m.points[i])).norm() < 1e-9);
        }
        for (i, j) in [(1, 3), (1, 5), (3, 5)] {
            prop_assert!((m.points[i] - m.points[0]).dot(&(m.points[j] - m.points[0])).abs() < 1e-6);
        }
    }

    #[test]
    fn permutations_act_as_a_cyclic_group(d in detection(), a in permutation(), b in permutation()) {
        let lhs = apply_permutation(a, &apply_permutation(b, &d));
        let rhs = apply_permutation(compose_permutations(a, b), &d);
        prop_assert_eq!(lhs, rhs);
        prop_assert_eq!(apply_permutation(a.inverse(), &apply_permutation(a, &d)), d);
        prop_assert_eq!(lhs.points[0], d.points[0]);
    }

    #[test]
    fn symmetry_matches_relabelling(p in pose(), sigma in permutation(), s in 0.05..0.5f64) {
        let k = CameraIntrinsics::vga();
        let frame = CornerFrame { apex: Vec3::zeros(), axes: [Vec3::x(), Vec3::y(), Vec3::z()] };
        let m = control_points(&frame, s).unwrap();
        let plain: [Vec2; 7] = std::array::from_fn(|i| project(&k, &p, &m.points[i]).unwrap());
        let rotated = p.compose(&Pose::new(symmetry_rotation(sigma), Vec3::zeros()).unwrap());
        let permuted = apply_permutation(sigma, &CornerDetection::new(plain, 1.0).unwrap());
        for i in 0..7 {
            let q = project(&k, &rotated, &m.points[i]).unwrap();
            prop_assert!((q - permuted.points[i]).norm() < 1e-6);
        }
    }

    #[test]
    fn adi_never_exceeds_add(a in pose(), b in pose(), pts in prop::collection::vec(vec3(1.0), 1..40)) {
        let add = add_metric(&a, &b, &pts).unwrap();
        let adi = adi_metric(&a, &b, &pts).unwrap();
        prop_assert!(adi <= add + 1e-12);
        prop_assert!(adi >= 0.0);
    }

    #[test]
    fn record_flags(add in 0.0..1.0f64, d in 0.1..3.0f64, iou in 0.0..=1.0f64) {
        let r = EvaluationRecord::from_values(add, d, iou);
        prop_assert_eq!(r.correct_10, add / d < 0.1);
        prop_assert!(!r.correct_10 || r.correct_20);
        prop_assert!(!r.correct_20 || r.correct_30);
        prop_assert_eq!(r.detected, iou > 0.4);
    }

    #[test]
    fn line_pixels_properties(a in (-50i64..50, -50i64..50), b in (-50i64..50, -50i64..50)) {
        let mut f = line_pixels(a, b);
        let mut r = line_pixels(b, a);
        let n = (b.0 - a.0).abs().max((b.1 - a.1).abs()) as usize + 1;
        prop_assert_eq!(f.len(), n);
        prop_assert!(f.contains(&a) && f.contains(&b));
        for w in f.windows(2) {
            prop_assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
        }
        f.sort();
        r.sort();
        prop_assert_eq!(f, r);
    }

    #[test]
    fn ncc_is_bounded_and_symmetric(
        a in prop::collection::vec(0.0..=1.0f64, 24),
        b in prop::collection::vec(0.0..=1.0f64, 24),
    ) {
        let ra = Raster::from_values(6, 4, a).unwrap();
        let rb = Raster::from_values(6, 4, b).unwrap();
        let x = normalized_cross_correlation(&ra, &rb).unwrap();
        let y = normalized_cross_correlation(&rb, &ra).unwrap();
        prop_assert!((-1.0..=1.0).contains(&x));
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!(ra.blurred().values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
