mod common;

use common::{random_pose, translation_error};
use cornerpose::corner::control_points;
use cornerpose::geometry::*;
use cornerpose::mesh::CornerFrame;
use cornerpose::pnp::*;
use cornerpose::sim::SceneRng;

/// A randomly placed corner's 7 control points.
fn random_corner(rng: &mut SceneRng, scale: f64) -> Vec<Vec3> {
    let frame_pose = random_pose(rng, (-0.3, 0.3));
    let r = frame_pose.rotation();
    let frame = CornerFrame {
        apex: *frame_pose.translation(),
        axes: [r.column(0).into(), r.column(1).into(), r.column(2).into()],
    };
    control_points(&frame, scale).unwrap().points.to_vec()
}

fn correspondences(pose: &Pose, k: &CameraIntrinsics, pts: &[Vec3]) -> Vec<Correspondence> {
    pts.iter()
        .map(|p| Correspondence::new(*p, project(k, pose, p).unwrap()))
        .collect()
}

#[test]
fn exact_corner_recovery() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(41);
    let pts = random_corner(&mut rng, 0.2);
    let gt = random_pose(&mut rng, (2.0, 4.0));
    let pose = pnp_dlt(&correspondences(&gt, &k, &pts), &k).unwrap();
    assert!(rotation_geodesic_distance(&pose, &gt) < 1e-6);
    assert!(translation_error(&pose, &gt) < 1e-6);
}

#[test]
fn coplanar_points_are_degenerate() {
    let k = CameraIntrinsics::vga();
    let pts: Vec<Vec3> = (0..7)
        .map(|i| {
            let a = i as f64;
            Vec3::new(a.cos() * 0.3, (1.7 * a).sin() * 0.2, 0.0)
        })
        .collect();
    let gt = Pose::from_rotvec(&Vec3::new(0.3, -0.2, 0.1), Vec3::new(0.0, 0.0, 3.0));
    assert!(matches!(
        pnp_dlt(&correspondences(&gt, &k, &pts), &k),
        Err(PnpError::DegenerateConfiguration(_))
    ));
}

#[test]
fn too_few_points() {
    let k = CameraIntrinsics::vga();
    let pts = vec![Vec3::zeros(); 5];
    let corrs = correspondences(
        &Pose::from_rotvec(&Vec3::zeros(), Vec3::z() * 2.0),
        &k,
        &pts,
    );
    assert!(matches!(
        pnp_dlt(&corrs, &k),
        Err(PnpError::TooFewPoints { .. })
    ));
    assert!(matches!(
        refine_pose(&Pose::identity(), &corrs[..3], &k, RefineOptions::default()),
        Err(PnpError::TooFewPoints { .. })
    ));
}

#[test]
fn dlt_seeded_self_consistency() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(42);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pts = random_corner(&mut rng, 0.2);
        let gt = random_pose(&mut rng, (2.0, 4.0));
        let pose = pnp_dlt(&correspondences(&gt, &k, &pts), &k).unwrap();
        worst = worst.max(rotation_geodesic_distance(&pose, &gt));
    }
    assert!(worst < 1e-5, "worst rotation error {worst}");
}

#[test]
fn refine_at_optimum_takes_no_step() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(43);
    let pts = random_corner(&mut rng, 0.2);
    let gt = random_pose(&mut rng, (2.0, 4.0));
    let corrs = correspondences(&gt, &k, &pts);
    let r = refine_pose(&gt, &corrs, &k, RefineOptions::default()).unwrap();
    assert_eq!(r.iterations, 0);
    assert!(rotation_geodesic_distance(&r.pose, &gt) < 1e-12);
    assert!(translation_error(&r.pose, &gt) < 1e-12);
}

#[test]
fn refine_recovers_from_perturbation() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(44);
    for _ in 0..20 {
        let pts = random_corner(&mut rng, 0.2);
        let gt = random_pose(&mut rng, (2.0, 4.0));
        let corrs = correspondences(&gt, &k, &pts);
        let axis = common::random_vec(&mut rng, 1.0).normalize();
        let dir = common::random_vec(&mut rng, 1.0).normalize();
        let start = gt.perturbed(
            &(axis * 5f64.to_radians()),
            &(dir * 0.05 * gt.translation().norm()),
        );
        let r = refine_pose(&start, &corrs, &k, RefineOptions::default()).unwrap();
        assert!(rotation_geodesic_distance(&r.pose, &gt) < 1e-5);
        assert!(translation_error(&r.pose, &gt) < 1e-5);
        assert!(r.final_rmse <= r.initial_rmse);
    }
}

#[test]
fn noisy_refinement_never_increases_error() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(45);
    for _ in 0..20 {
        let mut pts = random_corner(&mut rng, 0.2);
        pts.extend(random_corner(&mut rng, 0.2));
        let gt = random_pose(&mut rng, (2.0, 4.0));
        let mut corrs = correspondences(&gt, &k, &pts);
        for c in &mut corrs {
            c.image_point += Vec2::new(rng.normal(), rng.normal());
        }
        let init = pnp_dlt(&corrs, &k).unwrap();
        let dlt_rmse = reprojection_rmse(&init, &corrs, &k).unwrap();
        let r = refine_pose(&init, &corrs, &k, RefineOptions::default()).unwrap();
        assert!(r.final_rmse <= dlt_rmse);
        assert!((r.initial_rmse - dlt_rmse).abs() < 1e-12);
    }
}

#[test]
fn rmse_examples() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(46);
    let pts = random_corner(&mut rng, 0.2);
    let gt = random_pose(&mut rng, (2.0, 4.0));
    let corrs = correspondences(&gt, &k, &pts);
    assert!(reprojection_rmse(&gt, &corrs, &k).unwrap() < 1e-9);

    // points on the plane z = 3 in front of the camera, shifted sideways
    let z = 3.0;
    let plane: Vec<Vec3> = (0..5)
        .map(|i| Vec3::new(0.1 * i as f64, -0.05 * i as f64, z))
        .collect();
    let corrs = correspondences(&Pose::identity(), &k, &plane);
    let delta = 0.01;
    let shifted = Pose::new(Mat3::identity(), Vec3::new(delta, 0.0, 0.0)).unwrap();
    let rmse = reprojection_rmse(&shifted, &corrs, &k).unwrap();
    assert!((rmse - k.focal_x * delta / z).abs() < 1e-9);
}

#[test]
fn rmse_matches_per_point_recomputation() {
    let k = CameraIntrinsics::new(500.0, 520.0, 300.0, 250.0, 640, 480).unwrap();
    let mut rng = SceneRng::new(47);
    let pts = random_corner(&mut rng, 0.3);
    let pose = random_pose(&mut rng, (2.0, 4.0));
    let corrs: Vec<Correspondence> = pts
        .iter()
        .map(|p| {
            Correspondence::new(
                *p,
                Vec2::new(rng.uniform_range(0.0, 640.0), rng.uniform_range(0.0, 480.0)),
            )
        })
        .collect();
    let mut sum = 0.0;
    for c in &corrs {
        let r = pose.rotation();
        let t = pose.translation();
        let m = c.model_point;
        let x = r[(0, 0)] * m.x + r[(0, 1)] * m.y + r[(0, 2)] * m.z + t.x;
        let y = r[(1, 0)] * m.x + r[(1, 1)] * m.y + r[(1, 2)] * m.z + t.y;
        let z = r[(2, 0)] * m.x + r[(2, 1)] * m.y + r[(2, 2)] * m.z + t.z;
        let du = k.focal_x * x / z + k.principal_x - c.image_point.x;
        let dv = k.focal_y * y / z + k.principal_y - c.image_point.y;
        sum += du * du + dv * dv;
    }
    let oracle = (sum / corrs.len() as f64).sqrt();
    assert!((reprojection_rmse(&pose, &corrs, &k).unwrap() - oracle).abs() < 1e-9);
}

#[test]
fn rmse_propagates_depth_error() {
    let k = CameraIntrinsics::vga();
    let corrs = vec![Correspondence::new(
        Vec3::new(0.0, 0.0, -1.0),
        Vec2::zeros(),
    )];
    assert!(matches!(
        reprojection_rmse(&Pose::identity(), &corrs, &k),
        Err(GeometryError::NonPositiveDepth(_))
    ));
}

/// Largest relative Frobenius error between the analytic Jacobian and central
/// differences of the residual along the same increment.
fn jacobian_relative_error(pose: &Pose, c: &Correspondence, k: &CameraIntrinsics) -> f64 {
    let (_, j) = residual_jacobian(pose, c, k).unwrap();
    let h = 1e-6;
    let residual = |p: &Pose| project(k, p, &c.model_point).unwrap() - c.image_point;
    let mut fd = nalgebra::Matrix2x6::<f64>::zeros();
    for i in 0..6 {
        let mut e = [0.0; 6];
        e[i] = h;
        let plus = pose.perturbed(&Vec3::new(e[0], e[1], e[2]), &Vec3::new(e[3], e[4], e[5]));
        let minus = pose.perturbed(&-Vec3::new(e[0], e[1], e[2]), &-Vec3::new(e[3], e[4], e[5]));
        fd.set_column(i, &((residual(&plus) - residual(&minus)) / (2.0 * h)));
    }
    (j - fd).norm() / j.norm()
}

#[test]
fn jacobian_matches_finite_differences() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(48);
    for _ in 0..20 {
        let pts = random_corner(&mut rng, 0.2);
        let pose = random_pose(&mut rng, (2.0, 4.0));
        let c = Correspondence::new(pts[rng.index(7)], Vec2::new(300.0, 200.0));
        let err = jacobian_relative_error(&pose, &c, &k);
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn solve_pnp_multiple_corners() {
    let k = CameraIntrinsics::vga();
    let mut rng = SceneRng::new(49);
    for _ in 0..20 {
        let mut pts = random_corner(&mut rng, 0.2);
        pts.extend(random_corner(&mut rng, 0.2));
        let gt = random_pose(&mut rng, (2.0, 4.0));
        let pose = solve_pnp(
            &correspondences(&gt, &k, &pts),
            &k,
            RefineOptions::default(),
        )
        .unwrap();
        assert!(rotation_geodesic_distance(&pose, &gt) < 1e-8);
        assert!(translation_error(&pose, &gt) < 1e-8);
    }
}
