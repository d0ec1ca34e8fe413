mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use common::{random_pose, random_vec};
use cornerpose::geometry::*;
use cornerpose::sim::SceneRng;
use nalgebra::Matrix4;

/// Scalar pinhole projection written out without matrix types.
fn project_oracle(k: &CameraIntrinsics, r: &[[f64; 3]; 3], t: [f64; 3], m: [f64; 3]) -> (f64, f64) {
    let mut xc = [0.0; 3];
    for i in 0..3 {
        xc[i] = r[i][0] * m[0] + r[i][1] * m[1] + r[i][2] * m[2] + t[i];
    }
    (
        k.focal_x * xc[0] / xc[2] + k.principal_x,
        k.focal_y * xc[1] / xc[2] + k.principal_y,
    )
}

#[test]
fn projection_examples() {
    let unit = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 1, 1).unwrap();
    let uv = project(&unit, &Pose::identity(), &Vec3::new(0.0, 0.0, 1.0)).unwrap();
    assert_eq!(uv, Vec2::zeros());

    let k = CameraIntrinsics::new(100.0, 100.0, 320.0, 240.0, 640, 480).unwrap();
    let uv = project(&k, &Pose::identity(), &Vec3::new(0.1, 0.0, 1.0)).unwrap();
    assert!((uv - Vec2::new(330.0, 240.0)).norm() < 1e-12);
}

#[test]
fn projection_matches_scalar_oracle() {
    let k = CameraIntrinsics::new(572.4, 573.6, 325.3, 242.0, 640, 480).unwrap();
    let (s, c) = FRAC_PI_6.sin_cos();
    let r = [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]];
    let t = [0.0, 0.0, 0.5];
    let m = [0.05, 0.02, 0.5 - 0.3];
    let pose = Pose::from_rotvec(&(Vec3::y() * FRAC_PI_6), Vec3::from(t));
    let uv = project(&k, &pose, &Vec3::from(m)).unwrap();
    let (u, v) = project_oracle(&k, &r, t, m);
    assert!(
        (uv.x - u).abs() < 1e-9 && (uv.y - v).abs() < 1e-9,
        "{uv} vs ({u}, {v})"
    );

    let mut rng = SceneRng::new(3);
    for _ in 0..50 {
        let pose = random_pose(&mut rng, (2.0, 4.0));
        let m = random_vec(&mut rng, 0.5);
        let rm = pose.rotation();
        let rows = [0, 1, 2].map(|i| [rm[(i, 0)], rm[(i, 1)], rm[(i, 2)]]);
        let tv = pose.translation();
        let (u, v) = project_oracle(&k, &rows, [tv.x, tv.y, tv.z], [m.x, m.y, m.z]);
        let uv = project(&k, &pose, &m).unwrap();
        assert!((uv.x - u).abs() < 1e-9 && (uv.y - v).abs() < 1e-9);
    }
}

#[test]
fn projection_rejects_points_behind() {
    let k = CameraIntrinsics::vga();
    for z in [0.0, 1e-9, -1.0] {
        assert!(matches!(
            project(&k, &Pose::identity(), &Vec3::new(0.0, 0.0, z)),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }
    assert!(project(&k, &Pose::identity(), &Vec3::new(0.0, 0.0, 2e-9)).is_ok());
}

#[test]
fn compose_examples() {
    let mut rng = SceneRng::new(11);
    let p = random_pose(&mut rng, (1.0, 3.0));
    assert_eq!(Pose::identity().compose(&p), p);
    let id = p.compose(&p.inverse());
    assert!((id.rotation() - Mat3::identity()).norm() < 1e-9);
    assert!(id.translation().norm() < 1e-9);
}

#[test]
fn compose_matches_homogeneous_product() {
    let mut rng = SceneRng::new(12);
    for _ in 0..20 {
        let a = random_pose(&mut rng, (1.0, 3.0));
        let b = random_pose(&mut rng, (1.0, 3.0));
        let oracle: Matrix4<f64> = a.to_homogeneous() * b.to_homogeneous();
        assert!((a.compose(&b).to_homogeneous() - oracle).abs().max() < 1e-12);
    }
}

/// Angle from the axis-angle form of the relative rotation, via the
/// quaternion of the relative rotation.
fn geodesic_oracle(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation().transpose() * b.rotation();
    let q = nalgebra::UnitQuaternion::from_matrix(&rel);
    q.angle()
}

#[test]
fn geodesic_distance() {
    let a = Pose::identity();
    assert_eq!(rotation_geodesic_distance(&a, &a), 0.0);
    let b = Pose::from_rotvec(&(Vec3::z() * FRAC_PI_2), Vec3::zeros());
    assert!((rotation_geodesic_distance(&a, &b) - FRAC_PI_2).abs() < 1e-12);

    let mut rng = SceneRng::new(13);
    for _ in 0..50 {
        let p = random_pose(&mut rng, (1.0, 2.0));
        let q = random_pose(&mut rng, (1.0, 2.0));
        let d = rotation_geodesic_distance(&p, &q);
        assert!((d - geodesic_oracle(&p, &q)).abs() < 1e-9);
        assert!((d - rotation_geodesic_distance(&q, &p)).abs() < 1e-12);
    }
}

#[test]
fn exp_so3_properties() {
    let mut rng = SceneRng::new(14);
    for _ in 0..50 {
        let w = random_vec(&mut rng, 1.5);
        let r = exp_so3(&w);
        assert!(orthonormality_error(&r) < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        // the axis is fixed
        assert!((r * w - w).norm() < 1e-12);
        let angle =
            rotation_geodesic_distance(&Pose::identity(), &Pose::from_approx(&r, Vec3::zeros()));
        assert!((angle - w.norm()).abs() < 1e-9);
    }
    assert_eq!(exp_so3(&Vec3::zeros()), Mat3::identity());
}

#[test]
fn pose_validation() {
    assert!(matches!(
        Pose::new(Mat3::identity() * 1.01, Vec3::zeros()),
        Err(GeometryError::NotARotation { .. })
    ));
    let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
    assert!(Pose::new(reflection, Vec3::zeros()).is_err());
    assert!(Pose::new(Mat3::identity(), Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
    assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
    assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
}

#[test]
fn pose_json_round_trip() {
    let mut rng = SceneRng::new(15);
    let p = random_pose(&mut rng, (1.0, 2.0));
    let json = serde_json::to_string(&p).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["R"].as_array().unwrap().len(), 9);
    assert_eq!(v["t"].as_array().unwrap().len(), 3);
    assert_eq!(v["R"][1].as_f64().unwrap(), p.rotation()[(0, 1)]);
    let back: Pose = serde_json::from_str(&json).unwrap();
    assert_eq!(back, p);
    assert!(serde_json::from_str::<Pose>(r#"{"R":[2,0,0,0,1,0,0,0,1],"t":[0,0,0]}"#).is_err());
}
