#![allow(dead_code)]

use cornerpose::geometry::{Pose, Vec3};
use cornerpose::sim::SceneRng;

pub const CUBE_OBJ: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

/// Uniform rotation and a translation in front of the camera.
pub fn random_pose(rng: &mut SceneRng, depth: (f64, f64)) -> Pose {
    let r = rng.rotation();
    let t = Vec3::new(
        rng.uniform_range(-0.3, 0.3),
        rng.uniform_range(-0.3, 0.3),
        rng.uniform_range(depth.0, depth.1),
    );
    Pose::from_approx(&r, t)
}

pub fn random_vec(rng: &mut SceneRng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.uniform_range(-scale, scale),
        rng.uniform_range(-scale, scale),
        rng.uniform_range(-scale, scale),
    )
}

pub fn translation_error(a: &Pose, b: &Pose) -> f64 {
    (a.translation() - b.translation()).norm()
}
