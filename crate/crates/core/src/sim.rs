//! Synthetic corner detections standing in for a learned detector.
//!
//! All randomness comes from [`SceneRng`], a ChaCha8 stream keyed by the
//! scenario seed, with the distribution transforms spelled out below so the
//! same scenarios can be regenerated in another language.

use nalgebra::{Quaternion, UnitQuaternion};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corner::{apply_permutation, AmbiguityPermutation, CornerDetection, NUM_CONTROL_POINTS};
use crate::estimator::ObjectModel;
use crate::geometry::{project, CameraIntrinsics, Pose, Vec2, Vec3};

/// Deterministic random source.
///
/// * generator: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), 32-byte key =
///   `seed` as little-endian `u64` followed by 24 zero bytes, stream 0;
/// * `uniform()`: `(next_u64 >> 11) · 2⁻⁵³` in `[0, 1)`;
/// * `normal()`: Box–Muller cosine branch, `√(−2 ln(1 − u₁)) · cos(2π u₂)`,
///   consuming two uniforms per sample;
/// * `index(n)`: `min(⌊uniform() · n⌋, n − 1)`.
#[derive(Debug, Clone)]
pub struct SceneRng {
    inner: ChaCha8Rng,
}

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// Uniformly distributed rotation (Shoemake's method).
    pub fn rotation(&mut self) -> crate::geometry::Mat3 {
        let (u1, u2, u3) = (self.uniform(), self.uniform(), self.uniform());
        let tau = 2.0 * std::f64::consts::PI;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = Quaternion::new(
            b * (tau * u3).cos(),
            a * (tau * u2).sin(),
            a * (tau * u2).cos(),
            b * (tau * u3).sin(),
        );
        UnitQuaternion::from_quaternion(q)
            .to_rotation_matrix()
            .into_inner()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PermutationFlip {
    #[default]
    UniformRandom,
    IdentityOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of isotropic Gaussian noise on each control point (px).
    pub pixel_sigma: f64,
    /// Fraction of the final detection list (excluding clutter) made of
    /// corner-shaped outliers.
    pub outlier_rate: f64,
    /// Probability that a visible corner is not detected.
    pub miss_rate: f64,
    pub permutation_flip: PermutationFlip,
    /// Detections with 7 uniformly random in-frame points.
    pub clutter_corner_count: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 1.0,
            outlier_rate: 0.3,
            miss_rate: 0.0,
            permutation_flip: PermutationFlip::UniformRandom,
            clutter_corner_count: 0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            pixel_sigma: 0.0,
            outlier_rate: 0.0,
            miss_rate: 0.0,
            permutation_flip: PermutationFlip::IdentityOnly,
            clutter_corner_count: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("outlier_rate", self.outlier_rate),
            ("miss_rate", self.miss_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if !(self.pixel_sigma.is_finite() && self.pixel_sigma >= 0.0) {
            return Err(format!(
                "pixel_sigma must be >= 0, got {}",
                self.pixel_sigma
            ));
        }
        Ok(())
    }

    /// Number of outliers to add to `true_count` genuine detections.
    pub fn outlier_count(&self, true_count: usize) -> usize {
        if self.outlier_rate <= 0.0 {
            0
        } else if self.outlier_rate >= 1.0 {
            true_count
        } else {
            (true_count as f64 * self.outlier_rate / (1.0 - self.outlier_rate)).round() as usize
        }
    }
}

/// One synthetic image: ground truth plus the detections a detector would
/// have produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub gt_pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub detections: Vec<CornerDetection>,
    pub seed: u64,
}

impl Scenario {
    pub fn group_key(&self) -> &str {
        self.group.as_deref().unwrap_or(&self.model_id)
    }
}

/// Corners whose 7 control points all project inside the frame and whose
/// diagonal faces the camera.
pub fn visible_corners(
    model: &ObjectModel,
    gt: &Pose,
    k: &CameraIntrinsics,
) -> Vec<(usize, [Vec2; NUM_CONTROL_POINTS])> {
    let mut out = Vec::new();
    for (i, c) in model.corners.iter().enumerate() {
        let apex_cam = gt.transform_point(&c.apex());
        let diag_cam = gt.rotation() * c.diagonal();
        // The diagonal points into the solid, so a visible corner has it
        // pointing away from the camera.
        if diag_cam.dot(&apex_cam) <= 0.0 {
            continue;
        }
        let mut pts = [Vec2::zeros(); NUM_CONTROL_POINTS];
        let mut ok = true;
        for (o, p) in pts.iter_mut().zip(&c.points) {
            match project(k, gt, p) {
                Ok(uv) if k.contains(&uv) => *o = uv,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            out.push((i, pts));
        }
    }
    out
}

fn random_in_frame(rng: &mut SceneRng, k: &CameraIntrinsics) -> Vec2 {
    Vec2::new(
        rng.uniform() * k.width as f64,
        rng.uniform() * k.height as f64,
    )
}

/// A corner-shaped false detection: a canonical corner with the model's
/// control-point scale, random orientation, apex at a random pixel and at a
/// depth near the true object.
fn outlier_detection(
    rng: &mut SceneRng,
    model: &ObjectModel,
    gt: &Pose,
    k: &CameraIntrinsics,
) -> CornerDetection {
    let scale = model
        .corners
        .first()
        .map(|c| c.scale)
        .unwrap_or(0.1 * model.diameter);
    let depth = gt.translation().z.max(scale * 4.0);
    for _ in 0..32 {
        let r = rng.rotation();
        let uv = random_in_frame(rng, k);
        let z = depth * rng.uniform_range(0.7, 1.3);
        let apex = Vec3::new(
            (uv.x - k.principal_x) / k.focal_x * z,
            (uv.y - k.principal_y) / k.focal_y * z,
            z,
        );
        let pose = Pose::from_approx(&r, apex);
        let mut pts = [Vec2::zeros(); NUM_CONTROL_POINTS];
        let mut ok = true;
        let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        for (idx, o) in pts.iter_mut().enumerate() {
            let m = match idx {
                0 => Vec3::zeros(),
                i => {
                    let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                    axes[(i - 1) / 2] * (sign * scale)
                }
            };
            match project(k, &pose, &m) {
                Ok(p) => *o = p,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return CornerDetection {
                points: pts,
                confidence: rng.uniform_range(0.5, 1.0),
            };
        }
    }
    clutter_detection(rng, k)
}

fn clutter_detection(rng: &mut SceneRng, k: &CameraIntrinsics) -> CornerDetection {
    CornerDetection {
        points: std::array::from_fn(|_| random_in_frame(rng, k)),
        confidence: rng.uniform_range(0.0, 0.5),
    }
}

/// Simulated detector output for `model` seen at `gt`.
///
/// Each visible corner (see [`visible_corners`]) is dropped with probability
/// `miss_rate`; survivors get Gaussian pixel noise and, in
/// `UniformRandom` mode, a uniformly drawn ambiguity permutation. Outliers
/// and clutter are appended and the list is shuffled.
pub fn simulate_detections(
    model: &ObjectModel,
    gt: &Pose,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    seed: u64,
) -> Vec<CornerDetection> {
    let mut rng = SceneRng::new(seed);
    let mut out = Vec::new();
    for (_, exact) in visible_corners(model, gt, k) {
        let missed = rng.uniform() < noise.miss_rate;
        let mut pts = exact;
        for p in pts.iter_mut() {
            let (nx, ny) = (rng.normal(), rng.normal());
            *p += Vec2::new(nx, ny) * noise.pixel_sigma;
        }
        let sigma = match noise.permutation_flip {
            PermutationFlip::UniformRandom => AmbiguityPermutation::ALL[rng.index(3)],
            PermutationFlip::IdentityOnly => AmbiguityPermutation::Identity,
        };
        if !missed {
            out.push(apply_permutation(
                sigma,
                &CornerDetection {
                    points: pts,
                    confidence: 1.0,
                },
            ));
        }
    }
    let n_out = noise.outlier_count(out.len());
    if noise.outlier_rate >= 1.0 {
        out.clear();
    }
    for _ in 0..n_out {
        let mut d = outlier_detection(&mut rng, model, gt, k);
        for p in d.points.iter_mut() {
            let (nx, ny) = (rng.normal(), rng.normal());
            *p += Vec2::new(nx, ny) * noise.pixel_sigma;
        }
        out.push(d);
    }
    for _ in 0..noise.clutter_corner_count {
        out.push(clutter_detection(&mut rng, k));
    }
    rng.shuffle(&mut out);
    out
}

/// Range of object depths, as multiples of the object diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSampler {
    pub depth_min: f64,
    pub depth_max: f64,
    /// Fraction of the frame (centered) in which the object center projects.
    pub center_fraction: f64,
}

impl Default for PoseSampler {
    fn default() -> Self {
        Self {
            depth_min: 2.5,
            depth_max: 5.0,
            center_fraction: 0.5,
        }
    }
}

/// Bounding-box center of the mesh.
pub fn mesh_center(model: &ObjectModel) -> Vec3 {
    let v = &model.mesh.vertices;
    if v.is_empty() {
        return Vec3::zeros();
    }
    let mut lo = v[0];
    let mut hi = v[0];
    for p in v {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo + hi) / 2.0
}

/// Random object pose: uniform rotation, depth in the sampler's range and the
/// object center projected into the central part of the frame.
pub fn random_pose(
    rng: &mut SceneRng,
    model: &ObjectModel,
    k: &CameraIntrinsics,
    sampler: &PoseSampler,
) -> Pose {
    let r = rng.rotation();
    let z = model.diameter * rng.uniform_range(sampler.depth_min, sampler.depth_max);
    let margin = (1.0 - sampler.center_fraction) / 2.0;
    let u = k.width as f64 * rng.uniform_range(margin, 1.0 - margin);
    let v = k.height as f64 * rng.uniform_range(margin, 1.0 - margin);
    let center_cam = Vec3::new(
        (u - k.principal_x) / k.focal_x * z,
        (v - k.principal_y) / k.focal_y * z,
        z,
    );
    Pose::from_approx(&r, center_cam - r * mesh_center(model))
}

/// Builds one scenario. The pose is drawn from a stream keyed by `seed` and
/// the detections from one keyed by `seed ^ DETECTION_STREAM`.
pub fn generate_scenario(
    model: &ObjectModel,
    model_id: &str,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    sampler: &PoseSampler,
    seed: u64,
) -> Scenario {
    let mut rng = SceneRng::new(seed);
    let gt = random_pose(&mut rng, model, k, sampler);
    Scenario {
        model_id: model_id.to_string(),
        group: None,
        gt_pose: gt,
        intrinsics: *k,
        detections: simulate_detections(model, &gt, k, noise, seed ^ DETECTION_STREAM),
        seed,
    }
}

pub const DETECTION_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Synthetic input edge image for a scenario: the model's edges at the
/// ground-truth pose plus `clutter_segments` random line segments.
pub fn synthetic_edge_image(
    model: &ObjectModel,
    scenario: &Scenario,
    clutter_segments: usize,
) -> crate::render::Raster {
    let k = &scenario.intrinsics;
    let mut raster = model.edge_sketch().render(&scenario.gt_pose, k, false);
    let mut rng = SceneRng::new(scenario.seed ^ EDGE_CLUTTER_STREAM);
    for _ in 0..clutter_segments {
        let a = random_in_frame(&mut rng, k);
        let b = random_in_frame(&mut rng, k);
        raster.draw_line(
            (a.x.floor() as i64, a.y.floor() as i64),
            (b.x.floor() as i64, b.y.floor() as i64),
            1.0,
        );
    }
    raster
}

pub const EDGE_CLUTTER_STREAM: u64 = 0xD1B5_4A32_D192_ED03;
