//! Rigid poses and pinhole projection.
//!
//! A [`Pose`] maps object coordinates into the camera frame:
//! `X_cam = R * X_obj + t`. The camera looks down `+z`; image `u` grows to the
//! right and `v` grows downward.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Depth at or below which a point is considered to be behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

/// Tolerance on `RᵀR = I` and `det R = 1`.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point has non-positive depth {0} in the camera frame")]
    NonPositiveDepth(f64),
    #[error("matrix is not a proper rotation (orthonormality error {ortho}, det {det})")]
    NotARotation { ortho: f64, det: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Rigid transform from object to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that drift from SO(3) by more than
    /// [`ROTATION_TOL`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("translation"));
        }
        let ortho = orthonormality_error(&rotation);
        let det = rotation.determinant();
        if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotARotation { ortho, det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a pose from an approximately orthonormal matrix, projecting it
    /// onto SO(3) first.
    pub fn from_approx(rotation: &Mat3, translation: Vec3) -> Self {
        Self {
            rotation: nearest_rotation(rotation),
            translation,
        }
    }

    /// Axis-angle rotation (`rotvec` = axis * angle) plus translation.
    pub fn from_rotvec(rotvec: &Vec3, translation: Vec3) -> Self {
        Self {
            rotation: exp_so3(rotvec),
            translation,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = self.rotation * other.rotation;
        let rotation = if orthonormality_error(&rotation) > ROTATION_TOL
            || (rotation.determinant() - 1.0).abs() > ROTATION_TOL
        {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Left-multiplicative increment: `R ← exp(ω)·R`, `t ← t + δt`.
    pub fn perturbed(&self, omega: &Vec3, delta_t: &Vec3) -> Pose {
        Pose::from_approx(
            &(exp_so3(omega) * self.rotation),
            self.translation + delta_t,
        )
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let m = &self.rotation;
        let json = PoseJson {
            r: [
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ],
            t: [self.translation.x, self.translation.y, self.translation.z],
        };
        json.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = PoseJson::deserialize(deserializer)?;
        let rotation = Mat3::from_row_slice(&json.r);
        // Text round trips lose the last ulp or so; re-project before validating.
        let err = orthonormality_error(&rotation);
        if err > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(serde::de::Error::custom(GeometryError::NotARotation {
                ortho: err,
                det: rotation.determinant(),
            }));
        }
        let rotation = if err > ROTATION_TOL {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        Pose::new(rotation, Vec3::from(json.t)).map_err(serde::de::Error::custom)
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_x: f64,
    pub focal_y: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        focal_x: f64,
        focal_y: f64,
        principal_x: f64,
        principal_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            focal_x,
            focal_y,
            principal_x,
            principal_y,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.focal_x > 0.0 && self.focal_y > 0.0)
            || !self.focal_x.is_finite()
            || !self.focal_y.is_finite()
        {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got ({}, {})",
                self.focal_x, self.focal_y
            )));
        }
        if !self.principal_x.is_finite() || !self.principal_y.is_finite() {
            return Err(GeometryError::NonFinite("principal point"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// 640×480 camera with a 600 px focal length centred on the image.
    pub fn vga() -> Self {
        Self {
            focal_x: 600.0,
            focal_y: 600.0,
            principal_x: 320.0,
            principal_y: 240.0,
            width: 640,
            height: 480,
        }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(
            self.focal_x,
            0.0,
            self.principal_x,
            0.0,
            self.focal_y,
            self.principal_y,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project_camera_point(&self, x: &Vec3) -> Result<Vec2, GeometryError> {
        if x.z <= MIN_DEPTH {
            return Err(GeometryError::NonPositiveDepth(x.z));
        }
        Ok(Vec2::new(
            self.focal_x * x.x / x.z + self.principal_x,
            self.focal_y * x.y / x.z + self.principal_y,
        ))
    }

    /// Pixel to normalized image-plane coordinates (`z = 1`).
    pub fn normalize(&self, uv: &Vec2) -> Vec2 {
        Vec2::new(
            (uv.x - self.principal_x) / self.focal_x,
            (uv.y - self.principal_y) / self.focal_y,
        )
    }

    pub fn contains(&self, uv: &Vec2) -> bool {
        uv.x >= 0.0 && uv.y >= 0.0 && uv.x < self.width as f64 && uv.y < self.height as f64
    }
}

/// Projects an object-frame point through `pose` and `k`.
pub fn project(k: &CameraIntrinsics, pose: &Pose, m: &Vec3) -> Result<Vec2, GeometryError> {
    k.project_camera_point(&pose.transform_point(m))
}

/// Geodesic angle between the rotations of two poses, in `[0, π]`.
pub fn rotation_geodesic_distance(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation.transpose() * b.rotation;
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos()
}

/// Rodrigues' formula.
pub fn exp_so3(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let k = skew(omega);
    if theta < 1e-8 {
        // Second-order Taylor expansion.
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + a * k + b * k * k
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Closest rotation in the Frobenius sense (polar decomposition via SVD).
/// A reflection is flipped on the weakest singular direction.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let (imin, _) =
            svd.singular_values
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
                );
        let mut d = Mat3::identity();
        d[(imin, imin)] = -1.0;
        r = u * d * v_t;
    }
    r
}

/// `max |RᵀR − I|` entrywise.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).amax()
}
