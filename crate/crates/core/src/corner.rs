//! Seven-point corner representation and its three-fold ambiguity group.
//!
//! A corner is encoded by 7 virtual control points: the apex (index 0) and
//! the endpoints `apex ± s·aₖ` along each of the three edge axes, stored as
//! adjacent pairs `(1,2)`, `(3,4)`, `(5,6)`. A detector sees the corner only
//! up to a 120° rotation about its diagonal, which relabels the pairs
//! cyclically; [`AmbiguityPermutation`] models that relabeling on 2D
//! detections and [`symmetry_rotation`] the matching 3D rotation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{exp_so3, Mat3, Vec2, Vec3};
use crate::mesh::CornerFrame;

pub const NUM_CONTROL_POINTS: usize = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CornerError {
    #[error("control point scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("detection confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("non-finite detection coordinate")]
    NonFinite,
}

/// Object-frame control points of one corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerModel {
    pub points: [Vec3; NUM_CONTROL_POINTS],
    pub scale: f64,
}

impl CornerModel {
    pub fn apex(&self) -> Vec3 {
        self.points[0]
    }

    /// Unit axis `k ∈ {0,1,2}` recovered from the `+s` endpoint.
    pub fn axis(&self, k: usize) -> Vec3 {
        (self.points[1 + 2 * k] - self.points[0]) / self.scale
    }

    /// Unit corner diagonal.
    pub fn diagonal(&self) -> Vec3 {
        (self.axis(0) + self.axis(1) + self.axis(2)).normalize()
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / NUM_CONTROL_POINTS as f64
    }
}

/// Places the 7 control points on `frame` at distance `scale`.
///
/// The frame axes are first projected onto the nearest rotation so the
/// layout is exactly orthogonal even when the mesh edges are only nearly so.
pub fn control_points(frame: &CornerFrame, scale: f64) -> Result<CornerModel, CornerError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(CornerError::NonPositiveScale(scale));
    }
    let r = crate::geometry::nearest_rotation(&frame.axes_matrix());
    let c = frame.apex;
    let mut points = [c; NUM_CONTROL_POINTS];
    for k in 0..3 {
        let a: Vec3 = r.column(k).into();
        points[1 + 2 * k] = c + scale * a;
        points[2 + 2 * k] = c - scale * a;
    }
    Ok(CornerModel { points, scale })
}

/// Predicted image positions of the 7 control points of one detected corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerDetection {
    pub points: [Vec2; NUM_CONTROL_POINTS],
    pub confidence: f64,
}

impl CornerDetection {
    pub fn new(points: [Vec2; NUM_CONTROL_POINTS], confidence: f64) -> Result<Self, CornerError> {
        let d = Self { points, confidence };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), CornerError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(CornerError::BadConfidence(self.confidence));
        }
        if !self
            .points
            .iter()
            .all(|p| p.x.is_finite() && p.y.is_finite())
        {
            return Err(CornerError::NonFinite);
        }
        Ok(())
    }
}

/// Element of the cyclic group of order 3 acting on control-point indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AmbiguityPermutation {
    #[serde(rename = "I")]
    Identity,
    #[serde(rename = "S1")]
    Sigma1,
    #[serde(rename = "S2")]
    Sigma2,
}

impl AmbiguityPermutation {
    pub const ALL: [AmbiguityPermutation; 3] = [
        AmbiguityPermutation::Identity,
        AmbiguityPermutation::Sigma1,
        AmbiguityPermutation::Sigma2,
    ];

    /// Number of 120° steps.
    pub fn power(self) -> usize {
        match self {
            AmbiguityPermutation::Identity => 0,
            AmbiguityPermutation::Sigma1 => 1,
            AmbiguityPermutation::Sigma2 => 2,
        }
    }

    pub fn from_power(k: usize) -> Self {
        Self::ALL[k % 3]
    }

    pub fn inverse(self) -> Self {
        Self::from_power(3 - self.power())
    }

    /// `map[k]` is the source index whose point lands at index `k`:
    /// `apply(σ, d).points[k] = d.points[map[k]]`.
    pub fn index_map(self) -> [usize; NUM_CONTROL_POINTS] {
        let mut map = [0; NUM_CONTROL_POINTS];
        for axis in 0..3 {
            let src = (axis + self.power()) % 3;
            map[1 + 2 * axis] = 1 + 2 * src;
            map[2 + 2 * axis] = 2 + 2 * src;
        }
        map
    }
}

/// Relabels a detection's control points according to `sigma`.
pub fn apply_permutation(sigma: AmbiguityPermutation, d: &CornerDetection) -> CornerDetection {
    let map = sigma.index_map();
    CornerDetection {
        points: std::array::from_fn(|k| d.points[map[k]]),
        confidence: d.confidence,
    }
}

/// Group product `a ∘ b` (apply `b` first).
pub fn compose_permutations(
    a: AmbiguityPermutation,
    b: AmbiguityPermutation,
) -> AmbiguityPermutation {
    AmbiguityPermutation::from_power(a.power() + b.power())
}

/// Rotation of the canonical corner (axes e₁, e₂, e₃) about its diagonal
/// that realizes `sigma`: 0°, 120° or 240° about (1,1,1)/√3. Σ₁ sends
/// e₁→e₂→e₃→e₁.
pub fn symmetry_rotation(sigma: AmbiguityPermutation) -> Mat3 {
    let axis = Vec3::new(1.0, 1.0, 1.0).normalize();
    let angle = sigma.power() as f64 * 2.0 * std::f64::consts::PI / 3.0;
    exp_so3(&(axis * angle))
}

/// [`symmetry_rotation`] expressed in the object frame of `corner`: a
/// rotation about the corner's apex and diagonal, returned as `(R, t)` acting
/// on object points `x ↦ R x + t`.
pub fn corner_symmetry(corner: &CornerModel, sigma: AmbiguityPermutation) -> (Mat3, Vec3) {
    let frame = Mat3::from_columns(&[corner.axis(0), corner.axis(1), corner.axis(2)]);
    let r = frame * symmetry_rotation(sigma) * frame.transpose();
    let c = corner.apex();
    (r, c - r * c)
}
