//! Corner-based 6D object pose estimation.
//!
//! The pipeline:
//!
//! 1. [`mesh`] loads a CAD mesh and finds its trihedral corners;
//! 2. [`corner`] attaches 7 virtual control points to each corner and models
//!    the three-fold ambiguity of a corner's appearance;
//! 3. [`estimator`] matches detected corners against model corners, solving
//!    [`pnp`] for every (corner, detection, permutation) hypothesis, and keeps
//!    the best-scoring pose, optionally verified against an edge image from
//!    [`render`];
//! 4. [`sim`] and [`metrics`] generate synthetic detections and score the
//!    results with ADD/ADI and silhouette IoU.

pub mod corner;
pub mod estimator;
pub mod geometry;
pub mod mesh;
pub mod metrics;
pub mod pnp;
pub mod render;
pub mod sim;

pub use corner::{AmbiguityPermutation, CornerDetection, CornerModel};
pub use estimator::{estimate, EstimatorConfig, ObjectModel, ScoredPose, ScorerKind};
pub use geometry::{project, CameraIntrinsics, Pose, Vec2, Vec3};
pub use mesh::{CornerFrame, Mesh};
pub use render::Raster;
pub use sim::{NoiseModel, Scenario};
