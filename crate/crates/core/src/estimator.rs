//! Corner-based pose estimation.
//!
//! Every (model corner, detection, ambiguity permutation) triple yields one
//! pose hypothesis from the 7 control-point correspondences. Hypotheses that
//! explain enough other detections are refined on all their inliers, scored,
//! and the best one is returned. The enumeration is exhaustive and the
//! reduction is ordered, so serial and parallel runs give identical results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corner::{
    apply_permutation, control_points, AmbiguityPermutation, CornerDetection, CornerModel,
};
use crate::geometry::{project, CameraIntrinsics, Pose, Vec2};
use crate::mesh::{
    compute_diameter, extract_corners, Mesh, MeshError, DEFAULT_ORTHO_TOL, DEFAULT_SHARP_ANGLE_TOL,
};
use crate::pnp::{pnp_dlt, refine_pose, reprojection_rmse, Correspondence, RefineOptions};
use crate::render::{normalized_cross_correlation, EdgeSketch, Raster, RenderError};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("edge-correlation scoring needs an input edge image")]
    MissingEdgeImage,
    #[error("assignment is empty")]
    EmptyAssignment,
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
    #[error("object model has no corners")]
    NoCorners,
    #[error("corner index {index} out of range for {count} corners")]
    CornerIndex { index: usize, count: usize },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Corner(#[from] crate::corner::CornerError),
}

/// Fraction of the object diameter used as control-point scale.
pub const DEFAULT_SCALE_FRACTION: f64 = 0.1;

/// A mesh, its corner set and its diameter.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub mesh: Mesh,
    pub corners: Vec<CornerModel>,
    pub diameter: f64,
    /// Whether the object has rotational symmetries that make ADI the
    /// appropriate accuracy metric.
    pub symmetric: bool,
    sketch: EdgeSketch,
}

impl ObjectModel {
    pub fn new(mesh: Mesh, corners: Vec<CornerModel>) -> Result<Self, EstimateError> {
        let diameter = compute_diameter(&mesh)?;
        let sketch = EdgeSketch::new(&mesh, DEFAULT_SHARP_ANGLE_TOL);
        Ok(Self {
            mesh,
            corners,
            diameter,
            symmetric: false,
            sketch,
        })
    }

    /// Extracts corners with the default tolerances and places control points
    /// at 10% of the diameter.
    pub fn from_mesh(mesh: Mesh) -> Result<Self, EstimateError> {
        Self::from_mesh_with(
            mesh,
            DEFAULT_SHARP_ANGLE_TOL,
            DEFAULT_ORTHO_TOL,
            DEFAULT_SCALE_FRACTION,
        )
    }

    pub fn from_mesh_with(
        mesh: Mesh,
        sharp_angle_tol: f64,
        ortho_tol: f64,
        scale_fraction: f64,
    ) -> Result<Self, EstimateError> {
        let diameter = compute_diameter(&mesh)?;
        let scale = scale_fraction * diameter;
        let corners = extract_corners(&mesh, sharp_angle_tol, ortho_tol)
            .iter()
            .map(|f| control_points(f, scale))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(mesh, corners)
    }

    pub fn with_symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    /// Keeps only the corners at the given indices, in that order.
    pub fn with_corner_subset(mut self, indices: &[usize]) -> Result<Self, EstimateError> {
        self.corners = indices
            .iter()
            .map(|&i| {
                self.corners
                    .get(i)
                    .copied()
                    .ok_or(EstimateError::CornerIndex {
                        index: i,
                        count: self.corners.len(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(self)
    }

    pub fn edge_sketch(&self) -> &EdgeSketch {
        &self.sketch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    Reprojection,
    EdgeNcc,
}

/// How the inlier count is compared against `min_inliers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InlierGate {
    /// `count > min_inliers`.
    #[default]
    Strict,
    /// `count >= min_inliers`, for scenes where a single corner is all there is.
    AtLeast,
}

impl InlierGate {
    pub fn passes(self, count: usize, min_inliers: usize) -> bool {
        match self {
            InlierGate::Strict => count > min_inliers,
            InlierGate::AtLeast => count >= min_inliers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Mean control-point distance (px) under which a detection matches a corner.
    pub inlier_px_threshold: f64,
    pub min_inliers: usize,
    pub gate: InlierGate,
    pub scorer: ScorerKind,
    pub refine_max_iters: usize,
    pub refine_tol: f64,
    /// Blur both edge images before correlating them.
    pub edge_blur: bool,
    /// Evaluate hypotheses on the rayon pool.
    pub parallel: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            inlier_px_threshold: 8.0,
            min_inliers: 1,
            gate: InlierGate::Strict,
            scorer: ScorerKind::Reprojection,
            refine_max_iters: 50,
            refine_tol: 1e-12,
            edge_blur: true,
            parallel: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        if !(self.inlier_px_threshold.is_finite() && self.inlier_px_threshold > 0.0) {
            return Err(EstimateError::InvalidConfig(format!(
                "inlier_px_threshold must be positive, got {}",
                self.inlier_px_threshold
            )));
        }
        if self.min_inliers < 1 {
            return Err(EstimateError::InvalidConfig(
                "min_inliers must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn refine_options(&self) -> RefineOptions {
        RefineOptions {
            max_iters: self.refine_max_iters,
            tol: self.refine_tol,
        }
    }
}

/// A (corner, detection, permutation) match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InlierMatch {
    pub corner: usize,
    pub detection: usize,
    /// Permutation the detection carries relative to the model's labelling.
    pub permutation: AmbiguityPermutation,
    /// Mean control-point distance in pixels.
    #[serde(skip)]
    pub cost: f64,
}

/// Position of a hypothesis in the enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub index: usize,
    pub corner: usize,
    pub detection: usize,
    pub permutation: AmbiguityPermutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPose {
    pub pose: Pose,
    pub score: f64,
    pub inlier_count: usize,
    pub inlier_assignment: Vec<InlierMatch>,
    /// RMSE (px) over the control points of all inliers.
    pub rmse: f64,
    pub hypothesis: Hypothesis,
}

fn projected_corners(
    pose: &Pose,
    model: &ObjectModel,
    k: &CameraIntrinsics,
) -> Vec<Option<[Vec2; 7]>> {
    model
        .corners
        .iter()
        .map(|c| {
            let mut out = [Vec2::zeros(); 7];
            for (o, p) in out.iter_mut().zip(&c.points) {
                *o = project(k, pose, p).ok()?;
            }
            Some(out)
        })
        .collect()
}

/// Detection points relabelled into model order, for a detection that
/// carries permutation `sigma` (i.e. `d = apply_permutation(sigma, ideal)`).
pub fn unpermute(sigma: AmbiguityPermutation, d: &CornerDetection) -> CornerDetection {
    apply_permutation(sigma.inverse(), d)
}

/// Mean distance between projected control points and the detection
/// relabelled as if it carried permutation `sigma`.
fn match_cost(projected: &[Vec2; 7], d: &CornerDetection, sigma: AmbiguityPermutation) -> f64 {
    let map = sigma.inverse().index_map();
    projected
        .iter()
        .enumerate()
        .map(|(k, p)| (p - d.points[map[k]]).norm())
        .sum::<f64>()
        / 7.0
}

/// Matches corners to detections under `pose`.
///
/// The cost of a (corner, detection) pair is the smallest mean control-point
/// distance over the three permutations. Pairs with cost at most `tau_px`
/// are assigned greedily by ascending cost (ties by corner, then detection
/// index), one-to-one. The result is sorted by corner index.
pub fn match_inliers(
    pose: &Pose,
    model: &ObjectModel,
    detections: &[CornerDetection],
    k: &CameraIntrinsics,
    tau_px: f64,
) -> Vec<InlierMatch> {
    let projected = projected_corners(pose, model, k);
    let mut candidates = Vec::new();
    for (ci, proj) in projected.iter().enumerate() {
        let Some(proj) = proj else { continue };
        for (dj, d) in detections.iter().enumerate() {
            let (cost, permutation) = AmbiguityPermutation::ALL
                .iter()
                .map(|&s| (match_cost(proj, d, s), s))
                .fold(
                    (f64::INFINITY, AmbiguityPermutation::Identity),
                    |best, cur| {
                        if cur.0 < best.0 {
                            cur
                        } else {
                            best
                        }
                    },
                );
            if cost <= tau_px {
                candidates.push(InlierMatch {
                    corner: ci,
                    detection: dj,
                    permutation,
                    cost,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.corner.cmp(&b.corner))
            .then(a.detection.cmp(&b.detection))
    });
    let mut used_c = vec![false; model.corners.len()];
    let mut used_d = vec![false; detections.len()];
    let mut out = Vec::new();
    for m in candidates {
        if !used_c[m.corner] && !used_d[m.detection] {
            used_c[m.corner] = true;
            used_d[m.detection] = true;
            out.push(m);
        }
    }
    out.sort_by_key(|m| m.corner);
    out
}

/// 7 correspondences per match, detection points relabelled with
/// [`unpermute`].
pub fn assignment_correspondences(
    model: &ObjectModel,
    detections: &[CornerDetection],
    assignment: &[InlierMatch],
) -> Vec<Correspondence> {
    assignment
        .iter()
        .flat_map(|m| {
            let d = unpermute(m.permutation, &detections[m.detection]);
            let c = &model.corners[m.corner];
            (0..7).map(move |k| Correspondence::new(c.points[k], d.points[k]))
        })
        .collect()
}

/// `inlier_count − RMSE / τ_px`.
pub fn score_reprojection(
    pose: &Pose,
    model: &ObjectModel,
    detections: &[CornerDetection],
    k: &CameraIntrinsics,
    assignment: &[InlierMatch],
    tau_px: f64,
) -> Result<f64, EstimateError> {
    if assignment.is_empty() {
        return Err(EstimateError::EmptyAssignment);
    }
    let corrs = assignment_correspondences(model, detections, assignment);
    let rmse = reprojection_rmse(pose, &corrs, k).unwrap_or(f64::INFINITY);
    Ok(assignment.len() as f64 - rmse / tau_px)
}

/// NCC between the input edge image and the model's edges rendered at `pose`.
pub fn score_edge_ncc(
    pose: &Pose,
    model: &ObjectModel,
    input_edges: &Raster,
    k: &CameraIntrinsics,
    blur: bool,
) -> Result<f64, EstimateError> {
    let template = model.sketch.render(pose, k, blur);
    Ok(normalized_cross_correlation(input_edges, &template)?)
}

fn hypothesis_at(index: usize, n_det: usize) -> Hypothesis {
    let permutation = AmbiguityPermutation::ALL[index % 3];
    let pair = index / 3;
    Hypothesis {
        index,
        corner: pair / n_det,
        detection: pair % n_det,
        permutation,
    }
}

struct Context<'a> {
    model: &'a ObjectModel,
    detections: &'a [CornerDetection],
    k: &'a CameraIntrinsics,
    config: &'a EstimatorConfig,
    edges: Option<&'a Raster>,
}

impl Context<'_> {
    /// PnP on one corner's 7 points, refined on those same points.
    fn hypothesis_pose(&self, h: &Hypothesis) -> Option<Pose> {
        let corner = &self.model.corners[h.corner];
        let d = unpermute(h.permutation, &self.detections[h.detection]);
        let corrs: Vec<Correspondence> = (0..7)
            .map(|k| Correspondence::new(corner.points[k], d.points[k]))
            .collect();
        let init = pnp_dlt(&corrs, self.k).ok()?;
        if init.transform_point(&corner.centroid()).z <= 0.0 {
            return None;
        }
        let pose = refine_pose(&init, &corrs, self.k, self.config.refine_options())
            .map(|r| r.pose)
            .unwrap_or(init);
        (pose.transform_point(&corner.centroid()).z > 0.0).then_some(pose)
    }

    fn evaluate(&self, h: Hypothesis) -> Option<ScoredPose> {
        let cfg = self.config;
        let tau = cfg.inlier_px_threshold;
        let pose = self.hypothesis_pose(&h)?;
        let inliers = match_inliers(&pose, self.model, self.detections, self.k, tau);
        if !cfg.gate.passes(inliers.len(), cfg.min_inliers) {
            return None;
        }

        let corrs = assignment_correspondences(self.model, self.detections, &inliers);
        let (mut pose, mut assignment) = (pose, inliers);
        if corrs.len() >= 4 {
            if let Ok(r) = refine_pose(&pose, &corrs, self.k, cfg.refine_options()) {
                let rematched = match_inliers(&r.pose, self.model, self.detections, self.k, tau);
                if cfg.gate.passes(rematched.len(), cfg.min_inliers) {
                    pose = r.pose;
                    assignment = rematched;
                }
            }
        }

        let corrs = assignment_correspondences(self.model, self.detections, &assignment);
        let rmse = reprojection_rmse(&pose, &corrs, self.k).ok()?;
        let score = match cfg.scorer {
            ScorerKind::Reprojection => assignment.len() as f64 - rmse / tau,
            ScorerKind::EdgeNcc => {
                let edges = self.edges?;
                let template = self.model.sketch.render(&pose, self.k, cfg.edge_blur);
                normalized_cross_correlation(edges, &template).ok()?
            }
        };
        Some(ScoredPose {
            pose,
            score,
            inlier_count: assignment.len(),
            inlier_assignment: assignment,
            rmse,
            hypothesis: h,
        })
    }
}

/// True when `a` should be preferred over `b`: higher score, then more
/// inliers, then lower RMSE, then earlier hypothesis.
pub fn is_better(a: &ScoredPose, b: &ScoredPose) -> bool {
    a.score
        .total_cmp(&b.score)
        .then(a.inlier_count.cmp(&b.inlier_count))
        .then(b.rmse.total_cmp(&a.rmse))
        .then(b.hypothesis.index.cmp(&a.hypothesis.index))
        .is_gt()
}

/// All hypotheses that pass the inlier gate, in enumeration order.
///
/// `input_edges` is required when `config.scorer` is [`ScorerKind::EdgeNcc`];
/// it is blurred here when `config.edge_blur` is set.
pub fn candidate_poses(
    model: &ObjectModel,
    detections: &[CornerDetection],
    k: &CameraIntrinsics,
    config: &EstimatorConfig,
    input_edges: Option<&Raster>,
) -> Result<Vec<ScoredPose>, EstimateError> {
    config.validate()?;
    if model.corners.is_empty() {
        return Err(EstimateError::NoCorners);
    }
    let blurred;
    let edges = match (config.scorer, input_edges) {
        (ScorerKind::EdgeNcc, None) => return Err(EstimateError::MissingEdgeImage),
        (ScorerKind::EdgeNcc, Some(e)) => {
            if e.width() != k.width || e.height() != k.height {
                return Err(RenderError::DimensionMismatch(
                    e.width(),
                    e.height(),
                    k.width,
                    k.height,
                )
                .into());
            }
            if config.edge_blur {
                blurred = e.blurred();
                Some(&blurred)
            } else {
                Some(e)
            }
        }
        (ScorerKind::Reprojection, _) => None,
    };
    let ctx = Context {
        model,
        detections,
        k,
        config,
        edges,
    };
    let n = model.corners.len() * detections.len() * 3;
    let nd = detections.len();
    let results: Vec<Option<ScoredPose>> = if config.parallel {
        (0..n)
            .into_par_iter()
            .map(|i| ctx.evaluate(hypothesis_at(i, nd)))
            .collect()
    } else {
        (0..n).map(|i| ctx.evaluate(hypothesis_at(i, nd))).collect()
    };
    Ok(results.into_iter().flatten().collect())
}

/// Best-scoring pose over all hypotheses, or `None` when nothing passes the
/// inlier gate.
pub fn estimate(
    model: &ObjectModel,
    detections: &[CornerDetection],
    k: &CameraIntrinsics,
    config: &EstimatorConfig,
    input_edges: Option<&Raster>,
) -> Result<Option<ScoredPose>, EstimateError> {
    let candidates = candidate_poses(model, detections, k, config, input_edges)?;
    Ok(candidates
        .into_iter()
        .reduce(|best, c| if is_better(&c, &best) { c } else { best }))
}
