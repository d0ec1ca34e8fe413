//! Pose accuracy metrics (ADD, ADI, k%-diameter correctness), silhouette
//! IoU, and per-group aggregation into a results table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::ObjectModel;
use crate::geometry::{CameraIntrinsics, Pose, Vec3};
use crate::mesh::Mesh;
use crate::render::render_mask;
use crate::sim::SceneRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("model point set is empty")]
    EmptyPointSet,
    #[error("no records to aggregate")]
    EmptyInput,
}

/// Largest point set used as is; larger meshes are subsampled.
pub const MAX_METRIC_POINTS: usize = 10_000;

/// Points used by ADD/ADI: all vertices, or a seeded subsample of
/// [`MAX_METRIC_POINTS`] vertices (partial Fisher–Yates, original order kept).
pub fn model_points(mesh: &Mesh, seed: u64) -> Vec<Vec3> {
    let n = mesh.vertices.len();
    if n <= MAX_METRIC_POINTS {
        return mesh.vertices.clone();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = SceneRng::new(seed);
    for i in 0..MAX_METRIC_POINTS {
        let j = i + rng.index(n - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..MAX_METRIC_POINTS].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| mesh.vertices[i]).collect()
}

/// Mean distance between corresponding model points under the two poses.
pub fn add_metric(est: &Pose, gt: &Pose, points: &[Vec3]) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptyPointSet);
    }
    let sum: f64 = points
        .iter()
        .map(|p| (est.transform_point(p) - gt.transform_point(p)).norm())
        .sum();
    Ok(sum / points.len() as f64)
}

/// Mean over points of the distance from the estimated position to the
/// closest ground-truth-transformed model point.
pub fn adi_metric(est: &Pose, gt: &Pose, points: &[Vec3]) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptyPointSet);
    }
    let gt_pts: Vec<Vec3> = points.iter().map(|p| gt.transform_point(p)).collect();
    let sum: f64 = points
        .iter()
        .map(|p| {
            let e = est.transform_point(p);
            gt_pts
                .iter()
                .map(|g| (e - g).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    Ok(sum / points.len() as f64)
}

/// `add_value < k% of diameter` (strict).
pub fn pose_correct(add_value: f64, diameter: f64, k_percent: f64) -> bool {
    add_value < k_percent / 100.0 * diameter
}

/// Intersection over union of the silhouettes rendered at both poses; 0 when
/// both are empty.
pub fn detection_iou(mesh: &Mesh, est: &Pose, gt: &Pose, k: &CameraIntrinsics) -> f64 {
    let a = render_mask(mesh, est, k);
    let b = render_mask(mesh, gt, k);
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.values().iter().zip(b.values()) {
        let (x, y) = (*x > 0.5, *y > 0.5);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// IoU above which the object counts as detected.
pub const DETECTION_IOU_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// ADD, or ADI for symmetric models.
    pub add: f64,
    pub add_rel: f64,
    pub correct_10: bool,
    pub correct_20: bool,
    pub correct_30: bool,
    pub iou: f64,
    pub detected: bool,
}

impl EvaluationRecord {
    pub fn from_values(add: f64, diameter: f64, iou: f64) -> Self {
        Self {
            add,
            add_rel: add / diameter,
            correct_10: pose_correct(add, diameter, 10.0),
            correct_20: pose_correct(add, diameter, 20.0),
            correct_30: pose_correct(add, diameter, 30.0),
            iou,
            detected: iou > DETECTION_IOU_THRESHOLD,
        }
    }

    /// Record for a scene where the estimator returned nothing.
    pub fn missing() -> Self {
        Self {
            add: f64::INFINITY,
            add_rel: f64::INFINITY,
            correct_10: false,
            correct_20: false,
            correct_30: false,
            iou: 0.0,
            detected: false,
        }
    }
}

/// Scores one estimate against ground truth, using ADI when the model is
/// flagged symmetric.
pub fn evaluate_pose(
    model: &ObjectModel,
    points: &[Vec3],
    est: Option<&Pose>,
    gt: &Pose,
    k: &CameraIntrinsics,
) -> Result<EvaluationRecord, MetricError> {
    let Some(est) = est else {
        return Ok(EvaluationRecord::missing());
    };
    let dist = if model.symmetric {
        adi_metric(est, gt, points)?
    } else {
        add_metric(est, gt, points)?
    };
    let iou = detection_iou(&model.mesh, est, gt, k);
    Ok(EvaluationRecord::from_values(dist, model.diameter, iou))
}

/// Percentages for one group of scenes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub count: usize,
    pub add10: f64,
    pub add20: f64,
    pub add30: f64,
    pub detection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Rates over all scenes of each group.
    pub rows: Vec<GroupRow>,
    pub mean: [f64; 4],
    /// Population standard deviation across groups.
    pub std: [f64; 4],
    /// Pose rates restricted to detected scenes (`detection` column is the
    /// number of detected scenes as a percentage, as above). Groups with no
    /// detected scene are omitted.
    pub conditional_rows: Vec<GroupRow>,
    pub conditional_mean: [f64; 4],
    pub conditional_std: [f64; 4],
}

fn percent(records: &[&EvaluationRecord], f: impl Fn(&EvaluationRecord) -> bool) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    100.0 * records.iter().filter(|r| f(r)).count() as f64 / records.len() as f64
}

fn row(group: &str, all: &[&EvaluationRecord], subset: &[&EvaluationRecord]) -> GroupRow {
    GroupRow {
        group: group.to_string(),
        count: subset.len(),
        add10: percent(subset, |r| r.correct_10),
        add20: percent(subset, |r| r.correct_20),
        add30: percent(subset, |r| r.correct_30),
        detection: percent(all, |r| r.detected),
    }
}

fn mean_std(rows: &[GroupRow]) -> ([f64; 4], [f64; 4]) {
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    if rows.is_empty() {
        return (mean, std);
    }
    let n = rows.len() as f64;
    let cols = |r: &GroupRow| [r.add10, r.add20, r.add30, r.detection];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(cols(r)) {
            *m += v / n;
        }
    }
    for r in rows {
        for ((s, v), m) in std.iter_mut().zip(cols(r)).zip(mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    for s in &mut std {
        *s = s.sqrt();
    }
    (mean, std)
}

/// Aggregates records per group, in the given group order.
pub fn aggregate(groups: &[(String, Vec<EvaluationRecord>)]) -> Result<Summary, MetricError> {
    if groups.is_empty() || groups.iter().all(|(_, r)| r.is_empty()) {
        return Err(MetricError::EmptyInput);
    }
    let mut rows = Vec::new();
    let mut conditional_rows = Vec::new();
    for (name, records) in groups.iter().filter(|(_, r)| !r.is_empty()) {
        let all: Vec<&EvaluationRecord> = records.iter().collect();
        let detected: Vec<&EvaluationRecord> = records.iter().filter(|r| r.detected).collect();
        rows.push(row(name, &all, &all));
        if !detected.is_empty() {
            conditional_rows.push(row(name, &all, &detected));
        }
    }
    let (mean, std) = mean_std(&rows);
    let (conditional_mean, conditional_std) = mean_std(&conditional_rows);
    Ok(Summary {
        rows,
        mean,
        std,
        conditional_rows,
        conditional_mean,
        conditional_std,
    })
}

fn csv_table(rows: &[GroupRow], mean: &[f64; 4], std: &[f64; 4]) -> String {
    let mut s = String::from("group,add10,add20,add30,detection\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.1},{:.1},{:.1},{:.1}",
            r.group, r.add10, r.add20, r.add30, r.detection
        );
    }
    let _ = writeln!(
        s,
        "mean±std,{:.1}±{:.1},{:.1}±{:.1},{:.1}±{:.1},{:.1}±{:.1}",
        mean[0], std[0], mean[1], std[1], mean[2], std[2], mean[3], std[3]
    );
    s
}

impl Summary {
    /// Results table: one row per group, then a `mean±std` row.
    pub fn to_csv(&self) -> String {
        csv_table(&self.rows, &self.mean, &self.std)
    }

    /// Same layout, pose columns restricted to detected scenes.
    pub fn to_conditional_csv(&self) -> String {
        csv_table(
            &self.conditional_rows,
            &self.conditional_mean,
            &self.conditional_std,
        )
    }
}
