//! Pose from 3D–2D correspondences: normalized DLT initialization followed by
//! damped Gauss-Newton (Levenberg-Marquardt) refinement of the reprojection
//! error.

use nalgebra::{DMatrix, Matrix2x6, Matrix3x4, Matrix4, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, GeometryError, Mat3, Pose, Vec2, Vec3, MIN_DEPTH};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PnpError {
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate point configuration (singular value ratio {0:e})")]
    DegenerateConfiguration(f64),
    #[error("normal equations could not be solved")]
    NumericalFailure,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub model_point: Vec3,
    pub image_point: Vec2,
}

impl Correspondence {
    pub fn new(model_point: Vec3, image_point: Vec2) -> Self {
        Self {
            model_point,
            image_point,
        }
    }
}

/// Minimum singular-value ratio accepted by [`pnp_dlt`].
pub const DLT_RANK_TOL: f64 = 1e-10;

/// Similarity that centers points and scales their mean distance to `√dim`.
fn normalizing_scale<const D: usize>(
    points: &[nalgebra::SVector<f64, D>],
) -> (nalgebra::SVector<f64, D>, f64) {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<nalgebra::SVector<f64, D>>() / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    let scale = if mean_dist > 0.0 {
        (D as f64).sqrt() / mean_dist
    } else {
        1.0
    };
    (centroid, scale)
}

/// Linear pose estimate from at least 6 non-coplanar correspondences.
///
/// Image points are mapped to normalized camera coordinates, both point sets
/// are Hartley-normalized, the 3×4 projection is taken from the null vector
/// of the design matrix, and its left 3×3 block is projected onto SO(3). The
/// overall sign is chosen so that the model centroid lies in front of the
/// camera.
pub fn pnp_dlt(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<Pose, PnpError> {
    if corrs.len() < 6 {
        return Err(PnpError::TooFewPoints {
            needed: 6,
            got: corrs.len(),
        });
    }
    let xs: Vec<Vec3> = corrs.iter().map(|c| c.model_point).collect();
    let us: Vec<Vec2> = corrs.iter().map(|c| k.normalize(&c.image_point)).collect();
    let (c3, s3) = normalizing_scale(&xs);
    let (c2, s2) = normalizing_scale(&us);

    let n = corrs.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, (x, u)) in xs.iter().zip(&us).enumerate() {
        let x = (x - c3) * s3;
        let u = (u - c2) * s2;
        let xh = [x.x, x.y, x.z, 1.0];
        for j in 0..4 {
            // row for u:  p1·X - u p3·X = 0
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 8 + j)] = -u.x * xh[j];
            // row for v:  p2·X - v p3·X = 0
            a[(2 * i + 1, 4 + j)] = xh[j];
            a[(2 * i + 1, 8 + j)] = -u.y * xh[j];
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(PnpError::NumericalFailure)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let largest = sv[order[order.len() - 1]];
    let ratio = if largest > 0.0 {
        sv[order[1]] / largest
    } else {
        0.0
    };
    if ratio < DLT_RANK_TOL {
        return Err(PnpError::DegenerateConfiguration(ratio));
    }
    let h: Vec<f64> = v_t.row(order[0]).iter().copied().collect();
    let p_norm = Matrix3x4::from_row_slice(&h);

    // Undo normalization: P = T2⁻¹ · P_norm · T3.
    let t3 = Matrix4::new(
        s3,
        0.0,
        0.0,
        -s3 * c3.x,
        0.0,
        s3,
        0.0,
        -s3 * c3.y,
        0.0,
        0.0,
        s3,
        -s3 * c3.z,
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let t2_inv = Mat3::new(1.0 / s2, 0.0, c2.x, 0.0, 1.0 / s2, c2.y, 0.0, 0.0, 1.0);
    let mut p = t2_inv * p_norm * t3;

    let centroid = xs.iter().sum::<Vec3>() / n as f64;
    let depth = p.row(2).dot(&centroid.push(1.0).transpose());
    if depth < 0.0 {
        p = -p;
    }
    let m: Mat3 = p.fixed_view::<3, 3>(0, 0).into();
    let svd = m.svd(false, false);
    let scale = svd.singular_values.sum() / 3.0;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(PnpError::DegenerateConfiguration(0.0));
    }
    let rotation = crate::geometry::nearest_rotation(&m);
    let translation: Vec3 = p.column(3) / scale;
    Ok(Pose::from_approx(&rotation, translation))
}

/// Root-mean-square of the per-point 2D reprojection distances.
pub fn reprojection_rmse(
    pose: &Pose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
) -> Result<f64, GeometryError> {
    if corrs.is_empty() {
        return Ok(0.0);
    }
    Ok((sum_squared_error(pose, corrs, k)? / corrs.len() as f64).sqrt())
}

fn sum_squared_error(
    pose: &Pose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
) -> Result<f64, GeometryError> {
    let mut sum = 0.0;
    for c in corrs {
        let uv = crate::geometry::project(k, pose, &c.model_point)?;
        sum += (uv - c.image_point).norm_squared();
    }
    Ok(sum)
}

/// Residual `project(X) − x` and its Jacobian with respect to the local
/// increment `[ω, δt]` applied as `R ← exp(ω)R`, `t ← t + δt`.
pub fn residual_jacobian(
    pose: &Pose,
    c: &Correspondence,
    k: &CameraIntrinsics,
) -> Result<(Vec2, Matrix2x6<f64>), GeometryError> {
    let rx = pose.rotation() * c.model_point;
    let xc = rx + pose.translation();
    if xc.z <= MIN_DEPTH {
        return Err(GeometryError::NonPositiveDepth(xc.z));
    }
    let (x, y, z) = (xc.x, xc.y, xc.z);
    let iz = 1.0 / z;
    let residual = Vec2::new(
        k.focal_x * x * iz + k.principal_x,
        k.focal_y * y * iz + k.principal_y,
    ) - c.image_point;

    // d(uv)/d(Xc)
    let dproj = nalgebra::Matrix2x3::new(
        k.focal_x * iz,
        0.0,
        -k.focal_x * x * iz * iz,
        0.0,
        k.focal_y * iz,
        -k.focal_y * y * iz * iz,
    );
    // d(Xc)/dω = -[R X]ₓ, d(Xc)/dt = I
    let d_rot = dproj * (-crate::geometry::skew(&rx));
    let mut j = Matrix2x6::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_rot);
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&dproj);
    Ok((residual, j))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Stop once the increment norm drops below this.
    pub tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub pose: Pose,
    pub iterations: usize,
    pub initial_rmse: f64,
    pub final_rmse: f64,
}

const LAMBDA_MAX: f64 = 1e16;

/// Levenberg-Marquardt minimization of the summed squared reprojection error.
/// Only improving steps are accepted, so the error never increases.
pub fn refine_pose(
    initial: &Pose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    opts: RefineOptions,
) -> Result<Refinement, PnpError> {
    if corrs.len() < 4 {
        return Err(PnpError::TooFewPoints {
            needed: 4,
            got: corrs.len(),
        });
    }
    let n = corrs.len() as f64;
    let mut pose = *initial;
    let mut cost = sum_squared_error(&pose, corrs, k)?;
    let initial_rmse = (cost / n).sqrt();
    let mut lambda = 1e-3;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for c in corrs {
            let (r, j) = residual_jacobian(&pose, c, k)?;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        if cost == 0.0 || jtr.norm() <= 1e-15 * (1.0 + cost) {
            break;
        }
        iterations += 1;

        let mut improved = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = jtj;
            for i in 0..6 {
                damped[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-jtr));
            let omega = Vec3::new(step[0], step[1], step[2]);
            let dt = Vec3::new(step[3], step[4], step[5]);
            let candidate = pose.perturbed(&omega, &dt);
            match sum_squared_error(&candidate, corrs, k) {
                Ok(new_cost) if new_cost < cost => {
                    pose = candidate;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = true;
                    if step.norm() < opts.tol {
                        return Ok(Refinement {
                            pose,
                            iterations,
                            initial_rmse,
                            final_rmse: (cost / n).sqrt(),
                        });
                    }
                    break;
                }
                _ => {
                    if step.norm() < opts.tol {
                        // Converged to within tolerance without improvement.
                        return Ok(Refinement {
                            pose,
                            iterations,
                            initial_rmse,
                            final_rmse: (cost / n).sqrt(),
                        });
                    }
                    lambda *= 10.0;
                }
            }
        }
        if !improved {
            if !jtj.iter().all(|v| v.is_finite()) {
                return Err(PnpError::NumericalFailure);
            }
            break;
        }
    }

    Ok(Refinement {
        pose,
        iterations,
        initial_rmse,
        final_rmse: (cost / n).sqrt(),
    })
}

/// DLT followed by refinement on the same correspondences.
pub fn solve_pnp(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    opts: RefineOptions,
) -> Result<Pose, PnpError> {
    let init = pnp_dlt(corrs, k)?;
    Ok(refine_pose(&init, corrs, k, opts)?.pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, rotation_geodesic_distance};

    fn corner_points(s: f64) -> Vec<Vec3> {
        let mut v = vec![Vec3::zeros()];
        for a in [Vec3::x(), Vec3::y(), Vec3::z()] {
            v.push(s * a);
            v.push(-s * a);
        }
        v
    }

    fn synth(pose: &Pose, pts: &[Vec3], k: &CameraIntrinsics) -> Vec<Correspondence> {
        pts.iter()
            .map(|p| Correspondence::new(*p, project(k, pose, p).unwrap()))
            .collect()
    }

    #[test]
    fn dlt_exact_on_single_corner() {
        let k = CameraIntrinsics::vga();
        let gt = Pose::from_rotvec(&Vec3::new(0.4, -0.7, 0.2), Vec3::new(0.1, -0.05, 2.0));
        let corrs = synth(&gt, &corner_points(0.1), &k);
        let est = pnp_dlt(&corrs, &k).unwrap();
        assert!(rotation_geodesic_distance(&est, &gt) < 1e-6);
        assert!((est.translation() - gt.translation()).norm() < 1e-6);
    }

    #[test]
    fn coplanar_is_degenerate() {
        let k = CameraIntrinsics::vga();
        let gt = Pose::from_rotvec(&Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.0, 0.0, 3.0));
        let pts: Vec<Vec3> = (0..7)
            .map(|i| {
                let a = i as f64 * 0.9;
                Vec3::new(a.cos() * (1.0 + 0.1 * i as f64), a.sin(), 0.0)
            })
            .collect();
        let corrs = synth(&gt, &pts, &k);
        assert!(matches!(
            pnp_dlt(&corrs, &k),
            Err(PnpError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let k = CameraIntrinsics::vga();
        let corrs = synth(
            &Pose::from_rotvec(&Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0)),
            &corner_points(0.1)[..5],
            &k,
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
    fn refine_at_optimum_takes_no_steps() {
        let k = CameraIntrinsics::vga();
        let gt = Pose::from_rotvec(&Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 2.0));
        let corrs = synth(&gt, &corner_points(0.1), &k);
        let r = refine_pose(&gt, &corrs, &k, RefineOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.pose, gt);
        assert_eq!(r.final_rmse, 0.0);
    }

    #[test]
    fn rmse_of_lateral_shift() {
        let k = CameraIntrinsics::vga();
        let z = 4.0;
        let gt = Pose::from_rotvec(&Vec3::zeros(), Vec3::new(0.0, 0.0, z));
        let corrs = synth(&gt, &[Vec3::zeros()], &k);
        let delta = 0.01;
        let shifted = Pose::from_rotvec(&Vec3::zeros(), Vec3::new(delta, 0.0, z));
        let e = reprojection_rmse(&shifted, &corrs, &k).unwrap();
        assert!((e - k.focal_x * delta / z).abs() < 1e-9);
    }

    #[test]
    fn rmse_propagates_depth_error() {
        let k = CameraIntrinsics::vga();
        let corrs = vec![Correspondence::new(
            Vec3::new(0.0, 0.0, -5.0),
            Vec2::zeros(),
        )];
        assert!(reprojection_rmse(&Pose::identity(), &corrs, &k).is_err());
    }
}
