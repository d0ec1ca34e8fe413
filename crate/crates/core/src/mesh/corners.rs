use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::{EdgeTopology, Mesh};
use crate::geometry::{Mat3, Vec3};

pub const DEFAULT_SHARP_ANGLE_TOL: f64 = 0.35;
pub const DEFAULT_ORTHO_TOL: f64 = 0.17;

/// Apex and the three edge directions of a trihedral corner.
///
/// `axes` are unit vectors pointing from the apex along the sharp edges,
/// ordered so that `det[a₁ a₂ a₃] > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerFrame {
    pub apex: Vec3,
    pub axes: [Vec3; 3],
}

impl CornerFrame {
    /// Columns are the axes.
    pub fn axes_matrix(&self) -> Mat3 {
        Mat3::from_columns(&self.axes)
    }

    /// Direction of the corner diagonal (sum of the axes), pointing into the
    /// solid for a convex corner.
    pub fn diagonal(&self) -> Vec3 {
        (self.axes[0] + self.axes[1] + self.axes[2]).normalize()
    }
}

fn lex_cmp(a: &Vec3, b: &Vec3) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Finds every vertex where exactly three sharp edges meet at pairwise right
/// angles.
///
/// An edge is sharp when the angle between its two face normals exceeds
/// `sharp_angle_tol`. Directions must be within `ortho_tol` of 90° pairwise.
/// Axes start with the lexicographically smallest direction and continue in
/// right-handed order. Corners are returned in (welded) vertex order.
pub fn extract_corners(mesh: &Mesh, sharp_angle_tol: f64, ortho_tol: f64) -> Vec<CornerFrame> {
    if mesh.vertices.len() < 4 || mesh.triangles.is_empty() {
        return Vec::new();
    }
    let topo = EdgeTopology::build(mesh);
    let verts = &topo.mesh.vertices;
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); verts.len()];
    for e in topo.edges.iter().filter(|e| e.is_sharp(sharp_angle_tol)) {
        incident[e.a].push(e.b);
        incident[e.b].push(e.a);
    }

    let mut corners = Vec::new();
    for (v, neighbours) in incident.iter().enumerate() {
        if neighbours.len() != 3 {
            continue;
        }
        let apex = verts[v];
        let mut dirs: Vec<Vec3> = neighbours
            .iter()
            .map(|&n| (verts[n] - apex).normalize())
            .collect();
        let orthogonal = (0..3).all(|i| {
            let j = (i + 1) % 3;
            let angle = dirs[i].dot(&dirs[j]).clamp(-1.0, 1.0).acos();
            (angle - FRAC_PI_2).abs() <= ortho_tol
        });
        if !orthogonal {
            continue;
        }
        dirs.sort_by(lex_cmp);
        if Mat3::from_columns(&dirs).determinant() < 0.0 {
            dirs.swap(1, 2);
        }
        corners.push(CornerFrame {
            apex,
            axes: [dirs[0], dirs[1], dirs[2]],
        });
    }
    corners
}
