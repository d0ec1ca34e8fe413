//! Triangle meshes: OBJ/PLY loading, diameter and trihedral corner extraction.

mod corners;
mod edges;
mod obj;
mod ply;
pub mod shapes;

pub use corners::{extract_corners, CornerFrame, DEFAULT_ORTHO_TOL, DEFAULT_SHARP_ANGLE_TOL};
pub use edges::{weld_vertices, EdgeTopology, MeshEdge, WELD_EPS};
pub use obj::parse_obj;
pub use ply::parse_ply;

use crate::geometry::Vec3;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face index {index} out of range at line {line} ({vertex_count} vertices)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        vertex_count: usize,
    },
    #[error("degenerate triangle {0:?}")]
    DegenerateTriangle([usize; 3]),
    #[error("need at least 2 vertices, got {0}")]
    TooFewVertices(usize),
}

impl MeshError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        MeshError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Indexed triangle mesh. Triangles are wound counter-clockwise when seen from
/// outside the object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Validates indices and rejects triangles that repeat a vertex.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for t in &triangles {
            for &i in t {
                if i >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        line: 0,
                        index: i as i64,
                        vertex_count: vertices.len(),
                    });
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::DegenerateTriangle(*t));
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Unnormalized face normal (right-hand rule on the winding).
    pub fn face_normal(&self, tri: usize) -> Vec3 {
        let [a, b, c] = self.triangles[tri];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (pb - pa).cross(&(pc - pa))
    }

    pub fn transformed(&self, pose: &crate::geometry::Pose) -> Mesh {
        Mesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| pose.transform_point(v))
                .collect(),
            triangles: self.triangles.clone(),
        }
    }
}

/// Vertex count above which [`compute_diameter`] switches from the plain
/// all-pairs scan to the pruned scan.
pub const DIAMETER_BRUTE_FORCE_LIMIT: usize = 5000;

/// Largest distance between any two vertices.
pub fn compute_diameter(mesh: &Mesh) -> Result<f64, MeshError> {
    point_set_diameter(&mesh.vertices)
}

pub fn point_set_diameter(points: &[Vec3]) -> Result<f64, MeshError> {
    let n = points.len();
    if n < 2 {
        return Err(MeshError::TooFewVertices(n));
    }
    if n <= DIAMETER_BRUTE_FORCE_LIMIT {
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max((points[i] - points[j]).norm_squared());
            }
        }
        return Ok(best.sqrt());
    }

    // Exact branch and bound: |pi - pj| <= r_i + r_j around the centroid.
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n as f64;
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - centroid).norm(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best = 0.0f64;
    for (a, &(ra, ia)) in order.iter().enumerate() {
        if 2.0 * ra * (1.0 + 1e-12) < best {
            break;
        }
        for &(rb, ib) in &order[a + 1..] {
            if (ra + rb) * (1.0 + 1e-12) < best {
                break;
            }
            best = best.max((points[ia] - points[ib]).norm());
        }
    }
    Ok(best)
}
