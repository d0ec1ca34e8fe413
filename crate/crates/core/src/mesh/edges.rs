use std::collections::{BTreeMap, HashMap};

use super::Mesh;
use crate::geometry::Vec3;

/// Vertices closer than this are merged before edge analysis.
pub const WELD_EPS: f64 = 1e-7;

/// Merges vertices within [`WELD_EPS`] of an earlier vertex. Returns the
/// welded mesh (unused vertices kept, collapsed triangles dropped) and the
/// old→new index map.
pub fn weld_vertices(mesh: &Mesh) -> (Mesh, Vec<usize>) {
    let cell = |v: &Vec3| -> [i64; 3] {
        [
            (v.x / WELD_EPS).floor() as i64,
            (v.y / WELD_EPS).floor() as i64,
            (v.z / WELD_EPS).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut remap = Vec::with_capacity(mesh.vertices.len());

    for v in &mesh.vertices {
        let c = cell(v);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &id in ids {
                            if (vertices[id] - v).norm() <= WELD_EPS {
                                found = Some(id);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        let id = found.unwrap_or_else(|| {
            vertices.push(*v);
            grid.entry(c).or_default().push(vertices.len() - 1);
            vertices.len() - 1
        });
        remap.push(id);
    }

    let triangles = mesh
        .triangles
        .iter()
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
        .collect();
    (
        Mesh {
            vertices,
            triangles,
        },
        remap,
    )
}

/// An undirected mesh edge with its incident triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshEdge {
    /// Endpoints, `a < b`.
    pub a: usize,
    pub b: usize,
    pub faces: Vec<usize>,
    /// Angle between the two adjacent face normals, i.e. the deviation of the
    /// dihedral angle from π. `None` for boundary, non-manifold edges or
    /// edges next to a zero-area face.
    pub fold_angle: Option<f64>,
}

impl MeshEdge {
    pub fn is_sharp(&self, tol: f64) -> bool {
        self.fold_angle.is_some_and(|a| a > tol)
    }
}

/// Edge adjacency of a welded mesh.
#[derive(Debug, Clone)]
pub struct EdgeTopology {
    pub mesh: Mesh,
    pub edges: Vec<MeshEdge>,
    /// Unit face normals (zero vector for degenerate faces).
    pub face_normals: Vec<Vec3>,
}

impl EdgeTopology {
    pub fn build(mesh: &Mesh) -> Self {
        let (mesh, _) = weld_vertices(mesh);
        let face_normals: Vec<Vec3> = (0..mesh.triangles.len())
            .map(|f| {
                let n = mesh.face_normal(f);
                let len = n.norm();
                if len > 0.0 && len.is_finite() {
                    n / len
                } else {
                    Vec3::zeros()
                }
            })
            .collect();

        // BTreeMap keeps edge order independent of hashing.
        let mut adjacency: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (f, t) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                adjacency.entry((i.min(j), i.max(j))).or_default().push(f);
            }
        }

        let edges = adjacency
            .into_iter()
            .map(|((a, b), faces)| {
                let fold_angle = if faces.len() == 2 {
                    let (n0, n1) = (face_normals[faces[0]], face_normals[faces[1]]);
                    if n0 == Vec3::zeros() || n1 == Vec3::zeros() {
                        None
                    } else {
                        // atan2 form stays accurate near 0 and π.
                        Some(n0.cross(&n1).norm().atan2(n0.dot(&n1)))
                    }
                } else {
                    None
                };
                MeshEdge {
                    a,
                    b,
                    faces,
                    fold_angle,
                }
            })
            .collect();

        Self {
            mesh,
            edges,
            face_normals,
        }
    }
}
