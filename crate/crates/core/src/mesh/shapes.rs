//! Procedural meshes with outward-facing triangles.

use super::Mesh;
use crate::geometry::{Vec2, Vec3};

/// Prism over a counter-clockwise polygon in the xy-plane, from `z = 0` to
/// `z = height`. Caps are fan-triangulated from the first vertex, so the
/// polygon must be star-shaped with respect to it.
pub fn extrude_polygon(polygon: &[Vec2], height: f64) -> Mesh {
    let n = polygon.len();
    let mut vertices: Vec<Vec3> = polygon.iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect();
    vertices.extend(polygon.iter().map(|p| Vec3::new(p.x, p.y, height)));
    let mut triangles = Vec::with_capacity(4 * n);
    for i in 1..n - 1 {
        triangles.push([0, i + 1, i]);
        triangles.push([n, n + i, n + i + 1]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, n + j]);
        triangles.push([i, n + j, n + i]);
    }
    Mesh::new(vertices, triangles).expect("extruded polygon is a valid mesh")
}

/// Axis-aligned box `[0, sx] × [0, sy] × [0, sz]`.
pub fn cuboid(sx: f64, sy: f64, sz: f64) -> Mesh {
    let base = [
        Vec2::new(0.0, 0.0),
        Vec2::new(sx, 0.0),
        Vec2::new(sx, sy),
        Vec2::new(0.0, sy),
    ];
    extrude_polygon(&base, sz)
}

/// Unit cube `[0, 1]³`.
pub fn unit_cube() -> Mesh {
    cuboid(1.0, 1.0, 1.0)
}

/// L-shaped prism: cross-section `(0,0) (3,0) (3,1) (1,1) (1,2) (0,2)`,
/// extruded by `height`. All 12 vertices are trihedral corners.
pub fn l_prism(height: f64) -> Mesh {
    let section = [
        Vec2::new(0.0, 0.0),
        Vec2::new(3.0, 0.0),
        Vec2::new(3.0, 1.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(1.0, 2.0),
        Vec2::new(0.0, 2.0),
    ];
    extrude_polygon(&section, height)
}

/// UV sphere of the given radius centred at the origin.
pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> Mesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(
                radius
                    * Vec3::new(
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ),
            );
        }
    }
    let south = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s), ring(1, s + 1)]);
        triangles.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    Mesh::new(vertices, triangles).expect("sphere is a valid mesh")
}

/// Flat rectangle `[0, w] × [0, h]` at `z = 0`, facing −z.
pub fn rectangle(w: f64, h: f64) -> Mesh {
    let vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(w, 0.0, 0.0),
        Vec3::new(w, h, 0.0),
        Vec3::new(0.0, h, 0.0),
    ];
    Mesh::new(vertices, vec![[0, 2, 1], [0, 3, 2]]).expect("rectangle is a valid mesh")
}

/// Wavefront OBJ text for a mesh (1-based indices).
pub fn to_obj(mesh: &Mesh) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}
