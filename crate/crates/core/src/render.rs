//! Software rasterization of edge images and silhouettes, plus zero-mean
//! normalized cross-correlation between rasters.
//!
//! Pixel `(i, j)` covers `[i, i+1) × [j, j+1)` in image coordinates; its
//! center is `(i + 0.5, j + 0.5)`.

use std::io::Write;

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose, Vec2, Vec3};
use crate::mesh::{EdgeTopology, Mesh, DEFAULT_SHARP_ANGLE_TOL};

/// Near clipping plane for rasterization.
pub const NEAR_PLANE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major grid of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    /// Values are clamped into `[0, 1]`.
    pub fn from_values(width: u32, height: u32, mut values: Vec<f64>) -> Option<Self> {
        if values.len() != width as usize * height as usize {
            return None;
        }
        for v in &mut values {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Some(Self {
            width,
            height,
            values,
        })
    }

    pub fn for_camera(k: &CameraIntrinsics) -> Self {
        Self::new(k.width, k.height)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        let w = self.width as usize;
        self.values[y as usize * w + x as usize] = v.clamp(0.0, 1.0);
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Pixel-wise maximum with `other`.
    pub fn max_with(&mut self, other: &Raster) -> Result<(), RenderError> {
        check_dims(self, other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.max(*b);
        }
        Ok(())
    }

    /// 3×3 binomial blur (`[1 2 1]/4` separably) with clamped borders.
    pub fn blurred(&self) -> Raster {
        let (w, h) = (self.width as usize, self.height as usize);
        if w == 0 || h == 0 {
            return self.clone();
        }
        let idx = |x: usize, y: usize| y * w + x;
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let l = self.values[idx(x.saturating_sub(1), y)];
                let r = self.values[idx((x + 1).min(w - 1), y)];
                tmp[idx(x, y)] = 0.25 * l + 0.5 * self.values[idx(x, y)] + 0.25 * r;
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let u = tmp[idx(x, y.saturating_sub(1))];
                let d = tmp[idx(x, (y + 1).min(h - 1))];
                out[idx(x, y)] = (0.25 * u + 0.5 * tmp[idx(x, y)] + 0.25 * d).clamp(0.0, 1.0);
            }
        }
        Raster {
            width: self.width,
            height: self.height,
            values: out,
        }
    }

    /// Binary PGM (`P5`, 8-bit, value × 255 rounded).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<(), RenderError> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_pgm(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Sets every pixel on the integer line between two pixels, clipped to
    /// the raster.
    pub fn draw_line(&mut self, from: (i64, i64), to: (i64, i64), value: f64) {
        for (x, y) in line_pixels(from, to) {
            if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
                self.set(x as u32, y as u32, value);
            }
        }
    }
}

fn check_dims(a: &Raster, b: &Raster) -> Result<(), RenderError> {
    if a.width != b.width || a.height != b.height {
        return Err(RenderError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    Ok(())
}

/// Integer line rasterization: walks the major axis and rounds the minor
/// coordinate half-up. The pixel set does not depend on the direction in
/// which the segment is given.
pub fn line_pixels(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    if dx == 0 && dy == 0 {
        return vec![a];
    }
    let x_major = dx.abs() >= dy.abs();
    // Walk the major axis in increasing order.
    let (p, q) = if (x_major && dx < 0) || (!x_major && dy < 0) {
        (b, a)
    } else {
        (a, b)
    };
    let (major0, minor0, dmaj, dmin) = if x_major {
        (p.0, p.1, q.0 - p.0, q.1 - p.1)
    } else {
        (p.1, p.0, q.1 - p.1, q.0 - p.0)
    };
    (0..=dmaj)
        .map(|s| {
            // minor = minor0 + floor((2 s dmin + dmaj) / (2 dmaj))
            let off = (2 * s * dmin + dmaj).div_euclid(2 * dmaj);
            let (maj, min) = (major0 + s, minor0 + off);
            if x_major {
                (maj, min)
            } else {
                (min, maj)
            }
        })
        .collect()
}

/// Clips the parametric segment `p + t d, t ∈ [0,1]` to the box
/// `[lo, hi]` (Liang–Barsky). Returns the surviving parameter interval.
fn clip_segment_2d(p: Vec2, q: Vec2, lo: Vec2, hi: Vec2) -> Option<(f64, f64)> {
    let d = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (pk, qk) in [
        (-d.x, p.x - lo.x),
        (d.x, hi.x - p.x),
        (-d.y, p.y - lo.y),
        (d.y, hi.y - p.y),
    ] {
        if pk == 0.0 {
            if qk < 0.0 {
                return None;
            }
        } else {
            let r = qk / pk;
            if pk < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Segment in the camera frame, clipped to `z ≥ NEAR_PLANE`.
fn clip_near(a: Vec3, b: Vec3) -> Option<(Vec3, Vec3)> {
    match (a.z >= NEAR_PLANE, b.z >= NEAR_PLANE) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (a_in, _) => {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let c = a + (b - a) * t;
            let c = Vec3::new(c.x, c.y, NEAR_PLANE);
            if a_in {
                Some((a, c))
            } else {
                Some((c, b))
            }
        }
    }
}

fn project_unchecked(k: &CameraIntrinsics, x: &Vec3) -> Vec2 {
    Vec2::new(
        k.focal_x * x.x / x.z + k.principal_x,
        k.focal_y * x.y / x.z + k.principal_y,
    )
}

/// Draws the object-frame segment `a`–`b` under `pose` as 1-valued pixels.
pub fn draw_segment(raster: &mut Raster, a: &Vec3, b: &Vec3, pose: &Pose, k: &CameraIntrinsics) {
    let Some((ca, cb)) = clip_near(pose.transform_point(a), pose.transform_point(b)) else {
        return;
    };
    let (pa, pb) = (project_unchecked(k, &ca), project_unchecked(k, &cb));
    let hi = Vec2::new(raster.width as f64, raster.height as f64);
    let Some((t0, t1)) = clip_segment_2d(pa, pb, Vec2::zeros(), hi) else {
        return;
    };
    let (s, e) = (pa + (pb - pa) * t0, pa + (pb - pa) * t1);
    let to_pixel = |p: Vec2| {
        (
            (p.x.floor() as i64).clamp(0, raster.width as i64 - 1),
            (p.y.floor() as i64).clamp(0, raster.height as i64 - 1),
        )
    };
    raster.draw_line(to_pixel(s), to_pixel(e), 1.0);
}

/// One drawable edge of a mesh with the data needed for back-face tests.
#[derive(Debug, Clone, PartialEq)]
struct SketchEdge {
    a: Vec3,
    b: Vec3,
    /// (unit normal, a point on the face) for each adjacent face.
    faces: Vec<(Vec3, Vec3)>,
}

/// The sharp and boundary edges of a mesh, precomputed for repeated
/// rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSketch {
    edges: Vec<SketchEdge>,
}

impl EdgeSketch {
    /// Collects edges whose fold angle exceeds `sharp_angle_tol`, plus
    /// boundary and non-manifold edges.
    pub fn new(mesh: &Mesh, sharp_angle_tol: f64) -> Self {
        let topo = EdgeTopology::build(mesh);
        let verts = &topo.mesh.vertices;
        let edges = topo
            .edges
            .iter()
            .filter(|e| e.faces.len() != 2 || e.is_sharp(sharp_angle_tol))
            .map(|e| SketchEdge {
                a: verts[e.a],
                b: verts[e.b],
                faces: e
                    .faces
                    .iter()
                    .map(|&f| (topo.face_normals[f], verts[topo.mesh.triangles[f][0]]))
                    .collect(),
            })
            .collect();
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges with at least one front-facing adjacent face, as object-frame
    /// segments.
    pub fn visible_segments(&self, pose: &Pose) -> Vec<(Vec3, Vec3)> {
        let r = pose.rotation();
        self.edges
            .iter()
            .filter(|e| {
                e.faces.iter().any(|(n, p)| {
                    let n_cam = r * n;
                    let p_cam = pose.transform_point(p);
                    n_cam.dot(&p_cam) < 0.0
                })
            })
            .map(|e| (e.a, e.b))
            .collect()
    }

    pub fn render(&self, pose: &Pose, k: &CameraIntrinsics, blur: bool) -> Raster {
        let mut raster = Raster::for_camera(k);
        for (a, b) in self.visible_segments(pose) {
            draw_segment(&mut raster, &a, &b, pose, k);
        }
        if blur {
            raster.blurred()
        } else {
            raster
        }
    }
}

/// Edge image of `mesh` under `pose`: sharp edges (fold angle above 0.35 rad)
/// and boundary edges with at least one front-facing neighbour face, drawn
/// as 1-valued lines. `blur` applies a 3×3 binomial kernel.
pub fn render_edges(mesh: &Mesh, pose: &Pose, k: &CameraIntrinsics, blur: bool) -> Raster {
    EdgeSketch::new(mesh, DEFAULT_SHARP_ANGLE_TOL).render(pose, k, blur)
}

/// Sutherland–Hodgman clip of a camera-frame polygon to `z ≥ NEAR_PLANE`.
fn clip_polygon_near(poly: &[Vec3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let (cur, next) = (poly[i], poly[(i + 1) % poly.len()]);
        let (cin, nin) = (cur.z >= NEAR_PLANE, next.z >= NEAR_PLANE);
        if cin {
            out.push(cur);
        }
        if cin != nin {
            let t = (NEAR_PLANE - cur.z) / (next.z - cur.z);
            let c = cur + (next - cur) * t;
            out.push(Vec3::new(c.x, c.y, NEAR_PLANE));
        }
    }
    out
}

/// Scanline fill of a convex polygon (pixel centers, half-open spans).
fn fill_convex(raster: &mut Raster, poly: &[Vec2]) {
    if poly.len() < 3 {
        return;
    }
    let ymin = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    if !(ymin.is_finite() && ymax.is_finite()) {
        return;
    }
    let h = raster.height as i64;
    let w = raster.width as i64;
    let j0 = ((ymin - 0.5).ceil() as i64).max(0);
    let j1 = ((ymax - 0.5).ceil() as i64 - 1).min(h - 1);
    for j in j0..=j1 {
        let yc = j as f64 + 0.5;
        let mut xl = f64::INFINITY;
        let mut xr = f64::NEG_INFINITY;
        for i in 0..poly.len() {
            let (mut p, mut q) = (poly[i], poly[(i + 1) % poly.len()]);
            if p.y == q.y {
                continue;
            }
            // Canonical orientation so shared edges give identical crossings.
            if (p.y, p.x) > (q.y, q.x) {
                std::mem::swap(&mut p, &mut q);
            }
            if yc < p.y || yc >= q.y {
                continue;
            }
            let x = p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y);
            xl = xl.min(x);
            xr = xr.max(x);
        }
        if xl >= xr {
            continue;
        }
        let i0 = ((xl - 0.5).ceil() as i64).max(0);
        let i1 = ((xr - 0.5).ceil() as i64 - 1).min(w - 1);
        for i in i0..=i1 {
            raster.set(i as u32, j as u32, 1.0);
        }
    }
}

/// Binary silhouette: a pixel is 1 iff its center is covered by a
/// projected triangle.
pub fn render_mask(mesh: &Mesh, pose: &Pose, k: &CameraIntrinsics) -> Raster {
    let mut raster = Raster::for_camera(k);
    let cam: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|v| pose.transform_point(v))
        .collect();
    for t in &mesh.triangles {
        let clipped = clip_polygon_near(&[cam[t[0]], cam[t[1]], cam[t[2]]]);
        if clipped.len() < 3 {
            continue;
        }
        let projected: Vec<Vec2> = clipped.iter().map(|p| project_unchecked(k, p)).collect();
        fill_convex(&mut raster, &projected);
    }
    raster
}

/// Zero-mean normalized cross-correlation over the full frame, in
/// `[-1, 1]`. Zero when either raster is constant.
pub fn normalized_cross_correlation(a: &Raster, b: &Raster) -> Result<f64, RenderError> {
    check_dims(a, b)?;
    let n = a.values.len() as f64;
    if n == 0.0 {
        return Ok(0.0);
    }
    let ma = a.values.iter().sum::<f64>() / n;
    let mb = b.values.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
