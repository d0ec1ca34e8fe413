use super::{Mesh, MeshError};
use crate::geometry::Vec3;

/// Parses a Wavefront OBJ file.
///
/// Only `v` and `f` statements contribute; polygons are fan-triangulated
/// around their first vertex. Face references may be 1-based or negative
/// (relative to the vertices read so far) and may carry `/vt/vn` suffixes,
/// which are ignored.
pub fn parse_obj(bytes: &[u8]) -> Result<Mesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        // Report the line containing the first invalid byte.
        let line = bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        MeshError::parse(line, "input is not valid UTF-8")
    })?;

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "v" => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| {
                    MeshError::parse(line_no, format!("bad vertex coordinate: {e}"))
                })?;
                // x y z [w] or x y z r g b
                if coords.len() < 3 {
                    return Err(MeshError::parse(line_no, "vertex needs 3 coordinates"));
                }
                let v = Vec3::new(coords[0], coords[1], coords[2]);
                if !v.iter().all(|c| c.is_finite()) {
                    return Err(MeshError::parse(line_no, "non-finite vertex coordinate"));
                }
                vertices.push(v);
            }
            "f" => {
                let mut face = Vec::new();
                for tok in tokens {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| {
                        MeshError::parse(line_no, format!("bad face index '{tok}'"))
                    })?;
                    let n = vertices.len() as i64;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        n + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= n {
                        return Err(MeshError::IndexOutOfRange {
                            line: line_no,
                            index: idx,
                            vertex_count: vertices.len(),
                        });
                    }
                    face.push(resolved as usize);
                }
                if face.len() < 3 {
                    return Err(MeshError::parse(line_no, "face needs at least 3 vertices"));
                }
                for k in 1..face.len() - 1 {
                    let tri = [face[0], face[k], face[k + 1]];
                    if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                        return Err(MeshError::parse(
                            line_no,
                            "degenerate face (repeated vertex)",
                        ));
                    }
                    triangles.push(tri);
                }
            }
            _ => {}
        }
    }

    Ok(Mesh {
        vertices,
        triangles,
    })
}
