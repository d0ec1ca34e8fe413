use super::{Mesh, MeshError};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    /// Byte offset of the first data byte.
    data_start: usize,
    /// Number of header lines (for error line numbers in ASCII bodies).
    lines: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, MeshError> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();

    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| MeshError::parse(line_no + 1, "unterminated PLY header"))?;
        let raw = &bytes[pos..pos + end];
        pos += end + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| MeshError::parse(line_no, "header is not valid UTF-8"))?
            .trim();
        let tokens: Vec<&str> = line.split_whitespace().collect();

        if line_no == 1 {
            if line != "ply" {
                return Err(MeshError::parse(1, "missing 'ply' magic"));
            }
            continue;
        }
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match tokens.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some(other) => {
                        return Err(MeshError::parse(
                            line_no,
                            format!("unsupported PLY format '{other}'"),
                        ))
                    }
                    None => return Err(MeshError::parse(line_no, "missing format name")),
                });
            }
            Some("element") => {
                if tokens.len() != 3 {
                    return Err(MeshError::parse(line_no, "malformed element line"));
                }
                let count = tokens[2]
                    .parse()
                    .map_err(|_| MeshError::parse(line_no, "bad element count"))?;
                elements.push(Element {
                    name: tokens[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| MeshError::parse(line_no, "property before element"))?;
                let bad_type =
                    |t: &str| MeshError::parse(line_no, format!("unsupported property type '{t}'"));
                let prop = if tokens.get(1) == Some(&"list") {
                    if tokens.len() != 5 {
                        return Err(MeshError::parse(line_no, "malformed list property"));
                    }
                    let count = Scalar::from_name(tokens[2]).ok_or_else(|| bad_type(tokens[2]))?;
                    let item = Scalar::from_name(tokens[3]).ok_or_else(|| bad_type(tokens[3]))?;
                    if matches!(count, Scalar::F32 | Scalar::F64) {
                        return Err(bad_type(tokens[2]));
                    }
                    Property::List {
                        name: tokens[4].to_string(),
                        count,
                        item,
                    }
                } else {
                    if tokens.len() != 3 {
                        return Err(MeshError::parse(line_no, "malformed property"));
                    }
                    Property::Scalar {
                        name: tokens[2].to_string(),
                        ty: Scalar::from_name(tokens[1]).ok_or_else(|| bad_type(tokens[1]))?,
                    }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(MeshError::parse(
                    line_no,
                    format!("unexpected header keyword '{other}'"),
                ))
            }
        }
    }

    Ok(Header {
        format: format.ok_or_else(|| MeshError::parse(line_no, "missing format line"))?,
        elements,
        data_start: pos,
        lines: line_no,
    })
}

/// One decoded element record: scalar values and list values, in property order.
enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

trait RecordSource {
    fn record(&mut self, element: &Element) -> Result<Vec<Value>, MeshError>;
}

struct AsciiSource<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_offset: usize,
}

impl RecordSource for AsciiSource<'_> {
    fn record(&mut self, element: &Element) -> Result<Vec<Value>, MeshError> {
        let (i, line) = loop {
            match self.lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some(x) => break x,
                None => return Err(MeshError::parse(0, "unexpected end of PLY data")),
            }
        };
        let line_no = self.line_offset + i + 1;
        let mut toks = line.split_whitespace();
        let mut next = || -> Result<f64, MeshError> {
            toks.next()
                .ok_or_else(|| MeshError::parse(line_no, "too few values"))?
                .parse::<f64>()
                .map_err(|_| MeshError::parse(line_no, "bad numeric value"))
        };
        let mut out = Vec::with_capacity(element.properties.len());
        for p in &element.properties {
            match p {
                Property::Scalar { .. } => out.push(Value::Scalar(next()?)),
                Property::List { .. } => {
                    let n = next()?;
                    if n < 0.0 || n.fract() != 0.0 {
                        return Err(MeshError::parse(line_no, "bad list length"));
                    }
                    let items = (0..n as usize).map(|_| next()).collect::<Result<_, _>>()?;
                    out.push(Value::List(items));
                }
            }
        }
        Ok(out)
    }
}

struct BinarySource<'a> {
    data: &'a [u8],
    pos: usize,
}

impl BinarySource<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        let n = ty.size();
        if self.pos + n > self.data.len() {
            return Err(MeshError::parse(0, "unexpected end of binary PLY data"));
        }
        let v = ty.read_le(&self.data[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }
}

impl RecordSource for BinarySource<'_> {
    fn record(&mut self, element: &Element) -> Result<Vec<Value>, MeshError> {
        let mut out = Vec::with_capacity(element.properties.len());
        for p in &element.properties {
            match p {
                Property::Scalar { ty, .. } => out.push(Value::Scalar(self.read(*ty)?)),
                Property::List { count, item, .. } => {
                    let n = self.read(*count)?;
                    if n < 0.0 {
                        return Err(MeshError::parse(0, "negative list length"));
                    }
                    let items = (0..n as usize)
                        .map(|_| self.read(*item))
                        .collect::<Result<_, _>>()?;
                    out.push(Value::List(items));
                }
            }
        }
        Ok(out)
    }
}

/// Parses an ASCII or binary little-endian PLY file with `vertex` (x, y, z)
/// and `face` (`vertex_indices` or `vertex_index` list) elements. Polygons are
/// fan-triangulated; other elements and properties are skipped.
pub fn parse_ply(bytes: &[u8]) -> Result<Mesh, MeshError> {
    let header = parse_header(bytes)?;
    let data = &bytes[header.data_start..];
    let mut source: Box<dyn RecordSource> = match header.format {
        Format::Ascii => Box::new(AsciiSource {
            lines: std::str::from_utf8(data)
                .map_err(|_| MeshError::parse(header.lines + 1, "ASCII body is not valid UTF-8"))?
                .lines()
                .enumerate(),
            line_offset: header.lines,
        }),
        Format::BinaryLittleEndian => Box::new(BinarySource { data, pos: 0 }),
    };

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut saw_vertex = false;

    for element in &header.elements {
        match element.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                let find = |axis: &str| {
                    element
                        .properties
                        .iter()
                        .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
                        .ok_or_else(|| {
                            MeshError::parse(0, format!("vertex element lacks property '{axis}'"))
                        })
                };
                let (ix, iy, iz) = (find("x")?, find("y")?, find("z")?);
                for _ in 0..element.count {
                    let rec = source.record(element)?;
                    let get = |i: usize| match rec[i] {
                        Value::Scalar(v) => v,
                        Value::List(_) => f64::NAN,
                    };
                    let v = Vec3::new(get(ix), get(iy), get(iz));
                    if !v.iter().all(|c| c.is_finite()) {
                        return Err(MeshError::parse(0, "non-finite vertex coordinate"));
                    }
                    vertices.push(v);
                }
            }
            "face" => {
                let idx = element
                    .properties
                    .iter()
                    .position(|p| {
                        matches!(p, Property::List { name, .. }
                            if name == "vertex_indices" || name == "vertex_index")
                    })
                    .ok_or_else(|| MeshError::parse(0, "face element lacks a vertex index list"))?;
                for _ in 0..element.count {
                    let rec = source.record(element)?;
                    let Value::List(items) = &rec[idx] else {
                        unreachable!("index list property decoded as list")
                    };
                    if items.len() < 3 {
                        return Err(MeshError::parse(0, "face needs at least 3 vertices"));
                    }
                    let face: Vec<usize> = items
                        .iter()
                        .map(|&f| {
                            if f < 0.0 || f.fract() != 0.0 || f as usize >= vertices.len() {
                                Err(MeshError::IndexOutOfRange {
                                    line: 0,
                                    index: f as i64,
                                    vertex_count: vertices.len(),
                                })
                            } else {
                                Ok(f as usize)
                            }
                        })
                        .collect::<Result<_, _>>()?;
                    for k in 1..face.len() - 1 {
                        let tri = [face[0], face[k], face[k + 1]];
                        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                            return Err(MeshError::DegenerateTriangle(tri));
                        }
                        triangles.push(tri);
                    }
                }
            }
            _ => {
                for _ in 0..element.count {
                    source.record(element)?;
                }
            }
        }
    }
    if !saw_vertex {
        return Err(MeshError::parse(0, "no vertex element"));
    }

    Ok(Mesh {
        vertices,
        triangles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "ply
format ascii 1.0
comment tetrahedron
element vertex 4
property float x
property float y
property float z
element face 4
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
0 0 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
";

    #[test]
    fn ascii_tetrahedron() {
        let m = parse_ply(TETRA.as_bytes()).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 4);
        assert_eq!(m.triangles[3], [1, 2, 3]);
    }

    #[test]
    fn big_endian_is_unsupported() {
        let src = TETRA.replace("ascii", "binary_big_endian");
        assert!(matches!(
            parse_ply(src.as_bytes()),
            Err(MeshError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_property_type() {
        let src = TETRA.replace("property float z", "property quad z");
        assert!(matches!(
            parse_ply(src.as_bytes()),
            Err(MeshError::Parse { .. })
        ));
    }

    #[test]
    fn out_of_range_face() {
        let src = TETRA.replace("3 1 2 3", "3 1 2 4");
        assert!(matches!(
            parse_ply(src.as_bytes()),
            Err(MeshError::IndexOutOfRange { index: 4, .. })
        ));
    }

    #[test]
    fn skips_extra_elements_and_properties() {
        let src = "ply
format ascii 1.0
element vertex 3
property double x
property double y
property double z
property uchar red
element edge 1
property int vertex1
property int vertex2
element face 1
property uchar flags
property list uchar uint vertex_index
end_header
0 0 0 255
1 0 0 255
0 1 0 255
0 1
7 3 0 1 2
";
        let m = parse_ply(src.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn truncated_binary_body() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        assert!(parse_ply(&bytes).is_err());
    }
}
