//! PLY (ASCII and binary little-endian), XYZ and OBJ readers and writers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Loads a cloud by extension: `.ply`, `.xyz`/`.txt`, or `.obj` (vertices only).
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match ext(path).as_str() {
        "ply" => load_ply(path),
        "obj" => Ok(PointCloud::new(load_obj(path)?.vertices().to_vec())?),
        _ => load_xyz(path),
    }
}

pub(crate) fn ext(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

#[derive(Debug, Clone, Copy)]
enum ScalarKind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, kind: ScalarKind },
    List { count: ScalarKind, item: ScalarKind },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Reads the vertex element of a PLY file: `x,y,z` and, if all present,
/// `nx,ny,nz`. Other properties and elements are skipped.
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let bytes = read(path)?;
    let perr = |line: usize, msg: &str| Error::parse(&name, line, msg);

    let mut pos = 0;
    let mut line_no = 0;
    let next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| *pos + i);
        let s = String::from_utf8_lossy(&bytes[*pos..end]).trim_end_matches('\r').to_string();
        *pos = end + 1;
        Some(s)
    };

    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line_no += 1;
        let line = next_line(&mut pos).ok_or_else(|| perr(line_no, "unexpected end of header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if tok != ["ply"] {
                return Err(perr(1, "missing `ply` magic"));
            }
            continue;
        }
        match tok.first().copied() {
            Some("format") => {
                format = Some(match tok.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => return Err(perr(line_no, &format!("unsupported format `{other}`"))),
                    None => return Err(perr(line_no, "format line without a format")),
                })
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let (Some(n), Some(c)) = (tok.get(1), tok.get(2)) else {
                    return Err(perr(line_no, "malformed element line"));
                };
                let count = c.parse().map_err(|_| perr(line_no, "bad element count"))?;
                elements.push(Element { name: n.to_string(), count, props: vec![] });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| perr(line_no, "property before element"))?;
                let prop = if tok.get(1) == Some(&"list") {
                    match (tok.get(2).and_then(|s| ScalarKind::parse(s)), tok.get(3).and_then(|s| ScalarKind::parse(s))) {
                        (Some(count), Some(item)) if tok.len() == 5 => Property::List { count, item },
                        _ => return Err(perr(line_no, "malformed list property")),
                    }
                } else {
                    match (tok.get(1).and_then(|s| ScalarKind::parse(s)), tok.get(2)) {
                        (Some(kind), Some(n)) if tok.len() == 3 => Property::Scalar { name: n.to_string(), kind },
                        _ => return Err(perr(line_no, "malformed property")),
                    }
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(perr(line_no, &format!("unknown header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| perr(line_no, "header has no format line"))?;
    let header_lines = line_no;

    let mut points = Vec::new();
    let mut normals = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let col = |n: &str| {
            el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
        };
        let xyz = [col("x"), col("y"), col("z")];
        let nrm = [col("nx"), col("ny"), col("nz")];
        if is_vertex && xyz.iter().any(Option::is_none) {
            return Err(perr(header_lines, "vertex element lacks x, y or z"));
        }
        let has_n = nrm.iter().all(Option::is_some);
        let mut vals = vec![0.0; el.props.len()];
        for _ in 0..el.count {
            match format {
                PlyFormat::Ascii => {
                    line_no += 1;
                    let line = next_line(&mut pos).ok_or_else(|| perr(line_no, "unexpected end of data"))?;
                    let mut it = line.split_whitespace();
                    let mut num = || -> Result<f64> {
                        it.next()
                            .ok_or_else(|| perr(line_no, "too few values"))?
                            .parse::<f64>()
                            .map_err(|_| perr(line_no, "not a number"))
                    };
                    for (k, p) in el.props.iter().enumerate() {
                        match p {
                            Property::Scalar { .. } => vals[k] = num()?,
                            Property::List { .. } => {
                                let n = num()? as usize;
                                for _ in 0..n {
                                    num()?;
                                }
                            }
                        }
                    }
                }
                PlyFormat::BinaryLittleEndian => {
                    let mut take = |n: usize| -> Result<&[u8]> {
                        let s = bytes.get(pos..pos + n).ok_or_else(|| perr(header_lines, "binary data truncated"))?;
                        pos += n;
                        Ok(s)
                    };
                    for (k, p) in el.props.iter().enumerate() {
                        match p {
                            Property::Scalar { kind, .. } => vals[k] = kind.read_le(take(kind.size())?),
                            Property::List { count, item } => {
                                let n = count.read_le(take(count.size())?) as usize;
                                take(n * item.size())?;
                            }
                        }
                    }
                }
            }
            if is_vertex {
                let p = Point3::new(vals[xyz[0].unwrap()], vals[xyz[1].unwrap()], vals[xyz[2].unwrap()]);
                if !p.coords.iter().all(|v| v.is_finite()) {
                    return Err(perr(line_no, "non-finite coordinate"));
                }
                points.push(p);
                if has_n {
                    let n = Vector3::new(vals[nrm[0].unwrap()], vals[nrm[1].unwrap()], vals[nrm[2].unwrap()]);
                    normals.push(n.try_normalize(1e-12).unwrap_or_else(Vector3::z));
                }
            }
        }
        if is_vertex {
            break;
        }
    }
    let normals = (!normals.is_empty()).then_some(normals);
    Ok(PointCloud::from_parts_unchecked(points, normals))
}

/// Writes `x,y,z[,nx,ny,nz]` as 32-bit floats.
pub fn save_ply(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(w, "ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len()).map_err(io)?;
    w.write_all(b"property float x\nproperty float y\nproperty float z\n").map_err(io)?;
    if cloud.has_normals() {
        w.write_all(b"property float nx\nproperty float ny\nproperty float nz\n").map_err(io)?;
    }
    w.write_all(b"end_header\n").map_err(io)?;
    for (i, p) in cloud.points().iter().enumerate() {
        let mut row = vec![p.x as f32, p.y as f32, p.z as f32];
        if let Some(ns) = cloud.normals() {
            row.extend([ns[i].x as f32, ns[i].y as f32, ns[i].z as f32]);
        }
        match format {
            PlyFormat::Ascii => {
                let s: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", s.join(" ")).map_err(io)?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in row {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

/// Whitespace-separated `x y z` (optionally `x y z nx ny nz`) per line.
/// Blank lines and `#` comments are skipped.
pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = String::from_utf8(read(path)?).map_err(|_| Error::parse(&name, 0, "not UTF-8"))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(&name, i + 1, "not a number"))?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(Error::parse(&name, i + 1, format!("expected 3 or 6 values, got {}", vals.len())));
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(&name, i + 1, "non-finite value"));
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 6 {
            normals.push(Vector3::new(vals[3], vals[4], vals[5]).try_normalize(1e-12).unwrap_or_else(Vector3::z));
        }
    }
    if !normals.is_empty() && normals.len() != points.len() {
        return Err(Error::parse(&name, 0, "mixed rows with and without normals"));
    }
    let normals = (!normals.is_empty()).then_some(normals);
    Ok(PointCloud::from_parts_unchecked(points, normals))
}

pub fn save_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `v` and `f` records. Polygons are fan-triangulated; texture and
/// normal indices, groups and materials are ignored.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = String::from_utf8(read(path)?).map_err(|_| Error::parse(&name, 0, "not UTF-8"))?;
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let v: Vec<f64> = tok
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(&name, ln, "bad vertex coordinate"))?;
                if v.len() != 3 {
                    return Err(Error::parse(&name, ln, "vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(v[0], v[1], v[2]));
            }
            Some("f") => {
                let idx: Vec<i64> = tok
                    .map(|t| t.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(&name, ln, "bad face index"))?;
                if idx.len() < 3 {
                    return Err(Error::parse(&name, ln, "face needs at least 3 vertices"));
                }
                faces.push((ln, idx));
            }
            _ => {}
        }
    }
    let mut triangles = Vec::new();
    for (ln, idx) in faces {
        // Relative (negative) indices refer to the vertices read so far in
        // file order; here they resolve against the full list, which matches
        // files that declare vertices before faces.
        let resolved: Vec<u32> = idx
            .iter()
            .map(|&k| {
                let n = vertices.len() as i64;
                let abs = match k {
                    0 => return Err(Error::parse(&name, ln, "face index 0 (OBJ indices are 1-based)")),
                    k if k > 0 => k - 1,
                    k => n + k,
                };
                if abs < 0 || abs >= n {
                    return Err(Error::parse(&name, ln, format!("face index {k} out of range ({n} vertices)")));
                }
                Ok(abs as u32)
            })
            .collect::<Result<_>>()?;
        for j in 1..resolved.len() - 1 {
            triangles.push([resolved[0], resolved[j], resolved[j + 1]]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn save_obj(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z).map_err(io)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(io)?;
    }
    w.flush().map_err(io)
}
