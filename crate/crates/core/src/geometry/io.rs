//! PLY and OBJ readers/writers.
//!
//! PLY: `format ascii 1.0` or `format binary_little_endian 1.0`, vertex
//! properties x, y, z as float32, faces as a uchar count followed by int32
//! indices. OBJ: `v x y z` and `f i j k` (1-based) lines; other directives
//! are ignored with a warning. Parse errors carry the byte offset of the
//! offending input.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use super::{GeometryError, Point3, PointCloud, TriMesh};

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error("malformed header at byte {offset}: {detail}")]
    MalformedHeader { offset: usize, detail: String },
    #[error("malformed payload at byte {offset}: {detail}")]
    MalformedPayload { offset: usize, detail: String },
    #[error("truncated payload at byte {offset}: {detail}")]
    Truncated { offset: usize, detail: String },
    #[error("index out of range at byte {offset}: {index} not in 0..{limit}")]
    IndexOutOfRange { offset: usize, index: i64, limit: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// On-disk encodings for meshes. Clouds use the PLY variants only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    PlyAscii,
    PlyBinary,
    Obj,
}

/// PLY payload encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

struct PlyHeader {
    encoding: PlyEncoding,
    vertex_count: usize,
    face_count: usize,
    /// Byte offset of the first payload byte.
    payload_start: usize,
}

/// One header line with the byte offset where it starts.
fn header_lines(bytes: &[u8]) -> Result<Vec<(usize, String)>, MeshIoError> {
    let mut lines = Vec::new();
    let mut start = 0usize;
    let mut pos = 0usize;
    loop {
        if pos >= bytes.len() {
            return Err(MeshIoError::MalformedHeader {
                offset: start,
                detail: "end of file before end_header".into(),
            });
        }
        if bytes[pos] == b'\n' {
            let raw = &bytes[start..pos];
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let line = String::from_utf8_lossy(raw).into_owned();
            let done = line.trim() == "end_header";
            lines.push((start, line));
            start = pos + 1;
            if done {
                return Ok(lines);
            }
        }
        pos += 1;
    }
}

fn parse_ply_header(bytes: &[u8]) -> Result<PlyHeader, MeshIoError> {
    let lines = header_lines(bytes)?;
    let bad = |offset: usize, detail: &str| MeshIoError::MalformedHeader {
        offset,
        detail: detail.to_string(),
    };

    let mut it = lines.iter();
    let (off, first) = it.next().ok_or_else(|| bad(0, "empty file"))?;
    if first.trim() != "ply" {
        return Err(bad(*off, "missing ply magic"));
    }

    let mut encoding = None;
    let mut vertex_count = None;
    let mut face_count = 0usize;
    // Which element's property list we are currently inside.
    enum Section {
        None,
        Vertex(Vec<String>),
        Face(bool),
    }
    let mut section = Section::None;

    let close_section = |section: &mut Section, off: usize| -> Result<(), MeshIoError> {
        match std::mem::replace(section, Section::None) {
            Section::None => Ok(()),
            Section::Vertex(props) => {
                if props == ["x", "y", "z"] {
                    Ok(())
                } else {
                    Err(bad(off, &format!("vertex properties must be x, y, z; got {props:?}")))
                }
            }
            Section::Face(has_list) => {
                if has_list {
                    Ok(())
                } else {
                    Err(bad(off, "face element lacks a vertex_indices list property"))
                }
            }
        }
    };

    for (off, line) in it {
        let line = line.trim();
        if line.is_empty() || line.starts_with("comment") {
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                let enc = words.next().unwrap_or("");
                let ver = words.next().unwrap_or("");
                if ver != "1.0" {
                    return Err(bad(*off, &format!("unsupported version {ver:?}")));
                }
                encoding = Some(match enc {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(bad(*off, &format!("unsupported format {other:?}"))),
                });
            }
            Some("element") => {
                close_section(&mut section, *off)?;
                let name = words.next().unwrap_or("");
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| bad(*off, "element count missing or not an integer"))?;
                match name {
                    "vertex" => {
                        vertex_count = Some(count);
                        section = Section::Vertex(Vec::new());
                    }
                    "face" => {
                        face_count = count;
                        section = Section::Face(false);
                    }
                    other => return Err(bad(*off, &format!("unsupported element {other:?}"))),
                }
            }
            Some("property") => match &mut section {
                Section::Vertex(props) => {
                    let ty = words.next().unwrap_or("");
                    let name = words.next().unwrap_or("");
                    if ty != "float" && ty != "float32" {
                        return Err(bad(*off, &format!("vertex property {name:?} must be float32")));
                    }
                    props.push(name.to_string());
                }
                Section::Face(has_list) => {
                    let spec: Vec<&str> = words.collect();
                    match spec.as_slice() {
                        ["list", count_ty, idx_ty, "vertex_indices" | "vertex_index"]
                            if matches!(*count_ty, "uchar" | "uint8")
                                && matches!(*idx_ty, "int" | "int32") =>
                        {
                            *has_list = true;
                        }
                        _ => return Err(bad(*off, "face property must be: list uchar int vertex_indices")),
                    }
                }
                Section::None => return Err(bad(*off, "property outside any element")),
            },
            Some("end_header") => {
                close_section(&mut section, *off)?;
                let payload_start = off + line.len() + 1 + count_line_ending_extra(bytes, *off, line.len());
                let encoding = encoding.ok_or_else(|| bad(*off, "missing format line"))?;
                let vertex_count = vertex_count.ok_or_else(|| bad(*off, "missing vertex element"))?;
                return Ok(PlyHeader { encoding, vertex_count, face_count, payload_start });
            }
            Some(other) => return Err(bad(*off, &format!("unknown header keyword {other:?}"))),
            None => {}
        }
    }
    unreachable!("header_lines terminates at end_header");
}

/// Extra bytes consumed by a \r before the newline, if present.
fn count_line_ending_extra(bytes: &[u8], line_start: usize, line_len: usize) -> usize {
    match bytes.get(line_start + line_len) {
        Some(b'\r') => 1,
        _ => 0,
    }
}

struct AsciiCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> AsciiCursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &'a str), MeshIoError> {
        self.skip_ws();
        if self.pos >= self.bytes.len() {
            return Err(MeshIoError::Truncated {
                offset: self.pos,
                detail: format!("expected {what}"),
            });
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| {
            MeshIoError::MalformedPayload { offset: start, detail: format!("non-ASCII {what}") }
        })?;
        Ok((start, s))
    }

    fn f32_value(&mut self, what: &str) -> Result<f32, MeshIoError> {
        let (off, s) = self.token(what)?;
        s.parse().map_err(|_| MeshIoError::MalformedPayload {
            offset: off,
            detail: format!("expected {what}, got {s:?}"),
        })
    }

    fn int_value(&mut self, what: &str) -> Result<(usize, i64), MeshIoError> {
        let (off, s) = self.token(what)?;
        let v = s.parse().map_err(|_| MeshIoError::MalformedPayload {
            offset: off,
            detail: format!("expected {what}, got {s:?}"),
        })?;
        Ok((off, v))
    }
}

struct BinaryCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BinaryCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MeshIoError> {
        if self.pos + n > self.bytes.len() {
            return Err(MeshIoError::Truncated {
                offset: self.pos,
                detail: format!("expected {n} bytes for {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f32_le(&mut self, what: &str) -> Result<f32, MeshIoError> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i32_le(&mut self, what: &str) -> Result<(usize, i32), MeshIoError> {
        let off = self.pos;
        let b = self.take(4, what)?;
        Ok((off, i32::from_le_bytes([b[0], b[1], b[2], b[3]])))
    }

    fn u8_value(&mut self, what: &str) -> Result<(usize, u8), MeshIoError> {
        let off = self.pos;
        let b = self.take(1, what)?;
        Ok((off, b[0]))
    }
}

fn parse_ply(bytes: &[u8]) -> Result<(Vec<Point3>, Vec<[usize; 3]>), MeshIoError> {
    let header = parse_ply_header(bytes)?;
    let mut vertices = Vec::with_capacity(header.vertex_count);
    let mut faces = Vec::with_capacity(header.face_count);
    match header.encoding {
        PlyEncoding::Ascii => {
            let mut cur = AsciiCursor { bytes, pos: header.payload_start };
            for _ in 0..header.vertex_count {
                let x = cur.f32_value("vertex x")?;
                let y = cur.f32_value("vertex y")?;
                let z = cur.f32_value("vertex z")?;
                vertices.push(Point3::new(x as f64, y as f64, z as f64));
            }
            for _ in 0..header.face_count {
                let (off, count) = cur.int_value("face vertex count")?;
                if count != 3 {
                    return Err(MeshIoError::MalformedPayload {
                        offset: off,
                        detail: format!("only triangular faces supported, got {count} vertices"),
                    });
                }
                let mut f = [0usize; 3];
                for slot in &mut f {
                    let (off, v) = cur.int_value("face index")?;
                    if v < 0 || v as usize >= header.vertex_count {
                        return Err(MeshIoError::IndexOutOfRange {
                            offset: off,
                            index: v,
                            limit: header.vertex_count,
                        });
                    }
                    *slot = v as usize;
                }
                faces.push(f);
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut cur = BinaryCursor { bytes, pos: header.payload_start };
            for _ in 0..header.vertex_count {
                let x = cur.f32_le("vertex x")?;
                let y = cur.f32_le("vertex y")?;
                let z = cur.f32_le("vertex z")?;
                vertices.push(Point3::new(x as f64, y as f64, z as f64));
            }
            for _ in 0..header.face_count {
                let (off, count) = cur.u8_value("face vertex count")?;
                if count != 3 {
                    return Err(MeshIoError::MalformedPayload {
                        offset: off,
                        detail: format!("only triangular faces supported, got {count} vertices"),
                    });
                }
                let mut f = [0usize; 3];
                for slot in &mut f {
                    let (off, v) = cur.i32_le("face index")?;
                    if v < 0 || v as usize >= header.vertex_count {
                        return Err(MeshIoError::IndexOutOfRange {
                            offset: off,
                            index: v as i64,
                            limit: header.vertex_count,
                        });
                    }
                    *slot = v as usize;
                }
                faces.push(f);
            }
        }
    }
    Ok((vertices, faces))
}

fn write_ply(
    vertices: &[Point3],
    faces: &[[usize; 3]],
    encoding: PlyEncoding,
) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(format!("format {fmt} 1.0\n").as_bytes());
    out.extend_from_slice(format!("element vertex {}\n", vertices.len()).as_bytes());
    out.extend_from_slice(b"property float x\nproperty float y\nproperty float z\n");
    if !faces.is_empty() {
        out.extend_from_slice(format!("element face {}\n", faces.len()).as_bytes());
        out.extend_from_slice(b"property list uchar int vertex_indices\n");
    }
    out.extend_from_slice(b"end_header\n");
    match encoding {
        PlyEncoding::Ascii => {
            for v in vertices {
                out.extend_from_slice(
                    format!("{} {} {}\n", v.x as f32, v.y as f32, v.z as f32).as_bytes(),
                );
            }
            for f in faces {
                out.extend_from_slice(format!("3 {} {} {}\n", f[0], f[1], f[2]).as_bytes());
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for v in vertices {
                out.extend_from_slice(&(v.x as f32).to_le_bytes());
                out.extend_from_slice(&(v.y as f32).to_le_bytes());
                out.extend_from_slice(&(v.z as f32).to_le_bytes());
            }
            for f in faces {
                out.push(3u8);
                for &i in f {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

fn parse_obj(bytes: &[u8]) -> Result<(Vec<Point3>, Vec<[usize; 3]>), MeshIoError> {
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    let mut warned: BTreeSet<String> = BTreeSet::new();
    let mut offset = 0usize;
    for raw in bytes.split(|&b| b == b'\n') {
        let line_start = offset;
        offset += raw.len() + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| MeshIoError::MalformedPayload {
            offset: line_start,
            detail: "non-UTF-8 line".into(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut words = trimmed.split_whitespace();
        match words.next() {
            Some("v") => {
                let mut coords = [0f64; 3];
                for c in &mut coords {
                    let tok = words.next().ok_or_else(|| MeshIoError::Truncated {
                        offset: line_start,
                        detail: "vertex line needs 3 coordinates".into(),
                    })?;
                    *c = tok.parse::<f32>().map_err(|_| MeshIoError::MalformedPayload {
                        offset: line_start,
                        detail: format!("bad vertex coordinate {tok:?}"),
                    })? as f64;
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = [0i64; 3];
                for slot in &mut idx {
                    let tok = words.next().ok_or_else(|| MeshIoError::Truncated {
                        offset: line_start,
                        detail: "face line needs 3 indices".into(),
                    })?;
                    // Accept v/vt/vn forms by taking the leading vertex index.
                    let lead = tok.split('/').next().unwrap_or("");
                    *slot = lead.parse().map_err(|_| MeshIoError::MalformedPayload {
                        offset: line_start,
                        detail: format!("bad face index {tok:?}"),
                    })?;
                }
                if words.next().is_some() {
                    return Err(MeshIoError::MalformedPayload {
                        offset: line_start,
                        detail: "only triangular faces supported".into(),
                    });
                }
                faces.push((line_start, idx));
            }
            Some(other) => {
                if warned.insert(other.to_string()) {
                    log::warn!("obj: ignoring unsupported directive {other:?}");
                }
            }
            None => {}
        }
    }
    let mut out_faces = Vec::with_capacity(faces.len());
    for (line_start, idx) in faces {
        let mut f = [0usize; 3];
        for (slot, &v) in f.iter_mut().zip(idx.iter()) {
            if v < 1 || v as usize > vertices.len() {
                return Err(MeshIoError::IndexOutOfRange {
                    offset: line_start,
                    index: v,
                    limit: vertices.len(),
                });
            }
            *slot = (v - 1) as usize;
        }
        out_faces.push(f);
    }
    Ok((vertices, out_faces))
}

fn write_obj(vertices: &[Point3], faces: &[[usize; 3]]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in vertices {
        out.extend_from_slice(format!("v {} {} {}\n", v.x as f32, v.y as f32, v.z as f32).as_bytes());
    }
    for f in faces {
        out.extend_from_slice(format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1).as_bytes());
    }
    out
}

fn detect_format(path: &Path) -> Result<MeshFormat, MeshIoError> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "ply" => Ok(MeshFormat::PlyAscii),
        Some(ext) if ext == "obj" => Ok(MeshFormat::Obj),
        other => Err(MeshIoError::MalformedHeader {
            offset: 0,
            detail: format!("unsupported file extension {other:?} (expected .ply or .obj)"),
        }),
    }
}

/// Loads a point cloud from a PLY file (either encoding). Face data, if any,
/// is ignored.
pub fn load_cloud(path: &Path) -> Result<PointCloud, MeshIoError> {
    let bytes = std::fs::read(path)?;
    let (vertices, _) = parse_ply(&bytes)?;
    Ok(PointCloud::new(vertices))
}

/// Saves a point cloud as PLY with the given encoding.
pub fn save_cloud(path: &Path, cloud: &PointCloud, encoding: PlyEncoding) -> Result<(), MeshIoError> {
    let bytes = write_ply(cloud.points(), &[], encoding);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Loads a triangle mesh; the format is detected from the file extension and,
/// for PLY, the header's format line.
pub fn load_mesh(path: &Path) -> Result<TriMesh, MeshIoError> {
    let bytes = std::fs::read(path)?;
    let (vertices, faces) = match detect_format(path)? {
        MeshFormat::Obj => parse_obj(&bytes)?,
        _ => parse_ply(&bytes)?,
    };
    Ok(TriMesh::new(vertices, faces)?)
}

/// Saves a triangle mesh in the requested format.
pub fn save_mesh(path: &Path, mesh: &TriMesh, format: MeshFormat) -> Result<(), MeshIoError> {
    let bytes = match format {
        MeshFormat::PlyAscii => write_ply(mesh.vertices(), mesh.faces(), PlyEncoding::Ascii),
        MeshFormat::PlyBinary => {
            write_ply(mesh.vertices(), mesh.faces(), PlyEncoding::BinaryLittleEndian)
        }
        MeshFormat::Obj => write_obj(mesh.vertices(), mesh.faces()),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_mesh() -> TriMesh {
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(10.5, 0.25, -1.0),
                Point3::new(0.0, 7.75, 3.5),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn mesh_round_trip_preserves_connectivity() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = tri_mesh();
        for format in [MeshFormat::PlyAscii, MeshFormat::PlyBinary, MeshFormat::Obj] {
            let ext = if format == MeshFormat::Obj { "obj" } else { "ply" };
            let path = dir.path().join(format!("m.{ext}"));
            save_mesh(&path, &mesh, format).unwrap();
            let loaded = load_mesh(&path).unwrap();
            assert_eq!(loaded.faces(), mesh.faces());
            assert_eq!(loaded.edges(), mesh.edges());
            for (a, b) in loaded.vertices().iter().zip(mesh.vertices()) {
                assert_eq!(a.x as f32, b.x as f32);
                assert_eq!(a.y as f32, b.y as f32);
                assert_eq!(a.z as f32, b.z as f32);
            }
        }
    }

    #[test]
    fn ascii_and_binary_ply_agree() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![
            Point3::new(1.25, -2.5, 3.0),
            Point3::new(0.1, 0.2, 0.3),
            Point3::new(-7.0, 8.0, 9.5),
        ]);
        let pa = dir.path().join("a.ply");
        let pb = dir.path().join("b.ply");
        save_cloud(&pa, &cloud, PlyEncoding::Ascii).unwrap();
        save_cloud(&pb, &cloud, PlyEncoding::BinaryLittleEndian).unwrap();
        assert_eq!(load_cloud(&pa).unwrap(), load_cloud(&pb).unwrap());
    }

    #[test]
    fn obj_faces_are_one_based() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let mut body = String::new();
        for i in 0..9 {
            body.push_str(&format!("v {} 0 0\n", i));
        }
        body.push_str("f 1 2 3\n");
        std::fs::write(&path, body).unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn obj_ignores_other_directives() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        std::fs::write(
            &path,
            "# comment\nmtllib x.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\ns off\nf 1 2 3\n",
        )
        .unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.faces().len(), 1);
    }

    #[test]
    fn malformed_header_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        std::fs::write(&path, "ply\nformat ascii 2.0\nend_header\n").unwrap();
        match load_cloud(&path).unwrap_err() {
            MeshIoError::MalformedHeader { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ply");
        let mut bytes = write_ply(
            &[Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)],
            &[],
            PlyEncoding::BinaryLittleEndian,
        );
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_cloud(&path).unwrap_err(), MeshIoError::Truncated { .. }));
    }

    #[test]
    fn face_index_out_of_range_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oob.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n",
        )
        .unwrap();
        match load_mesh(&path).unwrap_err() {
            MeshIoError::IndexOutOfRange { index, limit, .. } => {
                assert_eq!(index, 9);
                assert_eq!(limit, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn obj_rejects_zero_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.obj");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").unwrap();
        assert!(matches!(
            load_mesh(&path).unwrap_err(),
            MeshIoError::IndexOutOfRange { index: 0, .. }
        ));
    }
}
