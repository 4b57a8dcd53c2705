//! Point-cloud ingestion and mesh serialization.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{Point3, Vector3};
use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property, PropertyAccess};

use crate::error::{ReconError, Result};
use crate::field::PointSample;
use crate::surface::TriangleMesh;

/// Where sample orientations come from when the file carries no normals.
/// Per-point normals in the file always take precedence.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum OrientationSource {
    #[default]
    Normals,
    /// One direction (surface toward sensor) for every point.
    ViewDir(Vector3<f64>),
    /// One `x y z` line per input point.
    ViewDirFile(PathBuf),
}

/// Raw cloud as read from disk, before orientation is resolved.
struct RawCloud {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

fn parse_err(path: &Path, message: impl Into<String>) -> ReconError {
    ReconError::Parse { path: path.to_path_buf(), message: message.into() }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| ReconError::io(path, e))
}

fn is_ply(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"))
}

/// Read every line of whitespace-separated numbers, skipping blanks and
/// `#` comments. Returns (line number, values).
fn numeric_lines(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| ReconError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, format!("line {}: {e}", n + 1)))?;
        out.push((n + 1, values));
    }
    Ok(out)
}

fn read_text_cloud(path: &Path) -> Result<RawCloud> {
    let lines = numeric_lines(path)?;
    let columns = lines.first().map_or(3, |(_, v)| v.len());
    if columns != 3 && columns != 6 {
        return Err(parse_err(path, format!("expected 3 or 6 columns, found {columns}")));
    }
    let mut points = Vec::with_capacity(lines.len());
    let mut normals = Vec::with_capacity(if columns == 6 { lines.len() } else { 0 });
    for (n, v) in &lines {
        if v.len() != columns {
            return Err(parse_err(path, format!("line {n}: expected {columns} columns, found {}", v.len())));
        }
        points.push(Point3::new(v[0], v[1], v[2]));
        if columns == 6 {
            normals.push(Vector3::new(v[3], v[4], v[5]));
        }
    }
    Ok(RawCloud { points, normals: (columns == 6).then_some(normals) })
}

fn property_f64(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => f64::from(v),
        Property::UChar(v) => f64::from(v),
        Property::Short(v) => f64::from(v),
        Property::UShort(v) => f64::from(v),
        Property::Int(v) => f64::from(v),
        Property::UInt(v) => f64::from(v),
        Property::Float(v) => f64::from(v),
        Property::Double(v) => v,
        _ => return None,
    })
}

/// PLY vertex record: position, normal and which of the six were present.
#[derive(Default)]
struct PlyVertex {
    values: [f64; 6],
    seen: u8,
}

impl PropertyAccess for PlyVertex {
    fn new() -> Self {
        PlyVertex::default()
    }

    fn set_property(&mut self, key: String, property: Property) {
        let slot = match key.as_str() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            "nx" => 3,
            "ny" => 4,
            "nz" => 5,
            _ => return,
        };
        if let Some(v) = property_f64(&property) {
            self.values[slot] = v;
            self.seen |= 1 << slot;
        }
    }
}

/// PLY face record for reading meshes back.
#[derive(Default)]
struct PlyFace(Vec<i64>);

impl PropertyAccess for PlyFace {
    fn new() -> Self {
        PlyFace::default()
    }

    fn set_property(&mut self, key: String, property: Property) {
        if key != "vertex_indices" && key != "vertex_index" {
            return;
        }
        self.0 = match property {
            Property::ListInt(v) => v.into_iter().map(i64::from).collect(),
            Property::ListUInt(v) => v.into_iter().map(i64::from).collect(),
            Property::ListShort(v) => v.into_iter().map(i64::from).collect(),
            Property::ListUShort(v) => v.into_iter().map(i64::from).collect(),
            Property::ListChar(v) => v.into_iter().map(i64::from).collect(),
            Property::ListUChar(v) => v.into_iter().map(i64::from).collect(),
            _ => return,
        };
    }
}

/// Read the vertex and face elements of a PLY file; other elements are
/// parsed and dropped.
fn read_ply_elements(path: &Path) -> Result<(Vec<PlyVertex>, Vec<PlyFace>, bool)> {
    let mut reader = open(path)?;
    let vp = Parser::<PlyVertex>::new();
    let fp = Parser::<PlyFace>::new();
    let skip = Parser::<DefaultElement>::new();
    let header = vp.read_header(&mut reader).map_err(|e| parse_err(path, e.to_string()))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut has_normals = false;
    for (_, element) in &header.elements {
        let err = |e: std::io::Error| parse_err(path, format!("element {}: {e}", element.name));
        match element.name.as_str() {
            "vertex" => {
                has_normals = ["nx", "ny", "nz"].iter().all(|k| element.properties.contains_key(*k));
                vertices = vp.read_payload_for_element(&mut reader, element, &header).map_err(err)?;
            }
            "face" => faces = fp.read_payload_for_element(&mut reader, element, &header).map_err(err)?,
            _ => {
                skip.read_payload_for_element(&mut reader, element, &header).map_err(err)?;
            }
        }
    }
    Ok((vertices, faces, has_normals))
}

fn read_ply_cloud(path: &Path) -> Result<RawCloud> {
    let (vertices, _, has_normals) = read_ply_elements(path)?;
    if let Some(k) = vertices.iter().position(|v| v.seen & 0b111 != 0b111) {
        return Err(parse_err(path, format!("vertex {k} lacks one of x, y, z")));
    }
    let points = vertices.iter().map(|v| Point3::new(v.values[0], v.values[1], v.values[2])).collect();
    let normals = has_normals.then(|| vertices.iter().map(|v| Vector3::new(v.values[3], v.values[4], v.values[5])).collect());
    Ok(RawCloud { points, normals })
}

fn read_view_dirs(path: &Path, expected: usize) -> Result<Vec<Vector3<f64>>> {
    let lines = numeric_lines(path)?;
    let mut out = Vec::with_capacity(lines.len());
    for (n, v) in lines {
        if v.len() != 3 {
            return Err(parse_err(path, format!("line {n}: expected 3 columns, found {}", v.len())));
        }
        out.push(Vector3::new(v[0], v[1], v[2]));
    }
    if out.len() < expected {
        return Err(ReconError::MissingOrientation {
            index: out.len(),
            reason: format!("view direction file {} has only {} lines", path.display(), out.len()),
        });
    }
    if out.len() > expected {
        return Err(parse_err(path, format!("{} view directions for {expected} points", out.len())));
    }
    Ok(out)
}

/// Read an oriented point cloud (PLY, or text with 3 or 6 columns).
///
/// Points whose orientation vector has zero length are dropped and counted;
/// the count is logged as a warning.
pub fn read_cloud(path: &Path, source: &OrientationSource) -> Result<Vec<PointSample>> {
    let raw = if is_ply(path) { read_ply_cloud(path)? } else { read_text_cloud(path)? };
    if raw.points.is_empty() {
        return Err(parse_err(path, "file contains no points"));
    }
    let orientations: Vec<Vector3<f64>> = match (&raw.normals, source) {
        (Some(n), src) => {
            if *src != OrientationSource::Normals {
                info!("{}: per-point normals take precedence over the view direction", path.display());
            }
            n.clone()
        }
        (None, OrientationSource::ViewDir(d)) => vec![*d; raw.points.len()],
        (None, OrientationSource::ViewDirFile(f)) => read_view_dirs(f, raw.points.len())?,
        (None, OrientationSource::Normals) => {
            return Err(ReconError::MissingOrientation {
                index: 0,
                reason: format!("{} has no normals and no view direction was given", path.display()),
            })
        }
    };
    let mut samples = Vec::with_capacity(raw.points.len());
    let mut rejected = 0;
    for (k, (p, v)) in raw.points.iter().zip(&orientations).enumerate() {
        if !p.iter().chain(v.iter()).all(|c| c.is_finite()) {
            return Err(parse_err(path, format!("point {k} has non-finite coordinates")));
        }
        if v.norm_squared() == 0.0 {
            rejected += 1;
            continue;
        }
        samples.push(PointSample::new(*p, *v)?);
    }
    if rejected > 0 {
        warn!("{}: rejected {rejected} points with zero-length orientation", path.display());
    }
    if samples.is_empty() {
        return Err(ReconError::NoSurvivingPoints(path.to_path_buf(), rejected));
    }
    Ok(samples)
}

/// Write samples as 6-column text, one `x y z nx ny nz` line per point.
pub fn write_cloud_text(samples: &[PointSample], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| ReconError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        writeln!(w, "{} {} {} {} {} {}", s.p.x, s.p.y, s.p.z, s.v.x, s.v.y, s.v.z).map_err(|e| ReconError::io(path, e))?;
    }
    w.flush().map_err(|e| ReconError::io(path, e))
}

fn write_obj(mesh: &TriangleMesh, w: &mut impl Write) -> std::io::Result<()> {
    // Display for f64 is the shortest string that parses back to the same bits
    for p in &mesh.vertices {
        writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Binary little-endian PLY written by hand: ply-rs 0.1.3 writes the element
/// count instead of the list length in front of binary list properties.
fn write_ply(mesh: &TriangleMesh, w: &mut impl Write) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\n\
         property float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for p in &mesh.vertices {
        for c in [p.x, p.y, p.z] {
            w.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    for t in &mesh.triangles {
        w.write_all(&[3u8])?;
        for &i in t {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Write a mesh as `.obj` (text, exact decimal round trip) or `.ply`
/// (binary little-endian, f32 positions, i32 indices), chosen by extension.
pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    if mesh.vertices.len() > i32::MAX as usize {
        return Err(ReconError::Input("mesh has too many vertices for 32-bit indices".into()));
    }
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if !matches!(ext.as_deref(), Some("obj" | "ply")) {
        return Err(ReconError::Config(format!("unsupported mesh extension for {} (use .obj or .ply)", path.display())));
    }
    if mesh.is_empty() {
        warn!("writing an empty mesh to {}", path.display());
    }
    let file = File::create(path).map_err(|e| ReconError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = if ext.as_deref() == Some("obj") { write_obj(mesh, &mut w) } else { write_ply(mesh, &mut w) };
    res.and_then(|_| w.flush()).map_err(|e| ReconError::io(path, e))
}

fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let mut mesh = TriangleMesh::default();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| ReconError::io(path, e))?;
        let mut tok = line.split_whitespace();
        let bad = |what: &str| parse_err(path, format!("line {}: {what}", n + 1));
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok.map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad vertex"))?;
                if c.len() < 3 {
                    return Err(bad("vertex needs three coordinates"));
                }
                mesh.vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tok
                    .map(|t| t.split('/').next().unwrap_or("").parse::<u32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad face"))?;
                if idx.len() != 3 || idx.contains(&0) {
                    return Err(bad("only 1-based triangles are supported"));
                }
                mesh.triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

fn read_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    let (vertices, faces, _) = read_ply_elements(path)?;
    let vertices = vertices.iter().map(|v| Point3::new(v.values[0], v.values[1], v.values[2])).collect();
    let triangles = faces
        .iter()
        .enumerate()
        .map(|(k, f)| match f.0[..] {
            [a, b, c] if [a, b, c].iter().all(|&i| (0..=i64::from(u32::MAX)).contains(&i)) => {
                Ok([a as u32, b as u32, c as u32])
            }
            _ => Err(parse_err(path, format!("face {k} is not a triangle with valid indices"))),
        })
        .collect::<Result<Vec<_>>>()?;
    TriangleMesh::new(vertices, triangles)
}

/// Read a triangle mesh written by [`write_mesh`] (or any triangle-only
/// OBJ/PLY file).
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    if is_ply(path) {
        read_ply_mesh(path)
    } else {
        read_obj(path)
    }
}
