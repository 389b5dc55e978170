//! Point-cloud and mesh loading, plus the raw-to-model coordinate mapping.
//!
//! Supported inputs:
//!
//! * XYZ text: one `x y z nx ny nz` record per line, `#` starts a comment.
//!   Four-field records `x y nx ny` are accepted for planar clouds.
//! * PLY `ascii 1.0` / `binary_little_endian 1.0` with vertex properties
//!   `x y z nx ny nz` (and `vertex_indices` faces for meshes).
//! * OBJ `v` / `vn` / `f` records; polygons are fan-triangulated.

mod ply;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::oracle::TriangleMesh;
use crate::solver::SurfaceSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    /// PLY; the header decides the encoding when reading, ascii when writing.
    Ply,
    /// Binary little-endian PLY (writing only; reads like [`CloudFormat::Ply`]).
    PlyBinary,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match extension(path).as_deref() {
            Some("xyz") | Some("txt") | Some("pts") => Ok(Self::Xyz),
            Some("ply") => Ok(Self::Ply),
            other => Err(Error::UnsupportedFormat(format!(
                "cannot infer point-cloud format from extension {other:?} of {}",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match extension(path).as_deref() {
            Some("obj") => Ok(Self::Obj),
            Some("ply") => Ok(Self::Ply),
            other => Err(Error::UnsupportedFormat(format!(
                "cannot infer mesh format from extension {other:?} of {}",
                path.display()
            ))),
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase())
}

/// Samples read from a file, in raw file coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub samples: Vec<SurfaceSample>,
    /// Records skipped because their normal had zero length.
    pub dropped: usize,
}

impl PointCloud {
    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.position.clone()).collect()
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn push_sample(cloud: &mut PointCloud, path: &Path, line: usize, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(path, line, "non-finite coordinate"));
    }
    let dim = values.len() / 2;
    let (p, n) = values.split_at(dim);
    if n.iter().all(|&v| v == 0.0) {
        cloud.dropped += 1;
        return Ok(());
    }
    cloud.samples.push(SurfaceSample::new(p.to_vec(), n.to_vec())?);
    Ok(())
}

pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let bytes = read_bytes(path)?;
    let mut cloud = PointCloud::default();
    match format {
        CloudFormat::Xyz => {
            let text = String::from_utf8_lossy(&bytes);
            let mut width = None;
            for (i, raw) in text.lines().enumerate() {
                let line_no = i + 1;
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let values = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| parse_err(path, line_no, format!("bad number '{t}'"))))
                    .collect::<Result<Vec<_>>>()?;
                match values.len() {
                    4 | 6 => {}
                    3 => return Err(parse_err(path, line_no, "missing normal fields (expected x y z nx ny nz)")),
                    n => return Err(parse_err(path, line_no, format!("expected 6 fields, found {n}"))),
                }
                if *width.get_or_insert(values.len()) != values.len() {
                    return Err(parse_err(path, line_no, "record width differs from earlier records"));
                }
                push_sample(&mut cloud, path, line_no, &values)?;
            }
        }
        CloudFormat::Ply | CloudFormat::PlyBinary => {
            let file = ply::read(path, &bytes)?;
            let vertex = file.element("vertex").ok_or_else(|| parse_err(path, 0, "no vertex element"))?;
            let mut cols = Vec::with_capacity(6);
            for name in ["x", "y", "z", "nx", "ny", "nz"] {
                let idx = vertex.index_of(name).ok_or_else(|| {
                    parse_err(path, 0, format!("vertex element lacks property '{name}' (normals are required)"))
                })?;
                cols.push(idx);
            }
            for (r, record) in vertex.records.iter().enumerate() {
                let values: Vec<f64> = cols.iter().map(|&c| record[c][0]).collect();
                push_sample(&mut cloud, path, r + 1, &values)?;
            }
        }
    }
    if cloud.dropped > 0 {
        warn!("{}: dropped {} records with zero-length normals", path.display(), cloud.dropped);
    }
    Ok(cloud)
}

/// Writes samples in `format`; the XYZ and ascii PLY text uses shortest
/// round-trip float formatting.
pub fn write_point_cloud(path: &Path, samples: &[SurfaceSample], format: CloudFormat) -> Result<()> {
    let dim = samples.first().map_or(3, |s| s.dim());
    if samples.iter().any(|s| s.dim() != dim) {
        return Err(Error::InvalidArgument("samples have mixed dimensions".into()));
    }
    let bytes = match format {
        CloudFormat::Xyz => {
            let mut out = String::new();
            for s in samples {
                let fields: Vec<String> = s.position.iter().chain(&s.normal).map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", fields.join(" "));
            }
            out.into_bytes()
        }
        CloudFormat::Ply | CloudFormat::PlyBinary => {
            if dim != 3 {
                return Err(Error::UnsupportedFormat("PLY point clouds must be three-dimensional".into()));
            }
            let binary = format == CloudFormat::PlyBinary;
            let mut out = format!(
                "ply\nformat {} 1.0\nelement vertex {}\n",
                if binary { "binary_little_endian" } else { "ascii" },
                samples.len()
            );
            for name in ["x", "y", "z", "nx", "ny", "nz"] {
                let _ = writeln!(out, "property double {name}");
            }
            out.push_str("end_header\n");
            let mut bytes = out.into_bytes();
            for s in samples {
                let vals = s.position.iter().chain(&s.normal);
                if binary {
                    vals.for_each(|v| bytes.extend(v.to_le_bytes()));
                } else {
                    let fields: Vec<String> = vals.map(|v| format!("{v:?}")).collect();
                    bytes.extend(fields.join(" ").bytes());
                    bytes.push(b'\n');
                }
            }
            bytes
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A loaded mesh with what the loader had to discard or flag.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    /// Triangles after fan triangulation, before degenerate removal.
    pub triangles_read: usize,
    pub degenerate_dropped: usize,
    /// Edges not shared by exactly two triangles.
    pub non_manifold_edges: usize,
    /// `vn` records from an OBJ file, when present.
    pub file_normals: Option<Vec<[f64; 3]>>,
}

fn resolve_obj_index(token: &str, count: usize, path: &Path, line: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let idx: i64 = head.parse().map_err(|_| parse_err(path, line, format!("bad face index '{token}'")))?;
    let resolved = if idx > 0 { idx - 1 } else { count as i64 + idx };
    if idx == 0 || resolved < 0 || resolved as usize >= count {
        return Err(parse_err(path, line, format!("face index {idx} out of range")));
    }
    Ok(resolved as usize)
}

fn fan(poly: &[usize], out: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<LoadedMesh> {
    let bytes = read_bytes(path)?;
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut normals: Vec<[f64; 3]> = Vec::new();
    let vec3 = |tokens: &[&str], path: &Path, line: usize| -> Result<[f64; 3]> {
        if tokens.len() < 3 {
            return Err(parse_err(path, line, "expected three coordinates"));
        }
        let mut v = [0.0; 3];
        for (slot, t) in v.iter_mut().zip(tokens) {
            *slot = t.parse().map_err(|_| parse_err(path, line, format!("bad number '{t}'")))?;
        }
        Ok(v)
    };
    match format {
        MeshFormat::Obj => {
            let text = String::from_utf8_lossy(&bytes);
            for (i, raw) in text.lines().enumerate() {
                let line_no = i + 1;
                let line = raw.split('#').next().unwrap_or("").trim();
                let tokens: Vec<&str> = line.split_whitespace().collect();
                match tokens.split_first() {
                    Some((&"v", rest)) => vertices.push(vec3(rest, path, line_no)?),
                    Some((&"vn", rest)) => normals.push(vec3(rest, path, line_no)?),
                    Some((&"f", rest)) => {
                        if rest.len() < 3 {
                            return Err(parse_err(path, line_no, "face needs at least three vertices"));
                        }
                        let poly = rest
                            .iter()
                            .map(|t| resolve_obj_index(t, vertices.len(), path, line_no))
                            .collect::<Result<Vec<_>>>()?;
                        fan(&poly, &mut triangles);
                    }
                    _ => {}
                }
            }
        }
        MeshFormat::Ply => {
            let file = ply::read(path, &bytes)?;
            let vertex = file.element("vertex").ok_or_else(|| parse_err(path, 0, "no vertex element"))?;
            let cols = ["x", "y", "z"]
                .iter()
                .map(|n| vertex.index_of(n).ok_or_else(|| parse_err(path, 0, format!("vertex lacks '{n}'"))))
                .collect::<Result<Vec<_>>>()?;
            for r in &vertex.records {
                vertices.push([r[cols[0]][0], r[cols[1]][0], r[cols[2]][0]]);
            }
            if let Some(face) = file.element("face") {
                let col = face
                    .index_of("vertex_indices")
                    .or_else(|| face.index_of("vertex_index"))
                    .ok_or_else(|| parse_err(path, 0, "face element lacks vertex_indices"))?;
                for (r, rec) in face.records.iter().enumerate() {
                    let poly: Vec<usize> = rec[col].iter().map(|&v| v as usize).collect();
                    if poly.len() < 3 || poly.iter().any(|&v| v >= vertices.len()) {
                        return Err(parse_err(path, r + 1, "invalid face record"));
                    }
                    fan(&poly, &mut triangles);
                }
            }
        }
    }
    if vertices.iter().flatten().any(|v| !v.is_finite()) {
        return Err(parse_err(path, 0, "non-finite vertex coordinate"));
    }

    let triangles_read = triangles.len();
    let diag2 = bbox_diagonal_sq(&vertices);
    let tol = 1e-24f64.max(1e-20 * diag2 * diag2);
    triangles.retain(|t| {
        let [a, b, c] = t.map(|i| vertices[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        n.iter().map(|x| x * x).sum::<f64>() > tol
    });
    let degenerate_dropped = triangles_read - triangles.len();
    if degenerate_dropped > 0 {
        warn!("{}: dropped {degenerate_dropped} zero-area faces", path.display());
    }
    let mesh = TriangleMesh::new(vertices, triangles)?;
    let non_manifold_edges = mesh.non_manifold_edge_count();
    if non_manifold_edges > 0 {
        warn!(
            "{}: {non_manifold_edges} edges are not shared by exactly two faces; distance signs may be unreliable",
            path.display()
        );
    }
    Ok(LoadedMesh {
        mesh,
        triangles_read,
        degenerate_dropped,
        non_manifold_edges,
        file_normals: (!normals.is_empty()).then_some(normals),
    })
}

fn bbox_diagonal_sq(vertices: &[[f64; 3]]) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    (0..3)
        .map(|d| {
            let (lo, hi) = vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v[d]), hi.max(v[d]))
            });
            (hi - lo).powi(2)
        })
        .sum()
}

/// Side length used when the input points have no spatial extent.
pub const DEGENERATE_EXTENT: f64 = 1e-3;

/// Uniform affine map `model = raw · scale + offset` into the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTransform {
    scale: f64,
    offset: Vec<f64>,
}

impl DomainTransform {
    pub fn new(scale: f64, offset: Vec<f64>) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) || offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid domain transform (scale {scale})")));
        }
        Ok(Self { scale, offset })
    }

    pub fn identity(dim: usize) -> Self {
        Self { scale: 1.0, offset: vec![0.0; dim] }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn to_model(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.offset).map(|(r, o)| r * self.scale + o).collect()
    }

    pub fn to_raw(&self, model: &[f64]) -> Vec<f64> {
        model.iter().zip(&self.offset).map(|(m, o)| (m - o) / self.scale).collect()
    }

    /// Model-space distance expressed in raw units.
    pub fn distance_to_raw(&self, d: f64) -> f64 {
        d / self.scale
    }

    pub fn distance_to_model(&self, d: f64) -> f64 {
        d * self.scale
    }

    /// Moves samples into model space; normals are unchanged by a uniform scale.
    pub fn samples_to_model(&self, samples: &[SurfaceSample]) -> Vec<SurfaceSample> {
        samples
            .iter()
            .map(|s| SurfaceSample { position: self.to_model(&s.position), normal: s.normal.clone() })
            .collect()
    }
}

/// Uniform map sending the margin-expanded bounding box of `points` into the
/// unit cube, centered, preserving aspect ratio.
pub fn fit_domain(points: &[Vec<f64>], margin: f64) -> Result<DomainTransform> {
    let first = points.first().ok_or_else(|| Error::InvalidArgument("fit_domain needs at least one point".into()))?;
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::InvalidArgument(format!("margin must lie in [0, 0.5), got {margin}")));
    }
    let dim = first.len();
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: p.len() });
        }
        for d in 0..dim {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let side = (0..dim).map(|d| (hi[d] - lo[d]) * (1.0 + 2.0 * margin)).fold(0.0, f64::max);
    let side = if side > 1e-12 { side } else { DEGENERATE_EXTENT };
    let scale = 1.0 / side;
    let offset = (0..dim).map(|d| 0.5 - 0.5 * (lo[d] + hi[d]) * scale).collect();
    DomainTransform::new(scale, offset)
}

/// Path with `suffix` appended to the file name (`a/b.raw` + `.hdr` → `a/b.raw.hdr`).
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, content: &[u8]) -> PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(content).unwrap();
        p
    }

    #[test]
    fn xyz_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.xyz", b"# header\n0 0 0 0 0 2\n0 0 0 0 0 0\n1 2 3 1 0 0 # trailing\n");
        let cloud = load_point_cloud(&p, CloudFormat::Xyz).unwrap();
        assert_eq!(cloud.samples.len(), 2);
        assert_eq!(cloud.dropped, 1);
        assert_eq!(cloud.samples[0].position, vec![0.0; 3]);
        assert_eq!(cloud.samples[0].normal, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn xyz_errors_report_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.xyz", b"0 0 0 0 0 1\n\n1 2 3\n");
        match load_point_cloud(&p, CloudFormat::Xyz) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("normal"));
            }
            other => panic!("{other:?}"),
        }
        let p = write_tmp(&dir, "b.xyz", b"0 0 0 0 0 x\n");
        assert!(matches!(load_point_cloud(&p, CloudFormat::Xyz), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            load_point_cloud(&dir.path().join("missing.xyz"), CloudFormat::Xyz),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn ply_cloud_three_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nend_header\n0 0 0 1 0 0\n1 0 0 0 1 0\n0 1 0 0 0 3\n";
        let p = write_tmp(&dir, "c.ply", text.as_bytes());
        let cloud = load_point_cloud(&p, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.samples.len(), 3);
        assert_eq!(cloud.samples[2].normal, vec![0.0, 0.0, 1.0]);
        let no_normals = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        let p = write_tmp(&dir, "d.ply", no_normals.as_bytes());
        assert!(load_point_cloud(&p, CloudFormat::Ply).is_err());
    }

    #[test]
    fn cloud_round_trip_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![
            SurfaceSample::new(vec![0.1, -2.5, 3.0e-7], vec![1.0, 2.0, 2.0]).unwrap(),
            SurfaceSample::new(vec![1.0 / 3.0, 0.2, 0.9], vec![0.0, -1.0, 0.0]).unwrap(),
        ];
        for (name, fmt) in [("a.xyz", CloudFormat::Xyz), ("a.ply", CloudFormat::Ply), ("b.ply", CloudFormat::PlyBinary)] {
            let p = dir.path().join(name);
            write_point_cloud(&p, &samples, fmt).unwrap();
            let back = load_point_cloud(&p, CloudFormat::from_path(&p).unwrap()).unwrap();
            assert_eq!(back.samples.len(), 2);
            for (a, b) in back.samples.iter().zip(&samples) {
                for (x, y) in a.position.iter().chain(&a.normal).zip(b.position.iter().chain(&b.normal)) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }

    const CUBE_OBJ: &str = "\
v -0.5 -0.5 -0.5\nv 0.5 -0.5 -0.5\nv 0.5 0.5 -0.5\nv -0.5 0.5 -0.5\n\
v -0.5 -0.5 0.5\nv 0.5 -0.5 0.5\nv 0.5 0.5 0.5\nv -0.5 0.5 0.5\n\
f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 3 4 8 7\nf 2 3 7 6\nf 1 5 8 4\n";

    #[test]
    fn obj_cube_quads_fan_to_twelve_triangles() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "cube.obj", CUBE_OBJ.as_bytes());
        let loaded = load_mesh(&p, MeshFormat::Obj).unwrap();
        assert_eq!(loaded.mesh.faces().len(), 12);
        assert_eq!(loaded.triangles_read, 12);
        assert_eq!(loaded.non_manifold_edges, 0);
        assert!(loaded.file_normals.is_none());
    }

    #[test]
    fn obj_index_forms_and_degenerate_faces() {
        let dir = tempfile::tempdir().unwrap();
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nvn 0 0 1\nf 1/1/1 2//1 3\nf -4 -3 -1\n";
        let p = write_tmp(&dir, "t.obj", text.as_bytes());
        let loaded = load_mesh(&p, MeshFormat::Obj).unwrap();
        assert_eq!(loaded.triangles_read, 2);
        assert_eq!(loaded.degenerate_dropped, 1);
        assert_eq!(loaded.mesh.faces().len(), 1);
        assert_eq!(loaded.file_normals.as_ref().map(Vec::len), Some(1));
        assert!(loaded.non_manifold_edges > 0);
        let p = write_tmp(&dir, "bad.obj", b"v 0 0 0\nf 1 2 3\n");
        assert!(matches!(load_mesh(&p, MeshFormat::Obj), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn ply_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let p = write_tmp(&dir, "q.ply", text.as_bytes());
        let loaded = load_mesh(&p, MeshFormat::Ply).unwrap();
        assert_eq!(loaded.mesh.faces().len(), 2);
    }

    #[test]
    fn fit_domain_examples() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![2.0, 2.0, 2.0], vec![1.0, 0.5, 2.0]];
        let t = fit_domain(&pts, 0.25).unwrap();
        assert!((t.scale() - 1.0 / 3.0).abs() < 1e-15);
        let lo = t.to_model(&[-0.5, -0.5, -0.5]);
        let hi = t.to_model(&[2.5, 2.5, 2.5]);
        assert!(lo.iter().all(|v| v.abs() < 1e-12));
        assert!(hi.iter().all(|v| (v - 1.0).abs() < 1e-12));
        for p in &pts {
            let m = t.to_model(p);
            assert!(m.iter().all(|&v| v > 0.0 && v < 1.0));
            let back = t.to_raw(&m);
            assert!(back.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-12));
        }

        let single = fit_domain(&[vec![3.0, -1.0, 7.0]], 0.25).unwrap();
        assert_eq!(single.scale(), 1.0 / DEGENERATE_EXTENT);
        let m = single.to_model(&[3.0, -1.0, 7.0]);
        assert!(m.iter().all(|v| (v - 0.5).abs() < 1e-9));

        assert!(fit_domain(&[], 0.1).is_err());
        assert!(fit_domain(&pts, 0.5).is_err());
    }

    #[test]
    fn uniform_scaling_preserves_distance_ratios() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![4.0, 1.0, 0.5]];
        let t = fit_domain(&pts, 0.1).unwrap();
        let (a, b) = (vec![0.3, 0.2, 0.1], vec![3.1, 0.7, 0.4]);
        let dist = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let raw = dist(&a, &b);
        let model = dist(&t.to_model(&a), &t.to_model(&b));
        assert!((t.distance_to_raw(model) - raw).abs() < 1e-9);
    }
}
