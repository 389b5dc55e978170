//! Grid and mesh files.
//!
//! A grid is written as a raw little-endian value dump plus a text sidecar
//! `<path>.hdr`:
//!
//! ```text
//! dims 64 64 64
//! origin 0 0 0
//! spacing 0.015873015873015872 0.015873015873015872 0.015873015873015872
//! upper 1 1 1
//! dtype float32
//! order row-major-axis0-slowest
//! ```
//!
//! `dtype` is `float32` (default) or `float64`; the latter round-trips the
//! values bit for bit. Meshes are ascii OBJ or PLY, contours are OBJ `l`
//! records with `z = 0`. Float text uses the shortest round-trip form, so
//! identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{Contours, IsoMesh, ScalarGrid};
use crate::error::{Error, Result};
use crate::ingest::{with_suffix, MeshFormat};
use crate::snapshot::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridDtype {
    #[default]
    Float32,
    Float64,
}

impl GridDtype {
    fn name(self) -> &'static str {
        match self {
            GridDtype::Float32 => "float32",
            GridDtype::Float64 => "float64",
        }
    }
}

/// Sidecar path for a raw grid file.
pub fn header_path(path: &Path) -> PathBuf {
    with_suffix(path, ".hdr")
}

fn join(values: &[impl std::fmt::Debug]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_grid(grid: &ScalarGrid, path: &Path, dtype: GridDtype) -> Result<()> {
    let mut raw = Vec::with_capacity(grid.len() * 8);
    match dtype {
        GridDtype::Float32 => grid.values().iter().for_each(|&v| raw.extend((v as f32).to_le_bytes())),
        GridDtype::Float64 => grid.values().iter().for_each(|&v| raw.extend(v.to_le_bytes())),
    }
    let header = format!(
        "dims {}\norigin {}\nspacing {}\nupper {}\ndtype {}\norder row-major-axis0-slowest\n",
        join(grid.dims()),
        join(grid.origin()),
        join(grid.spacing()),
        join(grid.upper()),
        dtype.name()
    );
    write_atomic(path, &raw)?;
    write_atomic(&header_path(path), header.as_bytes()).inspect_err(|_| {
        let _ = fs::remove_file(path);
    })
}

/// Reads a grid written by [`write_grid`]; returns the values widened to f64.
pub fn read_grid(path: &Path) -> Result<(ScalarGrid, GridDtype)> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let (mut dims, mut origin, mut upper, mut dtype) = (None, None, None, None);
    for (i, line) in text.lines().enumerate() {
        let err = |m: String| Error::Parse { path: hdr.clone(), line: i + 1, message: m };
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else { continue };
        let rest: Vec<&str> = tokens.collect();
        let floats = || {
            rest.iter().map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number '{t}'")))).collect::<Result<Vec<_>>>()
        };
        match key {
            "dims" => {
                dims = Some(
                    rest.iter()
                        .map(|t| t.parse::<usize>().map_err(|_| err(format!("bad size '{t}'"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "origin" => origin = Some(floats()?),
            "upper" => upper = Some(floats()?),
            "spacing" | "order" => {}
            "dtype" => {
                dtype = Some(match rest.first().copied() {
                    Some("float32") => GridDtype::Float32,
                    Some("float64") => GridDtype::Float64,
                    other => return Err(err(format!("unknown dtype {other:?}"))),
                })
            }
            other => return Err(err(format!("unknown header key '{other}'"))),
        }
    }
    let missing = |k: &str| Error::Parse { path: hdr.clone(), line: 0, message: format!("missing '{k}'") };
    let dims = dims.ok_or_else(|| missing("dims"))?;
    let origin = origin.ok_or_else(|| missing("origin"))?;
    let upper = upper.ok_or_else(|| missing("upper"))?;
    let dtype = dtype.ok_or_else(|| missing("dtype"))?;
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let width = if dtype == GridDtype::Float32 { 4 } else { 8 };
    let count: usize = dims.iter().product();
    if raw.len() != count * width {
        return Err(Error::UnsupportedFormat(format!(
            "{} holds {} bytes, header implies {}",
            path.display(),
            raw.len(),
            count * width
        )));
    }
    let values = raw
        .chunks_exact(width)
        .map(|c| match dtype {
            GridDtype::Float32 => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
            GridDtype::Float64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
        })
        .collect();
    Ok((ScalarGrid::new(dims, origin, upper, values)?, dtype))
}

pub fn mesh_to_string(mesh: &IsoMesh, format: MeshFormat) -> String {
    let mut out = String::new();
    match format {
        MeshFormat::Obj => {
            for v in &mesh.vertices {
                let _ = writeln!(out, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
            }
            for t in &mesh.triangles {
                let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
            }
        }
        MeshFormat::Ply => {
            let _ = write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
                 element face {}\nproperty list uchar int vertex_indices\nend_header\n",
                mesh.vertices.len(),
                mesh.triangles.len()
            );
            for v in &mesh.vertices {
                let _ = writeln!(out, "{:?} {:?} {:?}", v[0], v[1], v[2]);
            }
            for t in &mesh.triangles {
                let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
            }
        }
    }
    out
}

pub fn write_mesh(mesh: &IsoMesh, path: &Path, format: MeshFormat) -> Result<()> {
    if mesh.triangles.is_empty() {
        warn!("{}: writing an empty mesh", path.display());
    }
    write_atomic(path, mesh_to_string(mesh, format).as_bytes())
}

pub fn contours_to_obj(contours: &Contours) -> String {
    let mut out = String::new();
    for v in &contours.vertices {
        let _ = writeln!(out, "v {:?} {:?} 0", v[0], v[1]);
    }
    for line in &contours.polylines {
        let mut ids: Vec<String> = line.vertices.iter().map(|i| (i + 1).to_string()).collect();
        if line.closed {
            ids.push((line.vertices[0] + 1).to_string());
        }
        let _ = writeln!(out, "l {}", ids.join(" "));
    }
    out
}

pub fn write_contours(contours: &Contours, path: &Path) -> Result<()> {
    if contours.polylines.is_empty() {
        warn!("{}: writing an empty contour set", path.display());
    }
    write_atomic(path, contours_to_obj(contours).as_bytes())
}
