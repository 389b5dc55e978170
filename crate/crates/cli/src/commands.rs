//! Subcommand implementations. Every command reads a validated
//! [`RunConfig`], works in model units internally and converts back to raw
//! file units at the edges.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use polysdf::ingest::{
    fit_domain, load_mesh, load_point_cloud, CloudFormat, DomainTransform, MeshFormat, PointCloud,
};
use polysdf::oracle::{self, GroundTruth, Sphere, NEAR_THRESHOLD};
use polysdf::recon::export::{write_contours, write_grid, write_mesh, GridDtype};
use polysdf::recon::{eval_grid, extract_level_set, Contours, IsoMesh, LevelSet, ScalarGrid};
use polysdf::snapshot::{write_atomic, Snapshot};
use polysdf::solver::{batch_fit, ingest};
use polysdf::survey::{run_episode, AgentState, EpisodeConfig};
use polysdf::{init_spherical_prior, BasisConfig, Error, FieldModel, RegularizerSpec, SurfaceSample};

use crate::config::RunConfig;
use crate::error::CliError;

/// Files created by a command; removed again unless the command succeeds.
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    keep: bool,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new(), dirs: Vec::new(), keep: false }
    }

    fn file(&mut self, path: &Path) -> PathBuf {
        self.files.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn commit(mut self) {
        self.keep = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.keep {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in &self.dirs {
            let _ = fs::remove_dir_all(d);
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str, command: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| CliError::Config(format!("{command} needs --{} (key '{key}')", key.replace('_', "-"))))
}

fn load_cloud(path: &Path, dim: usize) -> Result<PointCloud, CliError> {
    let cloud = load_point_cloud(path, CloudFormat::from_path(path)?)?;
    if cloud.dropped > 0 {
        warn!("{}: dropped {} samples with zero normals", path.display(), cloud.dropped);
    }
    if let Some(s) = cloud.samples.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: s.dim() }.into());
    }
    Ok(cloud)
}

fn frame_for(cfg: &RunConfig, cloud: &PointCloud) -> Result<DomainTransform, CliError> {
    match &cfg.domain {
        Some(d) => {
            let (lo, hi) = d.split_at(cfg.dim);
            if lo.iter().zip(hi).any(|(a, b)| a.is_nan() || b.is_nan() || a >= b) {
                return Err(CliError::Config(format!("domain: every lo must be below its hi, got {d:?}")));
            }
            Ok(fit_domain(&[lo.to_vec(), hi.to_vec()], cfg.margin)?)
        }
        None if cloud.samples.is_empty() => {
            Err(CliError::Config("fit: the input holds no samples; give --domain to fit the prior alone".into()))
        }
        None => Ok(fit_domain(&cloud.positions(), cfg.margin)?),
    }
}

fn prior(cfg: &RunConfig, basis: &BasisConfig) -> Result<FieldModel, CliError> {
    Ok(init_spherical_prior(basis, &cfg.prior_center_for(basis)?, cfg.prior_radius, cfg.prior_strength)?)
}

/// Sequential updates in batches of `batch_size`; per-batch latency goes to
/// stdout when `report` is set.
fn stream(
    model: &mut FieldModel,
    samples: &[SurfaceSample],
    spec: &RegularizerSpec,
    batch_size: usize,
    report: bool,
) -> Result<(), CliError> {
    let batch_size = batch_size.max(1);
    let mut times = Vec::new();
    for (i, batch) in samples.chunks(batch_size).enumerate() {
        let t = Instant::now();
        ingest(model, batch, spec)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        if report {
            println!("batch {i} samples {} update_ms {ms:.3}", batch.len());
        }
        times.push(ms);
    }
    if report && !times.is_empty() {
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let max = times.iter().cloned().fold(0.0, f64::max);
        println!("batches {} mean_update_ms {mean:.3} max_update_ms {max:.3}", times.len());
    }
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let input = required(&cfg.input, "in", "fit")?;
    let out = required(&cfg.output, "out", "fit")?;
    let cloud = load_cloud(input, cfg.dim)?;
    let frame = frame_for(cfg, &cloud)?;
    let basis = cfg.basis()?;
    let spec = cfg.regularizer(&basis)?;
    let mut model = prior(cfg, &basis)?;
    let samples = frame.samples_to_model(&cloud.samples);
    if samples.is_empty() {
        warn!("{}: no samples; saving the prior", input.display());
    } else if cfg.stream {
        stream(&mut model, &samples, &spec, cfg.batch_size, true)?;
    } else {
        model = batch_fit(&samples, &spec, &model)?;
    }
    Snapshot::new(model, frame)?.save(out)?;
    info!("fit {} samples into {}", samples.len(), out.display());
    Ok(())
}

pub fn update(cfg: &RunConfig) -> Result<(), CliError> {
    let model_path = required(&cfg.model, "model", "update")?;
    let input = required(&cfg.input, "in", "update")?;
    let out = cfg.output.as_deref().unwrap_or(model_path);
    let mut snap = Snapshot::load(model_path)?;
    let cloud = load_cloud(input, snap.model.dim())?;
    if cloud.samples.is_empty() {
        warn!("{}: no samples; the snapshot is unchanged", input.display());
        if out != model_path {
            write_atomic(out, &snap.encode())?;
        }
        return Ok(());
    }
    let spec = cfg.regularizer(snap.model.config())?;
    let samples = snap.frame.samples_to_model(&cloud.samples);
    stream(&mut snap.model, &samples, &spec, cfg.batch_size, cfg.stream)?;
    snap.save(out)?;
    info!("ingested {} samples into {}", samples.len(), out.display());
    Ok(())
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

/// One line per point: the raw coordinates, raw distance and gradient.
pub fn query(cfg: &RunConfig) -> Result<String, CliError> {
    let model_path = required(&cfg.model, "model", "query")?;
    if cfg.points.is_empty() {
        return Err(CliError::Config("query needs at least one --point".into()));
    }
    let snap = Snapshot::load(model_path)?;
    let dim = snap.model.dim();
    let axes = ["x", "y", "z"];
    let mut out = format!(
        "# {} f {}\n",
        axes[..dim].join(" "),
        axes[..dim].iter().map(|a| format!("g{a}")).collect::<Vec<_>>().join(" ")
    );
    for p in &cfg.points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: p.len() }.into());
        }
        let q = snap.model.query(&snap.frame.to_model(p))?;
        out.push_str(&format!("{} {:?} {}\n", fmt_list(p), snap.frame.distance_to_raw(q.distance), fmt_list(&q.gradient)));
    }
    Ok(out)
}

fn raw_grid(grid: &ScalarGrid, frame: &DomainTransform) -> Result<ScalarGrid, CliError> {
    let values = grid.values().iter().map(|&v| frame.distance_to_raw(v)).collect();
    Ok(ScalarGrid::new(grid.dims().to_vec(), frame.to_raw(grid.origin()), frame.to_raw(grid.upper()), values)?)
}

pub fn reconstruct(cfg: &RunConfig) -> Result<String, CliError> {
    let model_path = required(&cfg.model, "model", "reconstruct")?;
    let out = required(&cfg.output, "out", "reconstruct")?;
    let snap = Snapshot::load(model_path)?;
    let dim = snap.model.dim();
    if dim == 1 {
        return Err(CliError::Config("reconstruct needs a 2D or 3D model".into()));
    }
    let mesh_format = if dim == 3 { Some(MeshFormat::from_path(out)?) } else { None };
    if dim == 2 && MeshFormat::from_path(out)? != MeshFormat::Obj {
        return Err(Error::UnsupportedFormat(format!("2D contours are written as .obj, not {}", out.display())).into());
    }

    let started = Instant::now();
    let grid = eval_grid(&snap.model, &[cfg.grid_res])?;
    let eval_s = started.elapsed().as_secs_f64();
    let level = extract_level_set(&grid, snap.frame.distance_to_model(cfg.iso))?;
    let mut outputs = Outputs::new();
    let summary = match level {
        LevelSet::Mesh(mesh) => {
            let mesh = IsoMesh {
                vertices: mesh
                    .vertices
                    .iter()
                    .map(|v| {
                        let r = snap.frame.to_raw(v);
                        [r[0], r[1], r[2]]
                    })
                    .collect(),
                triangles: mesh.triangles,
            };
            write_mesh(&mesh, &outputs.file(out), mesh_format.expect("3D"))?;
            format!("vertices {} triangles {}", mesh.vertices.len(), mesh.triangles.len())
        }
        LevelSet::Contours(c) => {
            let c = Contours {
                vertices: c
                    .vertices
                    .iter()
                    .map(|v| {
                        let r = snap.frame.to_raw(v);
                        [r[0], r[1]]
                    })
                    .collect(),
                polylines: c.polylines,
            };
            write_contours(&c, &outputs.file(out))?;
            format!("vertices {} polylines {}", c.vertices.len(), c.polylines.len())
        }
    };
    if let Some(g) = &cfg.grid_out {
        let header = polysdf::recon::export::header_path(g);
        outputs.file(&header);
        write_grid(&raw_grid(&grid, &snap.frame)?, &outputs.file(g), GridDtype::Float32)?;
    }
    outputs.commit();
    Ok(format!("grid {}^{dim} eval_s {eval_s:.3} {summary}\n", cfg.grid_res))
}

/// Ground truth given in raw units, seen in model units.
struct FramedTruth<'a> {
    inner: &'a dyn GroundTruth,
    frame: &'a DomainTransform,
}

impl GroundTruth for FramedTruth<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn signed_distance(&self, p: &[f64]) -> polysdf::Result<(f64, Vec<f64>)> {
        let (s, g) = self.inner.signed_distance(&self.frame.to_raw(p))?;
        Ok((self.frame.distance_to_model(s), g))
    }
}

/// Metrics in model units on `eval_points` points, half uniform in the
/// domain and half in the |s| < 0.05 shell.
pub fn eval(cfg: &RunConfig) -> Result<String, CliError> {
    let model_path = required(&cfg.model, "model", "eval")?;
    let snap = Snapshot::load(model_path)?;
    let truth: Box<dyn GroundTruth> = match (&cfg.mesh, &cfg.sphere) {
        (Some(m), None) => Box::new(load_mesh(m, MeshFormat::from_path(m)?)?.mesh),
        (None, Some(s)) if s.len() >= 2 => {
            let (c, r) = s.split_at(s.len() - 1);
            Box::new(Sphere::new(c.to_vec(), r[0])?)
        }
        (None, Some(_)) => return Err(CliError::Config("sphere needs center coordinates and a radius".into())),
        (Some(_), Some(_)) => return Err(CliError::Config("eval takes --mesh or --sphere, not both".into())),
        (None, None) => return Err(CliError::Config("eval needs --mesh or --sphere".into())),
    };
    if truth.dim() != snap.model.dim() {
        return Err(Error::DimensionMismatch { expected: snap.model.dim(), actual: truth.dim() }.into());
    }
    let framed = FramedTruth { inner: truth.as_ref(), frame: &snap.frame };
    let shell_n = cfg.eval_points / 2;
    let mut points = oracle::uniform_points(snap.model.config(), cfg.eval_points - shell_n, cfg.seed);
    points.extend(oracle::shell_points(&framed, snap.model.config(), shell_n, NEAR_THRESHOLD, cfg.seed.wrapping_add(1))?);
    let report = oracle::evaluate(&snap.model, &framed, &points)?;
    if let Some(out) = &cfg.output {
        write_atomic(out, report.to_json().as_bytes())?;
    }
    Ok(report.to_key_value())
}

pub fn simulate(cfg: &RunConfig) -> Result<String, CliError> {
    let out = required(&cfg.output, "out", "simulate")?;
    let shape = cfg.hidden_shape()?;
    let basis = BasisConfig::unit(cfg.degree, cfg.segments, 2)
        .map_err(|e| CliError::Config(format!("degree/segments: {e}")))?;
    let spec = cfg.regularizer(&basis)?;
    let prior = prior(cfg, &basis)?;
    let sensor = cfg.sensor();
    sensor.validate().map_err(|e| CliError::Config(format!("sensor: {e}")))?;
    let start = AgentState::new(cfg.start, [0.0, 1.0]).map_err(|e| CliError::Config(format!("start: {e}")))?;
    let eval_points = oracle::shell_points(&shape, &basis, cfg.eval_points, NEAR_THRESHOLD, cfg.seed.wrapping_add(1))?;

    let mut outputs = Outputs::new();
    if !out.exists() {
        outputs.dirs.push(out.to_path_buf());
    }
    let episode = run_episode(
        &shape,
        &prior,
        &spec,
        &EpisodeConfig {
            steps: cfg.sim_steps,
            seed: cfg.seed,
            sensor,
            control: cfg.control(),
            start,
            eval_points: eval_points.clone(),
            report_interval: 0,
            snapshot_interval: cfg.snapshot_interval,
            output_dir: Some(out.to_path_buf()),
        },
    )?;
    Snapshot::new(episode.model.clone(), DomainTransform::identity(2))?.save(&outputs.file(&out.join("model.snap")))?;
    let report = oracle::evaluate(&episode.model, &shape, &eval_points)?;
    let times: Vec<f64> = episode.records.iter().map(|r| r.seconds * 1e3).collect();
    let mean_ms = if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 };
    let max_ms = times.iter().cloned().fold(0.0, f64::max);
    let settle = 100.min(episode.records.len());
    let (lo, hi) = episode.records[settle..]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.true_distance), hi.max(r.true_distance)));
    let mut text = format!("steps={}\n", episode.records.len());
    if let Some(h) = &episode.halted {
        text.push_str(&format!("halted={h}\n"));
    }
    if settle < episode.records.len() {
        text.push_str(&format!("true_distance.min_after_100={lo:?}\ntrue_distance.max_after_100={hi:?}\n"));
    }
    text.push_str(&format!("step_ms.mean={mean_ms:.3}\nstep_ms.max={max_ms:.3}\n"));
    text.push_str(&report.to_key_value());
    write_atomic(&outputs.file(&out.join("report.txt")), text.as_bytes())?;
    write_atomic(&outputs.file(&out.join("report.json")), report.to_json().as_bytes())?;
    outputs.commit();
    Ok(text)
}
