//! Planar surface-following simulation.
//!
//! An agent circles a hidden shape at a target distance, steering by the
//! gradient of the *learned* field, while a simulated range sensor feeds
//! surface samples back into that field.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::ingest::DomainTransform;
use crate::oracle::{self, GroundTruth, MetricsReport};
use crate::snapshot::{write_atomic, Snapshot};
use crate::solver::{self, RegularizerSpec, SurfaceSample};

type P2 = [f64; 2];

const TRACE_EPS: f64 = 1e-12;
const TRACE_MAX_ITERS: usize = 10_000;
/// Gradient norm below which the field is treated as flat.
pub const VANISHING_GRADIENT: f64 = 1e-8;

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: P2) -> f64 {
    dot(a, a).sqrt()
}

fn rotate(v: P2, angle: f64) -> P2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Counter-clockwise quarter turn.
pub fn rot90(v: P2) -> P2 {
    [-v[1], v[0]]
}

fn closest_on_segment(p: P2, a: P2, b: P2) -> P2 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

/// Closed planar shape with an exact signed distance.
#[derive(Debug, Clone, PartialEq)]
pub enum HiddenShape {
    Circle { center: P2, radius: f64 },
    /// Points within `radius` of the segment `a`–`b`.
    Capsule { a: P2, b: P2, radius: f64 },
    /// Simple polygon, vertices in either winding.
    Polygon { vertices: Vec<P2> },
}

impl HiddenShape {
    pub fn circle(center: P2, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!("circle radius must be > 0, got {radius}")));
        }
        Ok(Self::Circle { center, radius })
    }

    pub fn capsule(a: P2, b: P2, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) || a == b {
            return Err(Error::InvalidArgument("capsule needs radius > 0 and distinct endpoints".into()));
        }
        Ok(Self::Capsule { a, b, radius })
    }

    pub fn polygon(vertices: Vec<P2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("polygon needs at least three vertices".into()));
        }
        Ok(Self::Polygon { vertices })
    }

    /// Exact signed distance (negative inside) and its unit gradient.
    pub fn sdf(&self, p: P2) -> (f64, P2) {
        let radial = |q: P2, r: f64| {
            let d = sub(p, q);
            let n = norm(d);
            let g = if n > 0.0 { [d[0] / n, d[1] / n] } else { [1.0, 0.0] };
            (n - r, g)
        };
        match self {
            Self::Circle { center, radius } => radial(*center, *radius),
            Self::Capsule { a, b, radius } => radial(closest_on_segment(p, *a, *b), *radius),
            Self::Polygon { vertices } => {
                let n = vertices.len();
                let mut best = (f64::INFINITY, p);
                let mut inside = false;
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    let q = closest_on_segment(p, a, b);
                    let d = norm(sub(p, q));
                    if d < best.0 {
                        best = (d, q);
                    }
                    if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]) {
                        inside = !inside;
                    }
                }
                let sign = if inside { -1.0 } else { 1.0 };
                let (d, q) = best;
                let g = if d > 0.0 {
                    let v = sub(p, q);
                    [sign * v[0] / d, sign * v[1] / d]
                } else {
                    [1.0, 0.0]
                };
                (sign * d, g)
            }
        }
    }

    /// First hit along `origin + t·dir`, `0 < t ≤ max_range`: (t, point,
    /// outward normal). Rays starting inside the shape return `None`.
    pub fn raycast(&self, origin: P2, dir: P2, max_range: f64) -> Option<(f64, P2, P2)> {
        let l = norm(dir);
        let dir = [dir[0] / l, dir[1] / l];
        let at = |t: f64| [origin[0] + t * dir[0], origin[1] + t * dir[1]];
        if self.sdf(origin).0 < 0.0 {
            return None;
        }
        let t = match self {
            Self::Circle { center, radius } => {
                let oc = sub(origin, *center);
                let b = dot(oc, dir);
                let c = dot(oc, oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                if t < 0.0 {
                    return None;
                }
                t
            }
            _ => {
                let mut t = 0.0;
                let mut hit = None;
                for _ in 0..TRACE_MAX_ITERS {
                    let s = self.sdf(at(t)).0;
                    if s < TRACE_EPS {
                        hit = Some(t);
                        break;
                    }
                    t += s;
                    if t > max_range {
                        break;
                    }
                }
                hit?
            }
        };
        if t > max_range {
            return None;
        }
        let p = at(t);
        Some((t, p, self.sdf(p).1))
    }
}

impl GroundTruth for HiddenShape {
    fn dim(&self) -> usize {
        2
    }

    fn signed_distance(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        if p.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, actual: p.len() });
        }
        let (s, g) = self.sdf([p[0], p[1]]);
        Ok((s, g.to_vec()))
    }
}

/// Anything the controller can steer by.
pub trait DistanceField {
    fn value_and_gradient(&self, p: P2) -> Result<(f64, P2)>;
}

impl DistanceField for FieldModel {
    fn value_and_gradient(&self, p: P2) -> Result<(f64, P2)> {
        let q = self.query(&p)?;
        if q.gradient.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, actual: q.gradient.len() });
        }
        Ok((q.distance, [q.gradient[0], q.gradient[1]]))
    }
}

impl DistanceField for HiddenShape {
    fn value_and_gradient(&self, p: P2) -> Result<(f64, P2)> {
        Ok(self.sdf(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: P2,
    /// Unit direction of travel.
    pub heading: P2,
    pub step: usize,
}

impl AgentState {
    pub fn new(position: P2, heading: P2) -> Result<Self> {
        let n = norm(heading);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument("agent heading must be non-zero".into()));
        }
        Ok(Self { position, heading: [heading[0] / n, heading[1] / n], step: 0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub rays: usize,
    /// Full cone angle, radians.
    pub fov: f64,
    pub max_range: f64,
    /// Standard deviation of the isotropic position noise on each hit.
    pub noise_sigma: f64,
    /// Sensor axis relative to the heading, radians counter-clockwise.
    pub mount_angle: f64,
}

impl Default for SensorConfig {
    /// Side-looking sensor: the axis is the heading turned a quarter turn
    /// counter-clockwise, which faces the surface when circling it
    /// counter-clockwise.
    fn default() -> Self {
        Self {
            rays: 16,
            fov: 60f64.to_radians(),
            max_range: 0.4,
            noise_sigma: 1e-3,
            mount_angle: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rays == 0 {
            return Err(Error::InvalidConfig("sensor needs at least one ray".into()));
        }
        if !(self.fov.is_finite() && self.fov >= 0.0 && self.max_range > 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("sensor fov, range and noise must be non-negative (range > 0)".into()));
        }
        Ok(())
    }

    /// Unit ray directions for an agent with `heading`.
    pub fn ray_directions(&self, heading: P2) -> Vec<P2> {
        let axis = rotate(heading, self.mount_angle);
        if self.rays == 1 {
            return vec![axis];
        }
        (0..self.rays)
            .map(|i| rotate(axis, -self.fov / 2.0 + self.fov * i as f64 / (self.rays - 1) as f64))
            .collect()
    }
}

/// Simulated range scan. Hits are perturbed by Gaussian noise and keep the
/// exact shape normal; hits landing outside `domain` are dropped.
pub fn sense<R: Rng>(
    shape: &HiddenShape,
    agent: &AgentState,
    sensor: &SensorConfig,
    domain: &BasisConfig,
    rng: &mut R,
) -> Vec<SurfaceSample> {
    let mut out = Vec::new();
    for dir in sensor.ray_directions(agent.heading) {
        let Some((_, p, n)) = shape.raycast(agent.position, dir, sensor.max_range) else { continue };
        let noisy = if sensor.noise_sigma > 0.0 {
            let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            [p[0] + sensor.noise_sigma * e[0], p[1] + sensor.noise_sigma * e[1]]
        } else {
            p
        };
        if !domain.contains(&noisy) {
            continue;
        }
        out.push(SurfaceSample::new(noisy.to_vec(), n.to_vec()).expect("unit shape normal"));
    }
    out
}

/// [`sense`] with a fresh generator seeded by `seed`.
pub fn sense_seeded(
    shape: &HiddenShape,
    agent: &AgentState,
    sensor: &SensorConfig,
    domain: &BasisConfig,
    seed: u64,
) -> Vec<SurfaceSample> {
    sense(shape, agent, sensor, domain, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub target_distance: f64,
    pub k_t: f64,
    pub k_n: f64,
    pub step: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self { target_distance: 0.1, k_t: 1.0, k_n: 5.0, step: 0.01 }
    }
}

/// One tangential step with proportional correction toward the
/// `target_distance` level set of `field`, clamped to `domain`.
pub fn control_step(
    field: &dyn DistanceField,
    agent: &AgentState,
    params: &ControlParams,
    domain: &BasisConfig,
) -> Result<AgentState> {
    let (f, grad) = field.value_and_gradient(agent.position)?;
    let gn = norm(grad);
    if gn.is_nan() || gn < VANISHING_GRADIENT {
        return Err(Error::VanishingGradient(gn));
    }
    let g = [grad[0] / gn, grad[1] / gn];
    let t = rot90(g);
    let radial = params.k_n * (f - params.target_distance);
    let v = [params.k_t * t[0] - radial * g[0], params.k_t * t[1] - radial * g[1]];
    let moved = [agent.position[0] + params.step * v[0], agent.position[1] + params.step * v[1]];
    let clamped = domain.clamp(&moved);
    let speed = norm(v);
    let heading = if speed > 0.0 { [v[0] / speed, v[1] / speed] } else { agent.heading };
    Ok(AgentState { position: [clamped[0], clamped[1]], heading, step: agent.step + 1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub steps: usize,
    pub seed: u64,
    pub sensor: SensorConfig,
    pub control: ControlParams,
    pub start: AgentState,
    /// Points scored against the exact shape every step.
    pub eval_points: Vec<Vec<f64>>,
    /// Full metrics every this many steps (0 disables).
    pub report_interval: usize,
    /// Model snapshots every this many steps into `output_dir` (0 disables).
    pub snapshot_interval: usize,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub position: P2,
    /// Learned field value at the agent before the step.
    pub f: f64,
    pub grad_norm: f64,
    /// Mean |f − s| over the evaluation points after this step's update.
    pub mae_near: f64,
    /// Exact shape distance at the agent after the step.
    pub true_distance: f64,
    pub hits: usize,
    /// Sense + ingest + control wall time, seconds.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub records: Vec<StepRecord>,
    pub model: FieldModel,
    pub final_agent: AgentState,
    pub reports: Vec<(usize, MetricsReport)>,
    /// Set when the loop stopped early on a vanishing gradient.
    pub halted: Option<String>,
}

impl Episode {
    /// Text log: `step x y f |∇f| mae_near` per record.
    pub fn trajectory_log(&self) -> String {
        let mut out = String::from("# step x y f |grad f| mae_near\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{} {:?} {:?} {:?} {:?} {:?}",
                r.step, r.position[0], r.position[1], r.f, r.grad_norm, r.mae_near
            );
        }
        out
    }
}

fn mean_abs_error(model: &FieldModel, shape: &HiddenShape, points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let errs = oracle::point_errors(model, shape, points)?;
    Ok(errs.iter().map(|e| e.mae).sum::<f64>() / errs.len() as f64)
}

/// Sense → ingest → control loop. Deterministic for a fixed configuration.
pub fn run_episode(
    shape: &HiddenShape,
    prior: &FieldModel,
    spec: &RegularizerSpec,
    config: &EpisodeConfig,
) -> Result<Episode> {
    if prior.dim() != 2 {
        return Err(Error::InvalidConfig("the survey runs on two-dimensional models".into()));
    }
    spec.validate()?;
    config.sensor.validate()?;
    let domain = prior.config().clone();
    if !domain.contains(&config.start.position) {
        return Err(Error::InvalidConfig("agent starts outside the domain".into()));
    }
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = prior.clone();
    let mut agent = config.start;
    let mut records = Vec::with_capacity(config.steps);
    let mut reports = Vec::new();
    let mut halted = None;

    for _ in 0..config.steps {
        let started = Instant::now();
        let samples = sense(shape, &agent, &config.sensor, &domain, &mut rng);
        if !samples.is_empty() {
            solver::ingest(&mut model, &samples, spec)?;
        }
        let (f, grad) = model.value_and_gradient(agent.position)?;
        let next = match control_step(&model, &agent, &config.control, &domain) {
            Ok(next) => next,
            Err(Error::VanishingGradient(g)) => {
                halted = Some(format!("vanishing gradient {g:e} at step {}", agent.step));
                break;
            }
            Err(e) => return Err(e),
        };
        let seconds = started.elapsed().as_secs_f64();
        agent = next;
        records.push(StepRecord {
            step: agent.step,
            position: agent.position,
            f,
            grad_norm: norm(grad),
            mae_near: mean_abs_error(&model, shape, &config.eval_points)?,
            true_distance: shape.sdf(agent.position).0,
            hits: samples.len(),
            seconds,
        });
        if config.report_interval > 0 && agent.step.is_multiple_of(config.report_interval) {
            reports.push((agent.step, oracle::evaluate(&model, shape, &config.eval_points)?));
        }
        if let (Some(dir), true) = (&config.output_dir, config.snapshot_interval > 0) {
            if agent.step.is_multiple_of(config.snapshot_interval) {
                let snap = Snapshot::new(model.clone(), DomainTransform::identity(2))?;
                snap.save(&dir.join(format!("snapshot_{:06}.snap", agent.step)))?;
            }
        }
    }
    if let Some(msg) = &halted {
        log::warn!("episode halted: {msg}");
    }
    let episode = Episode { records, model, final_agent: agent, reports, halted };
    if let Some(dir) = &config.output_dir {
        write_atomic(&dir.join("trajectory.txt"), episode.trajectory_log().as_bytes())?;
    }
    Ok(episode)
}
