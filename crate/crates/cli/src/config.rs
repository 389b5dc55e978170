//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags. Every key can be given either way; flags use dashes where keys use
//! underscores (`--lambda-d` / `lambda_d`).

use std::fmt;
use std::path::{Path, PathBuf};

use polysdf::solver::DEFAULT_RAY_EXTENT_FRACTION;
use polysdf::survey::{ControlParams, HiddenShape, SensorConfig};
use polysdf::{BasisConfig, RegularizerSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub degree: usize,
    pub segments: usize,
    pub dim: usize,
    pub margin: f64,

    pub lambda_d: f64,
    pub lambda_g: f64,
    pub lambda_t: f64,
    pub sigma2: f64,
    pub tension_points: usize,
    /// Model units; `None` means a fixed fraction of the domain diagonal.
    pub ray_extent: Option<f64>,

    /// Model units; `None` means the domain center.
    pub prior_center: Option<Vec<f64>>,
    pub prior_radius: f64,
    pub prior_strength: f64,

    pub batch_size: usize,
    pub stream: bool,
    pub seed: u64,
    pub grid_res: usize,
    pub iso: f64,
    pub eval_points: usize,
    /// Raw-space box `lo.. hi..` fixing the model frame instead of the data bounds.
    pub domain: Option<Vec<f64>>,

    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
    pub grid_out: Option<PathBuf>,
    pub points: Vec<Vec<f64>>,
    /// Analytic sphere ground truth `center.. radius`, raw units.
    pub sphere: Option<Vec<f64>>,

    pub shape: String,
    /// Agent start position; heading starts along +y.
    pub start: [f64; 2],
    pub sim_steps: usize,
    pub target_distance: f64,
    pub gain_t: f64,
    pub gain_n: f64,
    pub step_size: f64,
    pub sensor_rays: usize,
    pub sensor_fov: f64,
    pub sensor_range: f64,
    pub sensor_noise: f64,
    pub snapshot_interval: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let control = ControlParams::default();
        let sensor = SensorConfig::default();
        Self {
            degree: 3,
            segments: 4,
            dim: 3,
            margin: 0.25,
            lambda_d: 1.0,
            lambda_g: 1.0,
            lambda_t: 0.05,
            sigma2: 1e-4,
            tension_points: 4,
            ray_extent: None,
            prior_center: None,
            prior_radius: 0.25,
            prior_strength: 100.0,
            batch_size: 1,
            stream: false,
            seed: 0,
            grid_res: 64,
            iso: 0.0,
            eval_points: 2000,
            domain: None,
            input: None,
            output: None,
            model: None,
            mesh: None,
            grid_out: None,
            points: Vec::new(),
            sphere: None,
            shape: "circle 0.5 0.5 0.2".into(),
            start: [0.8, 0.5],
            sim_steps: 500,
            target_distance: control.target_distance,
            gain_t: control.k_t,
            gain_n: control.k_n,
            step_size: control.step,
            sensor_rays: sensor.rays,
            sensor_fov: sensor.fov.to_degrees(),
            sensor_range: sensor.max_range,
            sensor_noise: sensor.noise_sigma,
            snapshot_interval: 100,
        }
    }
}

/// Every recognised key with its help text (default in brackets).
pub const KEYS: &[(&str, &str)] = &[
    ("degree", "polynomial degree K per segment [3]"),
    ("segments", "segments S per axis [4]"),
    ("dim", "input dimension D: 2 or 3 [3]"),
    ("margin", "bounding-box margin fraction when fitting the model frame [0.25]"),
    ("lambda_d", "distance-term weight [1]"),
    ("lambda_g", "gradient-term weight [1]"),
    ("lambda_t", "tension-term weight [0.05]"),
    ("sigma2", "measurement noise variance [1e-4]"),
    ("tension_points", "tension points per sample along the normal ray [4]"),
    ("ray_extent", "normal-ray half-length, model units [0.35 x domain diagonal]"),
    ("prior_center", "spherical prior center, model units [domain center]"),
    ("prior_radius", "spherical prior radius, model units [0.25]"),
    ("prior_strength", "prior precision rho [100]"),
    ("batch_size", "samples per update in streaming fit and in update [1]"),
    ("stream", "fit by sequential updates, printing per-batch latency [false]"),
    ("seed", "seed for evaluation points and simulation [0]"),
    ("grid_res", "nodes per axis for reconstruct [64]"),
    ("iso", "level to extract, raw units [0]"),
    ("eval_points", "evaluation points for eval and simulate [2000]"),
    ("domain", "raw bounding box lo.. hi.. used to fit the frame [data bounds]"),
    ("in", "input point cloud (.xyz/.txt/.pts/.ply)"),
    ("out", "output path (snapshot, mesh, report or directory)"),
    ("model", "model snapshot to read"),
    ("mesh", "ground-truth mesh for eval (.obj/.ply)"),
    ("grid_out", "raw grid output for reconstruct"),
    ("point", "query point, repeatable"),
    ("sphere", "analytic ground truth for eval: center.. radius, raw units"),
    ("shape", "hidden shape for simulate: circle cx cy r | capsule ax ay bx by r | polygon x y ... [circle 0.5 0.5 0.2]"),
    ("start", "agent start position for simulate [0.8 0.5]"),
    ("sim_steps", "simulation steps [500]"),
    ("target_distance", "standoff distance d* [0.1]"),
    ("gain_t", "tangential gain [1]"),
    ("gain_n", "normal gain [5]"),
    ("step_size", "integration step h [0.01]"),
    ("sensor_rays", "rays per scan [16]"),
    ("sensor_fov", "sensor field of view, degrees [60]"),
    ("sensor_range", "sensor range [0.4]"),
    ("sensor_noise", "range noise standard deviation [0.001]"),
    ("snapshot_interval", "simulate snapshot period in steps, 0 disables [100]"),
];

/// Where a setting came from, for error messages.
#[derive(Debug, Clone)]
pub enum Origin<'a> {
    File(&'a Path, usize),
    Flag,
}

impl fmt::Display for Origin<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File(p, line) => write!(f, "{}:{line}", p.display()),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

fn parse_list(value: &str) -> Option<Vec<f64>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect()
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), CliError> {
        let value = value.trim();
        let bad = |what: &str| CliError::Config(format!("{origin}: {key} = '{value}': expected {what}"));
        macro_rules! num {
            ($t:ty, $what:expr) => {
                value.parse::<$t>().map_err(|_| bad($what))?
            };
        }
        let list = || parse_list(value).ok_or_else(|| bad("a list of numbers"));
        let path = || {
            if value.is_empty() {
                Err(bad("a path"))
            } else {
                Ok(Some(PathBuf::from(value)))
            }
        };
        match key {
            "degree" => self.degree = num!(usize, "an integer"),
            "segments" => self.segments = num!(usize, "an integer"),
            "dim" => self.dim = num!(usize, "an integer"),
            "margin" => self.margin = num!(f64, "a number"),
            "lambda_d" => self.lambda_d = num!(f64, "a number"),
            "lambda_g" => self.lambda_g = num!(f64, "a number"),
            "lambda_t" => self.lambda_t = num!(f64, "a number"),
            "sigma2" => self.sigma2 = num!(f64, "a number"),
            "tension_points" => self.tension_points = num!(usize, "an integer"),
            "ray_extent" => self.ray_extent = Some(num!(f64, "a number")),
            "prior_center" => self.prior_center = Some(list()?),
            "prior_radius" => self.prior_radius = num!(f64, "a number"),
            "prior_strength" => self.prior_strength = num!(f64, "a number"),
            "batch_size" => self.batch_size = num!(usize, "an integer"),
            "stream" => self.stream = num!(bool, "true or false"),
            "seed" => self.seed = num!(u64, "a non-negative integer"),
            "grid_res" => self.grid_res = num!(usize, "an integer"),
            "iso" => self.iso = num!(f64, "a number"),
            "eval_points" => self.eval_points = num!(usize, "an integer"),
            "domain" => self.domain = Some(list()?),
            "in" => self.input = path()?,
            "out" => self.output = path()?,
            "model" => self.model = path()?,
            "mesh" => self.mesh = path()?,
            "grid_out" => self.grid_out = path()?,
            "point" => self.points.push(list()?),
            "sphere" => self.sphere = Some(list()?),
            "shape" => self.shape = value.to_string(),
            "start" => match list()?.as_slice() {
                &[x, y] => self.start = [x, y],
                _ => return Err(bad("two numbers")),
            },
            "sim_steps" => self.sim_steps = num!(usize, "an integer"),
            "target_distance" => self.target_distance = num!(f64, "a number"),
            "gain_t" => self.gain_t = num!(f64, "a number"),
            "gain_n" => self.gain_n = num!(f64, "a number"),
            "step_size" => self.step_size = num!(f64, "a number"),
            "sensor_rays" => self.sensor_rays = num!(usize, "an integer"),
            "sensor_fov" => self.sensor_fov = num!(f64, "a number (degrees)"),
            "sensor_range" => self.sensor_range = num!(f64, "a number"),
            "sensor_noise" => self.sensor_noise = num!(f64, "a number"),
            "snapshot_interval" => self.snapshot_interval = num!(usize, "an integer"),
            other => {
                return Err(CliError::Config(format!("{origin}: unknown configuration key '{other}'")));
            }
        }
        Ok(())
    }

    /// Applies a `key = value` file on top of `self`.
    pub fn apply_file_text(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::File(path, i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}: expected 'key = value', found '{line}'")))?;
            self.set(key.trim(), value, &origin)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        self.apply_file_text(path, &text)
    }

    pub fn basis(&self) -> Result<BasisConfig, CliError> {
        BasisConfig::unit(self.degree, self.segments, self.dim)
            .map_err(|e| CliError::Config(format!("degree/segments/dim: {e}")))
    }

    pub fn regularizer(&self, basis: &BasisConfig) -> Result<RegularizerSpec, CliError> {
        let spec = RegularizerSpec {
            lambda_d: self.lambda_d,
            lambda_g: self.lambda_g,
            lambda_t: self.lambda_t,
            sigma2: self.sigma2,
            tension_points: self.tension_points,
            ray_extent: self.ray_extent.unwrap_or(DEFAULT_RAY_EXTENT_FRACTION * basis.diagonal()),
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn prior_center_for(&self, basis: &BasisConfig) -> Result<Vec<f64>, CliError> {
        match &self.prior_center {
            None => Ok(basis.center()),
            Some(c) if c.len() == basis.dim() => Ok(c.clone()),
            Some(c) => Err(CliError::Config(format!(
                "prior_center has {} components, dim is {}",
                c.len(),
                basis.dim()
            ))),
        }
    }

    pub fn sensor(&self) -> SensorConfig {
        SensorConfig {
            rays: self.sensor_rays,
            fov: self.sensor_fov.to_radians(),
            max_range: self.sensor_range,
            noise_sigma: self.sensor_noise,
            ..SensorConfig::default()
        }
    }

    pub fn control(&self) -> ControlParams {
        ControlParams { target_distance: self.target_distance, k_t: self.gain_t, k_n: self.gain_n, step: self.step_size }
    }

    pub fn hidden_shape(&self) -> Result<HiddenShape, CliError> {
        let mut tokens = self.shape.split_whitespace();
        let kind = tokens.next().unwrap_or("");
        let nums = parse_list(&tokens.collect::<Vec<_>>().join(" "))
            .ok_or_else(|| CliError::Config(format!("shape = '{}': bad number", self.shape)))?;
        let bad = || CliError::Config(format!("shape = '{}': wrong number of values for '{kind}'", self.shape));
        let shape = match kind {
            "circle" if nums.len() == 3 => HiddenShape::circle([nums[0], nums[1]], nums[2]),
            "capsule" if nums.len() == 5 => HiddenShape::capsule([nums[0], nums[1]], [nums[2], nums[3]], nums[4]),
            "polygon" if nums.len() >= 6 && nums.len() % 2 == 0 => {
                HiddenShape::polygon(nums.chunks(2).map(|c| [c[0], c[1]]).collect())
            }
            "circle" | "capsule" | "polygon" => return Err(bad()),
            other => {
                return Err(CliError::Config(format!(
                    "shape: unknown kind '{other}' (expected circle, capsule or polygon)"
                )))
            }
        };
        shape.map_err(|e| CliError::Config(format!("shape: {e}")))
    }

    /// Validates the settings every command depends on.
    pub fn validate(&self) -> Result<(), CliError> {
        let basis = self.basis()?;
        self.regularizer(&basis)?;
        if !(0.0..0.5).contains(&self.margin) {
            return Err(CliError::Config(format!("margin = {}: must lie in [0, 0.5)", self.margin)));
        }
        if !(self.prior_radius.is_finite() && self.prior_radius > 0.0) {
            return Err(CliError::Config(format!("prior_radius = {}: must be > 0", self.prior_radius)));
        }
        if !(self.prior_strength.is_finite() && self.prior_strength > 0.0) {
            return Err(CliError::Config(format!("prior_strength = {}: must be > 0", self.prior_strength)));
        }
        self.prior_center_for(&basis)?;
        if self.grid_res < 2 {
            return Err(CliError::Config(format!("grid_res = {}: must be >= 2", self.grid_res)));
        }
        if let Some(d) = &self.domain {
            if d.len() != 2 * self.dim {
                return Err(CliError::Config(format!(
                    "domain needs {} values (lo per axis, then hi per axis), got {}",
                    2 * self.dim,
                    d.len()
                )));
            }
        }
        Ok(())
    }
}
