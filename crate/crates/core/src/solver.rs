//! Cost assembly, batch ridge fitting and the recursive least-squares update.
//!
//! Each surface sample contributes a distance row `λd Ψ(x)` with target 0,
//! `D` gradient rows `λg ∂Ψ/∂x_d` with targets `λg g_d`, and for every
//! tension point on its normal ray the rows `λt ∂²Ψ/∂x_i²` and
//! `√2 λt ∂²Ψ/∂x_i∂x_j` (`i < j`) with target 0. The √2 on the mixed rows
//! makes the squared row norm equal the squared Frobenius norm of the Hessian.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::field::{accumulate_normal, FeatureRow, FieldModel, TensorBasis};

/// One training observation: a surface point and its unit outward normal.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub position: Vec<f64>,
    pub normal: Vec<f64>,
}

impl SurfaceSample {
    /// Builds a sample, rescaling `normal` to unit length.
    pub fn new(position: Vec<f64>, normal: Vec<f64>) -> Result<Self> {
        if position.len() != normal.len() {
            return Err(Error::DimensionMismatch { expected: position.len(), actual: normal.len() });
        }
        if position.iter().chain(&normal).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample coordinates must be finite".into()));
        }
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= f64::MIN_POSITIVE {
            return Err(Error::InvalidArgument("sample normal has zero length".into()));
        }
        Ok(Self { position, normal: normal.iter().map(|v| v / norm).collect() })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }
}

/// Cost weights, measurement noise and tension control-point policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerSpec {
    pub lambda_d: f64,
    pub lambda_g: f64,
    pub lambda_t: f64,
    pub sigma2: f64,
    /// Tension points per sample.
    pub tension_points: usize,
    /// Half-length of the normal-ray span, world units.
    pub ray_extent: f64,
}

/// Default ray half-length as a fraction of the domain diagonal.
pub const DEFAULT_RAY_EXTENT_FRACTION: f64 = 0.35;

impl RegularizerSpec {
    /// Shipped defaults with the ray extent scaled to `config`'s domain.
    pub fn defaults_for(config: &BasisConfig) -> Self {
        Self {
            lambda_d: 1.0,
            lambda_g: 1.0,
            lambda_t: 0.05,
            sigma2: 1e-4,
            tension_points: 4,
            ray_extent: DEFAULT_RAY_EXTENT_FRACTION * config.diagonal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg("lambda_d", self.lambda_d)?;
        nonneg("lambda_g", self.lambda_g)?;
        nonneg("lambda_t", self.lambda_t)?;
        if self.lambda_d == 0.0 && self.lambda_g == 0.0 {
            return Err(Error::InvalidConfig("lambda_d or lambda_g must be positive".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if self.tension_points > 0 && !(self.ray_extent.is_finite() && self.ray_extent > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ray_extent must be > 0 when tension points are used, got {}",
                self.ray_extent
            )));
        }
        Ok(())
    }
}

/// Stacked sparse system `A w ≈ s`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SystemRows {
    pub rows: Vec<FeatureRow>,
    pub targets: Vec<f64>,
}

impl SystemRows {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: FeatureRow, target: f64) {
        self.rows.push(row);
        self.targets.push(target);
    }

    pub fn extend(&mut self, other: SystemRows) {
        self.rows.extend(other.rows);
        self.targets.extend(other.targets);
    }

    pub fn dense(&self, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(self.rows.len(), n);
        for (r, row) in self.rows.iter().enumerate() {
            for (&i, &v) in row.indices.iter().zip(&row.values) {
                a[(r, i)] += v;
            }
        }
        (a, DVector::from_column_slice(&self.targets))
    }

    pub fn residual(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().zip(&self.targets).map(|(r, &t)| t - r.dot(w)),
        )
    }
}

/// Offsets along the normal ray for `count` tension points.
///
/// `ceil(count / 2)` points sit at `e j / n₊` on the positive side and
/// `floor(count / 2)` at `-e j / n₋` on the negative side, so even counts give
/// the uniform span of `[-e, e]` with the origin removed.
pub fn tension_offsets(count: usize, extent: f64) -> Vec<f64> {
    let pos = count.div_ceil(2);
    let neg = count / 2;
    let mut out = Vec::with_capacity(count);
    for j in (1..=neg).rev() {
        out.push(-extent * j as f64 / neg as f64);
    }
    for j in 1..=pos {
        out.push(extent * j as f64 / pos as f64);
    }
    out
}

/// Control points on the sample's normal ray, clipped to the domain.
pub fn tension_points(
    sample: &SurfaceSample,
    spec: &RegularizerSpec,
    config: &BasisConfig,
) -> Vec<Vec<f64>> {
    tension_offsets(spec.tension_points, spec.ray_extent)
        .into_iter()
        .map(|t| sample.position.iter().zip(&sample.normal).map(|(p, g)| p + t * g).collect::<Vec<_>>())
        .filter(|p| config.contains(p))
        .collect()
}

fn check_sample(sample: &SurfaceSample, config: &BasisConfig) -> Result<()> {
    if sample.dim() != config.dim() {
        return Err(Error::DimensionMismatch { expected: config.dim(), actual: sample.dim() });
    }
    config.check_point(&sample.position)
}

/// Rows for a batch of samples and their tension points.
pub fn assemble_rows(
    samples: &[SurfaceSample],
    spec: &RegularizerSpec,
    basis: &TensorBasis,
) -> Result<SystemRows> {
    let config = basis.config();
    let mut sys = SystemRows::default();
    for sample in samples {
        check_sample(sample, config)?;
        if spec.lambda_d > 0.0 || spec.lambda_g > 0.0 {
            let (value, grads) = basis.value_and_gradient_rows(&sample.position)?;
            if spec.lambda_d > 0.0 {
                sys.push(value.scaled(spec.lambda_d), 0.0);
            }
            if spec.lambda_g > 0.0 {
                for (g, &n) in grads.into_iter().zip(&sample.normal) {
                    sys.push(g.scaled(spec.lambda_g), spec.lambda_g * n);
                }
            }
        }
        if spec.lambda_t > 0.0 && spec.tension_points > 0 {
            for point in tension_points(sample, spec, config) {
                for (i, j, row) in basis.second_derivative_rows(&point)? {
                    let factor = if i == j { spec.lambda_t } else { SQRT_2 * spec.lambda_t };
                    sys.push(row.scaled(factor), 0.0);
                }
            }
        }
    }
    Ok(sys)
}

/// Bayesian batch solution seeded by `prior`.
///
/// Solves `(AᵀA + σ² P₀) w = Aᵀs + σ² P₀ w₀` and returns the posterior with
/// precision `P₀ + AᵀA / σ²`.
pub fn batch_fit(samples: &[SurfaceSample], spec: &RegularizerSpec, prior: &FieldModel) -> Result<FieldModel> {
    spec.validate()?;
    if samples.is_empty() {
        return Ok(prior.clone());
    }
    let rows = assemble_rows(samples, spec, prior.basis())?;
    batch_solve(&rows, spec.sigma2, prior)
}

/// Batch posterior for already assembled rows.
pub fn batch_solve(rows: &SystemRows, sigma2: f64, prior: &FieldModel) -> Result<FieldModel> {
    if rows.is_empty() {
        return Ok(prior.clone());
    }
    let n = prior.param_count();
    let prior_precision = prior.precision()?;
    let mut normal = &prior_precision * sigma2;
    let mut rhs = &normal * prior.weights();
    for (row, &t) in rows.rows.iter().zip(&rows.targets) {
        accumulate_normal(&mut normal, &mut rhs, row, t);
    }
    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("batch normal equations are not positive definite".into()))?;
    let weights = chol.solve(&rhs);
    let mut covariance = chol.inverse() * sigma2;
    symmetrize(&mut covariance);
    debug_assert_eq!(weights.len(), n);
    let mut out = prior.clone();
    out.replace_state(weights, covariance);
    Ok(out)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Recursive least-squares (Kalman) update with the rows of one batch.
///
/// With `Σ` the stored weight covariance:
/// `G = Σ Aᵀ (σ² I + A Σ Aᵀ)⁻¹`, `Σ ← Σ − G A Σ`, `w ← w + G (s − A w)`.
/// The model is only modified once every step has succeeded.
pub fn rls_update(model: &mut FieldModel, rows: &SystemRows, sigma2: f64) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::Numerical(format!("measurement variance must be > 0, got {sigma2}")));
    }
    let mut weights = model.weights().clone();
    let mut covariance = model.covariance().clone();
    for (block, targets) in rows.rows.chunks(UPDATE_BLOCK).zip(rows.targets.chunks(UPDATE_BLOCK)) {
        update_block(&mut weights, &mut covariance, block, targets, sigma2)?;
    }
    if covariance.iter().chain(weights.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("update produced non-finite values".into()));
    }
    model.replace_state(weights, covariance);
    Ok(())
}

/// Rows per gain solve. Longer batches are applied block by block, which is
/// the same update in exact arithmetic and keeps the solve small.
const UPDATE_BLOCK: usize = 32;

fn update_block(
    weights: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    rows: &[FeatureRow],
    targets: &[f64],
    sigma2: f64,
) -> Result<()> {
    let n = cov.nrows();
    let b = rows.len();

    // Σ Aᵀ gathered from the sparse rows: column r is Σ_j v_j Σ[:, idx_j]
    let mut cov_at = DMatrix::<f64>::zeros(n, b);
    for (r, row) in rows.iter().enumerate() {
        let mut col = cov_at.column_mut(r);
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            col.axpy(v, &cov.column(i), 1.0);
        }
    }
    let mut innovation_cov = DMatrix::<f64>::identity(b, b) * sigma2;
    for (r, row) in rows.iter().enumerate() {
        for c in 0..b {
            let col = cov_at.column(c);
            innovation_cov[(r, c)] += row.indices.iter().zip(&row.values).map(|(&i, &v)| v * col[i]).sum::<f64>();
        }
    }
    symmetrize(&mut innovation_cov);
    let chol = innovation_cov.cholesky().ok_or_else(|| {
        Error::Numerical("innovation covariance is not invertible (corrupted covariance?)".into())
    })?;
    // gain Gᵀ = S⁻¹ (Σ Aᵀ)ᵀ
    let gain_t = chol.solve(&cov_at.transpose());
    let innovation = DVector::from_iterator(b, rows.iter().zip(targets).map(|(r, &t)| t - r.dot(weights)));

    *weights += gain_t.tr_mul(&innovation);
    cov.gemm(-1.0, &cov_at, &gain_t, 1.0);
    symmetrize(cov);
    Ok(())
}

/// Assembles the batch's rows and applies one recursive update.
pub fn ingest(model: &mut FieldModel, samples: &[SurfaceSample], spec: &RegularizerSpec) -> Result<()> {
    spec.validate()?;
    if samples.is_empty() {
        return Ok(());
    }
    let rows = assemble_rows(samples, spec, model.basis())?;
    rls_update(model, &rows, spec.sigma2)
}
