//! Tensor-product features and the learned field model.
//!
//! Features over `D` inputs are Kronecker products of the per-axis rows with
//! axis 0 outermost, so the weight index of the per-axis free indices
//! `(i_0, …, i_{D-1})` is `Σ_d i_d M^(D-1-d)`.

use std::sync::{Arc, RwLock, RwLockReadGuard};

use nalgebra::{DMatrix, DVector};

use crate::basis::{with_axis, AxisBasis, BasisConfig, LocalRow};
use crate::error::{Error, Result};

/// Sparse feature row: `values[i]` multiplies weight `indices[i]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl FeatureRow {
    pub fn dot(&self, w: &DVector<f64>) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| v * w[i]).sum()
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] += v;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Basis of a full `D`-dimensional field: one [`AxisBasis`] per axis.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    config: BasisConfig,
    axes: Vec<AxisBasis>,
}

impl TensorBasis {
    pub fn new(config: BasisConfig) -> Result<Self> {
        let axes = config
            .domain()
            .iter()
            .map(|&iv| AxisBasis::new(config.degree(), config.segments(), iv))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, axes })
    }

    pub fn config(&self) -> &BasisConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    /// Per-axis local rows for derivative orders `0..=max_order`.
    pub(crate) fn axis_rows(&self, x: &[f64], max_order: usize) -> Result<Vec<Vec<LocalRow>>> {
        self.config.check_point(x)?;
        self.axes
            .iter()
            .enumerate()
            .map(|(axis, b)| {
                (0..=max_order)
                    .map(|o| b.local(x[axis], o).map_err(|e| with_axis(e, axis)))
                    .collect()
            })
            .collect()
    }

    pub(crate) fn kron(&self, rows: &[&LocalRow]) -> FeatureRow {
        let m = self.config.free_per_axis();
        let mut indices = vec![0usize];
        let mut values = vec![1.0f64];
        for row in rows {
            let mut ni = Vec::with_capacity(indices.len() * row.values.len());
            let mut nv = Vec::with_capacity(indices.len() * row.values.len());
            for (&i, &v) in indices.iter().zip(&values) {
                for (k, &r) in row.values.iter().enumerate() {
                    ni.push(i * m + row.offset + k);
                    nv.push(v * r);
                }
            }
            indices = ni;
            values = nv;
        }
        FeatureRow { indices, values }
    }

    /// Feature row for per-axis derivative `orders` (each ≤ 2, total ≤ 2).
    pub fn features(&self, x: &[f64], orders: &[usize]) -> Result<FeatureRow> {
        if orders.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: orders.len() });
        }
        if orders.iter().sum::<usize>() > 2 {
            return Err(Error::InvalidArgument(format!(
                "total derivative order must be at most 2, got {orders:?}"
            )));
        }
        let rows = self.axis_rows(x, 2)?;
        let picked: Vec<&LocalRow> = rows.iter().zip(orders).map(|(r, &o)| &r[o]).collect();
        Ok(self.kron(&picked))
    }

    pub fn features_dense(&self, x: &[f64], orders: &[usize]) -> Result<Vec<f64>> {
        Ok(self.features(x, orders)?.to_dense(self.param_count()))
    }

    fn order_vec(&self, axes: &[usize]) -> Vec<usize> {
        let mut o = vec![0; self.dim()];
        for &a in axes {
            o[a] += 1;
        }
        o
    }

    pub(crate) fn rows_for(&self, rows: &[Vec<LocalRow>], orders: &[usize]) -> FeatureRow {
        let picked: Vec<&LocalRow> = rows.iter().zip(orders).map(|(r, &o)| &r[o]).collect();
        self.kron(&picked)
    }

    /// Value row followed by the `D` first-derivative rows.
    pub fn value_and_gradient_rows(&self, x: &[f64]) -> Result<(FeatureRow, Vec<FeatureRow>)> {
        let rows = self.axis_rows(x, 1)?;
        let value = self.rows_for(&rows, &vec![0; self.dim()]);
        let grads = (0..self.dim()).map(|d| self.rows_for(&rows, &self.order_vec(&[d]))).collect();
        Ok((value, grads))
    }

    /// Second-derivative rows `(i, j, row)` for `i <= j`.
    pub fn second_derivative_rows(&self, x: &[f64]) -> Result<Vec<(usize, usize, FeatureRow)>> {
        let rows = self.axis_rows(x, 2)?;
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                out.push((i, j, self.rows_for(&rows, &self.order_vec(&[i, j]))));
            }
        }
        Ok(out)
    }
}

/// Number of superposition weights for `config`.
pub fn param_count(config: &BasisConfig) -> usize {
    config.param_count()
}

/// Distance and gradient of the field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub distance: f64,
    pub gradient: Vec<f64>,
}

/// A learned SDF: weights `w` and the weight covariance `P⁻¹`.
///
/// The recursive update operates on the covariance, so that is what is
/// stored; the precision is recovered on demand by [`FieldModel::precision`].
#[derive(Debug, Clone)]
pub struct FieldModel {
    basis: Arc<TensorBasis>,
    weights: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl PartialEq for FieldModel {
    fn eq(&self, other: &Self) -> bool {
        self.config() == other.config() && self.weights == other.weights && self.covariance == other.covariance
    }
}

impl FieldModel {
    pub fn new(config: BasisConfig, weights: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::with_basis(Arc::new(TensorBasis::new(config)?), weights, covariance)
    }

    pub fn with_basis(
        basis: Arc<TensorBasis>,
        weights: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let n = basis.param_count();
        if weights.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: weights.len() });
        }
        if covariance.shape() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, actual: covariance.nrows() });
        }
        if covariance != covariance.transpose() {
            return Err(Error::InvalidArgument("covariance matrix must be symmetric".into()));
        }
        Ok(Self { basis, weights, covariance })
    }

    /// All weights equal to `value`; prior precision `strength · I`.
    pub fn constant(config: BasisConfig, value: f64, strength: f64) -> Result<Self> {
        check_strength(strength)?;
        let n = config.param_count();
        Self::new(config, DVector::from_element(n, value), DMatrix::identity(n, n) / strength)
    }

    pub fn basis(&self) -> &Arc<TensorBasis> {
        &self.basis
    }

    pub fn config(&self) -> &BasisConfig {
        self.basis.config()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Precision matrix `P = cov(w)⁻¹`, via Cholesky of the covariance.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        self.covariance
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))
    }

    pub fn is_positive_definite(&self) -> bool {
        self.covariance.clone().cholesky().is_some()
    }

    /// Scalars held by the model besides its config: `N_w + N_w²`.
    pub fn state_len(&self) -> usize {
        self.weights.len() + self.covariance.len()
    }

    pub(crate) fn replace_state(&mut self, weights: DVector<f64>, covariance: DMatrix<f64>) {
        debug_assert_eq!(weights.len(), self.weights.len());
        self.weights = weights;
        self.covariance = covariance;
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        let rows = self.basis.axis_rows(x, 0)?;
        Ok(self.basis.rows_for(&rows, &vec![0; self.dim()]).dot(&self.weights))
    }

    pub fn query(&self, x: &[f64]) -> Result<QueryResult> {
        let (value, grads) = self.basis.value_and_gradient_rows(x)?;
        Ok(QueryResult {
            distance: value.dot(&self.weights),
            gradient: grads.iter().map(|g| g.dot(&self.weights)).collect(),
        })
    }

    /// Hessian of the field; symmetric by construction.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for (i, j, row) in self.basis.second_derivative_rows(x)? {
            let v = row.dot(&self.weights);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
        Ok(h)
    }
}

pub fn query(model: &FieldModel, x: &[f64]) -> Result<QueryResult> {
    model.query(x)
}

pub fn query_hessian(model: &FieldModel, x: &[f64]) -> Result<DMatrix<f64>> {
    model.hessian(x)
}

fn check_strength(strength: f64) -> Result<()> {
    if !(strength.is_finite() && strength > 0.0) {
        return Err(Error::InvalidConfig(format!("prior strength must be > 0, got {strength}")));
    }
    Ok(())
}

/// Minimum nodes per axis used to fit the spherical prior.
pub const PRIOR_GRID_RESOLUTION: usize = 16;
const PRIOR_RIDGE: f64 = 1e-9;
// The cone apex at the center is not representable by a C¹ spline and a plain
// grid fit rounds it off by roughly a quarter cell; this row pins f(c) = -r.
const PRIOR_CENTER_ANCHOR: f64 = 10.0;

/// Model whose weights fit the sphere SDF `‖x − c‖ − r`; precision `strength · I`.
///
/// The weights are a ridge least-squares fit of the analytic SDF sampled on a
/// uniform grid of at least [`PRIOR_GRID_RESOLUTION`] nodes per axis, plus an
/// anchor row at the center when it lies inside the domain.
pub fn init_spherical_prior(
    config: &BasisConfig,
    center: &[f64],
    radius: f64,
    strength: f64,
) -> Result<FieldModel> {
    check_strength(strength)?;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidConfig(format!("prior radius must be > 0, got {radius}")));
    }
    if center.len() != config.dim() {
        return Err(Error::DimensionMismatch { expected: config.dim(), actual: center.len() });
    }
    // the sphere surface meets the box iff r lies between the nearest and farthest box distance
    let (mut near, mut far) = (0.0f64, 0.0f64);
    for (&c, iv) in center.iter().zip(config.domain()) {
        let gap = (iv.lo - c).max(0.0).max(c - iv.hi);
        near += gap * gap;
        far += (c - iv.lo).abs().max((iv.hi - c).abs()).powi(2);
    }
    if radius < near.sqrt() || radius > far.sqrt() {
        return Err(Error::InvalidConfig(
            "spherical prior surface lies wholly outside the domain".into(),
        ));
    }

    let basis = Arc::new(TensorBasis::new(config.clone())?);
    let n = basis.param_count();
    let res = PRIOR_GRID_RESOLUTION.max(config.free_per_axis() + 4);
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut node = vec![0.0; config.dim()];
    let total = res.pow(config.dim() as u32);
    for flat in 0..total {
        let mut rem = flat;
        for d in (0..config.dim()).rev() {
            let iv = config.domain()[d];
            let i = rem % res;
            rem /= res;
            node[d] = if i + 1 == res { iv.hi } else { iv.lo + iv.width() * i as f64 / (res - 1) as f64 };
        }
        let target = node.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() - radius;
        let row = basis.features(&node, &vec![0; config.dim()])?;
        accumulate_normal(&mut gram, &mut rhs, &row, target);
    }
    if config.contains(center) {
        let row = basis.features(center, &vec![0; config.dim()])?.scaled(PRIOR_CENTER_ANCHOR);
        accumulate_normal(&mut gram, &mut rhs, &row, -radius * PRIOR_CENTER_ANCHOR);
    }
    for i in 0..n {
        gram[(i, i)] += PRIOR_RIDGE;
    }
    let weights = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("spherical prior system is singular".into()))?
        .solve(&rhs);
    FieldModel::with_basis(basis, weights, DMatrix::identity(n, n) / strength)
}

pub(crate) fn accumulate_normal(
    gram: &mut DMatrix<f64>,
    rhs: &mut DVector<f64>,
    row: &FeatureRow,
    target: f64,
) {
    for (&i, &vi) in row.indices.iter().zip(&row.values) {
        rhs[i] += vi * target;
        for (&j, &vj) in row.indices.iter().zip(&row.values) {
            gram[(i, j)] += vi * vj;
        }
    }
}

/// Single-writer, many-reader handle; readers never see a partial update.
#[derive(Debug)]
pub struct SharedField {
    inner: RwLock<FieldModel>,
}

impl SharedField {
    pub fn new(model: FieldModel) -> Self {
        Self { inner: RwLock::new(model) }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, FieldModel> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` with exclusive access. On error the model is left untouched
    /// provided `f` only mutates through the solver operations.
    pub fn update<T>(&self, f: impl FnOnce(&mut FieldModel) -> Result<T>) -> Result<T> {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    pub fn into_inner(self) -> FieldModel {
        self.inner.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}
