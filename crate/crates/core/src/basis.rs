//! One-dimensional constrained piecewise Bernstein basis.
//!
//! Each axis of the domain is split into `S` uniform segments carrying a
//! degree-`K` Bernstein polynomial. The raw per-segment weights are tied
//! together at every interior knot so the concatenated function is C¹:
//!
//! ```text
//! w_K^a = w_0^b
//! w_1^b = 2 w_0^b - w_{K-1}^a
//! ```
//!
//! The free parameters are ordered segment by segment. Segment 0 owns all of
//! its `K + 1` raw weights; every later segment `s` owns its raw weights
//! `2..=K`, which land at free indices `s (K - 1) + k`. The value-like raw
//! weight `w_0` and slope-like raw weight `w_1` of segment `s >= 1` are then
//! derived from the previous segment through the two ties above. For `K >= 3`
//! segment `s` therefore touches exactly the contiguous free window
//! `s (K - 1) ..= s (K - 1) + K`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` in world units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidConfig(format!(
                "interval bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Degree, segment count and axis-aligned domain of a tensor-product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    degree: usize,
    segments: usize,
    domain: Vec<Interval>,
}

impl BasisConfig {
    pub fn new(degree: usize, segments: usize, domain: Vec<Interval>) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidConfig(format!(
                "degree must be at least 2 so second derivatives exist, got {degree}"
            )));
        }
        if segments < 1 {
            return Err(Error::InvalidConfig("segments must be at least 1".into()));
        }
        if domain.is_empty() || domain.len() > 3 {
            return Err(Error::InvalidConfig(format!(
                "input dimension must be 1, 2 or 3, got {}",
                domain.len()
            )));
        }
        for (axis, iv) in domain.iter().enumerate() {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo >= iv.hi {
                return Err(Error::InvalidConfig(format!(
                    "axis {axis}: domain bounds must satisfy lo < hi, got [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        Ok(Self { degree, segments, domain })
    }

    /// Unit hypercube `[0, 1]^dim`.
    pub fn unit(degree: usize, segments: usize, dim: usize) -> Result<Self> {
        Self::new(degree, segments, vec![Interval::unit(); dim])
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn domain(&self) -> &[Interval] {
        &self.domain
    }

    /// Free parameters per axis, `(K - 1) S + 2`.
    pub fn free_per_axis(&self) -> usize {
        free_parameter_count(self.degree, self.segments)
    }

    /// Total number of superposition weights, `M^D`.
    pub fn param_count(&self) -> usize {
        self.free_per_axis().pow(self.dim() as u32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.domain).all(|(&v, iv)| iv.contains(v))
    }

    /// Projects `x` onto the domain box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.domain).map(|(&v, iv)| iv.clamp(v)).collect()
    }

    /// Length of the domain box diagonal.
    pub fn diagonal(&self) -> f64 {
        self.domain.iter().map(|iv| iv.width().powi(2)).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|iv| 0.5 * (iv.lo + iv.hi)).collect()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        for (axis, (&v, iv)) in x.iter().zip(&self.domain).enumerate() {
            if !iv.contains(v) {
                return Err(Error::OutOfDomain { axis, value: v, lo: iv.lo, hi: iv.hi });
            }
        }
        Ok(())
    }
}

/// Free parameters per axis for degree `K` and `S` segments.
pub fn free_parameter_count(degree: usize, segments: usize) -> usize {
    (degree - 1) * segments + 2
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Degree-`K` Bernstein basis values at `t ∈ [0, 1]`.
pub fn bernstein_basis(degree: usize, t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "Bernstein parameter must lie in [0, 1], got {t}"
        )));
    }
    let s = 1.0 - t;
    Ok((0..=degree)
        .map(|k| binomial(degree, k) * s.powi((degree - k) as i32) * t.powi(k as i32))
        .collect())
}

/// Maps monomial features `T(t) = [1 t … t^K]` to Bernstein values: `T(t) B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix(DMatrix<f64>);

impl CoeffMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.nrows() - 1
    }
}

/// Bernstein coefficient matrix; row `j` holds the `t^j` coefficients.
pub fn coeff_matrix(degree: usize) -> Result<CoeffMatrix> {
    if degree < 1 {
        return Err(Error::InvalidArgument("coefficient matrix needs degree >= 1".into()));
    }
    let n = degree + 1;
    let mut b = DMatrix::zeros(n, n);
    for k in 0..n {
        // C(K,k) t^k (1-t)^(K-k) = Σ_i C(K,k) C(K-k,i) (-1)^i t^(k+i)
        for i in 0..n - k {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            b[(k + i, k)] = sign * binomial(degree, k) * binomial(degree - k, i);
        }
    }
    Ok(CoeffMatrix(b))
}

/// Maps free weights to the concatenated raw per-segment Bernstein weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    degree: usize,
    segments: usize,
    matrix: DMatrix<f64>,
}

impl ConstraintMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Rows belonging to segment `s`.
    pub fn segment_rows(&self, s: usize) -> nalgebra::DMatrixView<'_, f64> {
        let n = self.degree + 1;
        self.matrix.rows(s * n, n)
    }
}

pub fn constraint_matrix(degree: usize, segments: usize) -> Result<ConstraintMatrix> {
    if degree < 2 {
        return Err(Error::InvalidArgument(format!(
            "C1 ties need at least three weights per segment (degree >= 2), got degree {degree}"
        )));
    }
    if segments < 1 {
        return Err(Error::InvalidArgument("segments must be at least 1".into()));
    }
    let n = degree + 1;
    let free = free_parameter_count(degree, segments);
    let mut c = DMatrix::zeros(n * segments, free);
    for k in 0..n {
        c[(k, k)] = 1.0;
    }
    for s in 1..segments {
        let row = |k: usize| s * n + k;
        let prev = |k: usize| (s - 1) * n + k;
        for k in 2..n {
            c[(row(k), s * (degree - 1) + k)] = 1.0;
        }
        for j in 0..free {
            let w0 = c[(prev(degree), j)];
            c[(row(0), j)] = w0;
            c[(row(1), j)] = 2.0 * w0 - c[(prev(degree - 1), j)];
        }
    }
    Ok(ConstraintMatrix { degree, segments, matrix: c })
}

/// Segment index and local parameter of `x` on a uniformly split interval.
///
/// Interior knots belong to the segment on their right; `hi` maps to
/// `(S - 1, 1.0)`.
pub fn locate_segment(x: f64, interval: Interval, segments: usize) -> Result<(usize, f64)> {
    if !interval.contains(x) {
        return Err(Error::OutOfDomain { axis: 0, value: x, lo: interval.lo, hi: interval.hi });
    }
    let u = (x - interval.lo) / interval.width() * segments as f64;
    let idx = (u.floor() as usize).min(segments - 1);
    let t = (u - idx as f64).clamp(0.0, 1.0);
    Ok((idx, t))
}

/// Nonzero window of a basis row: `values[i]` sits at column `offset + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRow {
    pub offset: usize,
    pub values: Vec<f64>,
}

impl LocalRow {
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        out[self.offset..self.offset + self.values.len()].copy_from_slice(&self.values);
        out
    }
}

#[derive(Debug, Clone)]
struct SegmentBlock {
    offset: usize,
    // (K+1) x width, equal to B · C_s restricted to the nonzero columns
    monomial_to_free: DMatrix<f64>,
}

/// Precomputed basis along one axis.
#[derive(Debug, Clone)]
pub struct AxisBasis {
    degree: usize,
    segments: usize,
    interval: Interval,
    blocks: Vec<SegmentBlock>,
}

impl AxisBasis {
    pub fn new(degree: usize, segments: usize, interval: Interval) -> Result<Self> {
        let b = coeff_matrix(degree)?;
        let c = constraint_matrix(degree, segments)?;
        let blocks = (0..segments)
            .map(|s| {
                let rows = c.segment_rows(s);
                let nonzero: Vec<usize> = (0..rows.ncols())
                    .filter(|&j| rows.column(j).iter().any(|&v| v != 0.0))
                    .collect();
                let first = nonzero[0];
                let last = *nonzero.last().unwrap();
                let block = rows.columns(first, last - first + 1).into_owned();
                SegmentBlock { offset: first, monomial_to_free: b.matrix() * block }
            })
            .collect();
        Ok(Self { degree, segments, interval, blocks })
    }

    pub fn free_count(&self) -> usize {
        free_parameter_count(self.degree, self.segments)
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        locate_segment(x, self.interval, self.segments)
    }

    /// Nonzero window of the `order`-th x-derivative of the basis row at `x`.
    pub fn local(&self, x: f64, order: usize) -> Result<LocalRow> {
        let (seg, t) = self.locate(x)?;
        let block = &self.blocks[seg];
        let n = self.degree + 1;
        // d^m/dt^m of the monomial row
        let mut mono = vec![0.0; n];
        for (j, m) in mono.iter_mut().enumerate().skip(order) {
            let falling: f64 = ((j - order + 1)..=j).map(|v| v as f64).product();
            *m = falling * t.powi((j - order) as i32);
        }
        let chain = (self.segments as f64 / self.interval.width()).powi(order as i32);
        let width = block.monomial_to_free.ncols();
        let values = (0..width)
            .map(|c| {
                let col = block.monomial_to_free.column(c);
                chain * mono.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(LocalRow { offset: block.offset, values })
    }

    /// Dense basis row of length `M`.
    pub fn phi(&self, x: f64, order: usize) -> Result<Vec<f64>> {
        Ok(self.local(x, order)?.to_dense(self.free_count()))
    }
}

/// Dense basis row `T^(order)(t) B C` of length `M` along one axis of `config`.
pub fn phi_1d(x: f64, config: &BasisConfig, axis: usize, order: usize) -> Result<Vec<f64>> {
    let iv = *config
        .domain()
        .get(axis)
        .ok_or(Error::DimensionMismatch { expected: config.dim(), actual: axis + 1 })?;
    let basis = AxisBasis::new(config.degree(), config.segments(), iv)?;
    basis.phi(x, order).map_err(|e| with_axis(e, axis))
}

pub(crate) fn with_axis(e: Error, axis: usize) -> Error {
    match e {
        Error::OutOfDomain { value, lo, hi, .. } => Error::OutOfDomain { axis, value, lo, hi },
        other => other,
    }
}
