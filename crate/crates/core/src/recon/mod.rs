//! Dense grid evaluation and zero-level-set extraction.
//!
//! [`eval_grid`] samples a model on a regular lattice. [`extract_level_set`]
//! turns a 2D grid into contour polylines (marching squares) and a 3D grid
//! into a triangle mesh (marching cubes), both with linear edge
//! interpolation. [`export`] writes grids and meshes to disk.

pub mod export;
mod march;
mod tables;

use rayon::prelude::*;

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::field::FieldModel;

pub use march::{marching_cubes, marching_squares, Contours, IsoMesh};

/// Values on a regular lattice, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    dims: Vec<usize>,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    /// Exact coordinate of the last node on each axis.
    upper: Vec<f64>,
    values: Vec<f64>,
    /// `D` components per node, same order as `values`.
    gradients: Option<Vec<f64>>,
}

impl ScalarGrid {
    /// Lattice spanning `[lo, hi]` per axis with `dims` nodes per axis.
    pub fn new(dims: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() != lo.len() || dims.len() != hi.len() {
            return Err(Error::InvalidArgument("grid dims, lo and hi must have one entry per axis".into()));
        }
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument(format!("grid resolution must be >= 2 per axis, got {dims:?}")));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::InvalidArgument("grid bounds must be finite with lo < hi".into()));
        }
        let count: usize = dims.iter().product();
        if values.len() != count {
            return Err(Error::DimensionMismatch { expected: count, actual: values.len() });
        }
        let spacing = dims.iter().zip(lo.iter().zip(&hi)).map(|(&n, (l, h))| (h - l) / (n - 1) as f64).collect();
        Ok(Self { dims, origin: lo, spacing, upper: hi, values, gradients: None })
    }

    /// Grid whose node values are `f(node)`.
    pub fn from_fn(dims: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let count: usize = dims.iter().product();
        let mut grid = Self::new(dims, lo, hi, vec![0.0; count])?;
        let values = (0..count).into_par_iter().map(|i| f(&grid.node(i))).collect();
        grid.values = values;
        Ok(grid)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradients(&self) -> Option<&[f64]> {
        self.gradients.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest spacing over the axes.
    pub fn cell_size(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for d in (0..self.dims.len()).rev() {
            idx[d] = flat % self.dims[d];
            flat /= self.dims[d];
        }
        idx
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.dims[axis] {
            self.upper[axis]
        } else {
            self.origin[axis] + i as f64 * self.spacing[axis]
        }
    }

    /// Position of node `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(d, &i)| self.coordinate(d, i)).collect()
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Cell index and local coordinate in `[0, 1]` per axis, clamped to the grid.
    fn locate(&self, p: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let mut cell = Vec::with_capacity(p.len());
        let mut t = Vec::with_capacity(p.len());
        for (d, &x) in p.iter().enumerate().take(self.dims.len()) {
            let u = ((x - self.origin[d]) / self.spacing[d]).clamp(0.0, (self.dims[d] - 1) as f64);
            let i = (u.floor() as usize).min(self.dims[d] - 2);
            let lo = self.coordinate(d, i);
            let hi = self.coordinate(d, i + 1);
            cell.push(i);
            t.push(((x - lo) / (hi - lo)).clamp(0.0, 1.0));
        }
        (cell, t)
    }

    /// Multilinear interpolation of the node values at `p`.
    pub fn interpolate(&self, p: &[f64]) -> Result<f64> {
        Ok(self.interpolate_with_gradient(p)?.0)
    }

    /// Multilinear value and its gradient at `p`.
    pub fn interpolate_with_gradient(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let dim = self.dims.len();
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: p.len() });
        }
        let (cell, t) = self.locate(p);
        let mut value = 0.0;
        let mut grad = vec![0.0; dim];
        let mut idx = vec![0; dim];
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut dw = vec![1.0; dim];
            for d in 0..dim {
                let bit = (corner >> d) & 1;
                idx[d] = cell[d] + bit;
                let (f, df) = if bit == 1 { (t[d], 1.0) } else { (1.0 - t[d], -1.0) };
                w *= f;
                for (e, g) in dw.iter_mut().enumerate() {
                    *g *= if e == d { df / (self.coordinate(d, cell[d] + 1) - self.coordinate(d, cell[d])) } else { f };
                }
            }
            let v = self.value_at(&idx);
            value += w * v;
            for d in 0..dim {
                grad[d] += dw[d] * v;
            }
        }
        Ok((value, grad))
    }

    /// Grid with every value negated (gradients too).
    pub fn negated(&self) -> Self {
        let mut g = self.clone();
        g.values.iter_mut().for_each(|v| *v = -*v);
        if let Some(gr) = g.gradients.as_mut() {
            gr.iter_mut().for_each(|v| *v = -*v);
        }
        g
    }
}

fn grid_for(config: &BasisConfig, resolution: &[usize]) -> Result<ScalarGrid> {
    let dims = match resolution.len() {
        1 => vec![resolution[0]; config.dim()],
        n if n == config.dim() => resolution.to_vec(),
        n => return Err(Error::DimensionMismatch { expected: config.dim(), actual: n }),
    };
    let lo = config.domain().iter().map(|iv| iv.lo).collect();
    let hi = config.domain().iter().map(|iv| iv.hi).collect();
    let count = dims.iter().product();
    ScalarGrid::new(dims, lo, hi, vec![0.0; count])
}

/// Field values on a lattice covering the model domain. `resolution` holds
/// one node count for all axes or one per axis.
pub fn eval_grid(model: &FieldModel, resolution: &[usize]) -> Result<ScalarGrid> {
    let mut grid = grid_for(model.config(), resolution)?;
    let values = (0..grid.len()).into_par_iter().map(|i| model.distance(&grid.node(i))).collect::<Result<_>>()?;
    grid.values = values;
    Ok(grid)
}

/// Like [`eval_grid`] and also stores the analytic gradient at each node.
pub fn eval_grid_with_gradients(model: &FieldModel, resolution: &[usize]) -> Result<ScalarGrid> {
    let mut grid = grid_for(model.config(), resolution)?;
    let results = (0..grid.len()).into_par_iter().map(|i| model.query(&grid.node(i))).collect::<Result<Vec<_>>>()?;
    grid.values = results.iter().map(|q| q.distance).collect();
    grid.gradients = Some(results.into_iter().flat_map(|q| q.gradient).collect());
    Ok(grid)
}

/// Extraction output matching the grid dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelSet {
    Contours(Contours),
    Mesh(IsoMesh),
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        match self {
            LevelSet::Contours(c) => c.polylines.is_empty(),
            LevelSet::Mesh(m) => m.triangles.is_empty(),
        }
    }
}

pub fn extract_level_set(grid: &ScalarGrid, iso: f64) -> Result<LevelSet> {
    if !iso.is_finite() || grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("level-set extraction needs finite values and iso".into()));
    }
    match grid.dim() {
        2 => Ok(LevelSet::Contours(marching_squares(grid, iso))),
        3 => Ok(LevelSet::Mesh(marching_cubes(grid, iso))),
        d => Err(Error::InvalidArgument(format!("level sets are extracted for 2D or 3D grids, not {d}D"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_and_nodes() {
        let g = ScalarGrid::from_fn(vec![3, 4, 5], vec![0.0; 3], vec![1.0, 2.0, 3.0], |p| p[0] + 10.0 * p[1] + 100.0 * p[2])
            .unwrap();
        assert_eq!(g.len(), 60);
        assert_eq!(g.flat_index(&[1, 2, 3]), (4 + 2) * 5 + 3);
        assert_eq!(g.multi_index(33), vec![1, 2, 3]);
        assert_eq!(g.node(g.len() - 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(g.value_at(&[0, 0, 1]), 75.0);
        assert!(ScalarGrid::new(vec![1, 2], vec![0.0; 2], vec![1.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let f = |p: &[f64]| 0.3 + 2.0 * p[0] - p[1] + 0.5 * p[2];
        let g = ScalarGrid::from_fn(vec![5, 6, 7], vec![-1.0; 3], vec![1.0; 3], f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (v, grad) = g.interpolate_with_gradient(&p).unwrap();
            assert!((v - f(&p)).abs() < 1e-12);
            assert!((grad[0] - 2.0).abs() < 1e-10 && (grad[1] + 1.0).abs() < 1e-10 && (grad[2] - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_nodes_equal_queries() {
        let cfg = BasisConfig::unit(3, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = cfg.param_count();
        let w = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let model = FieldModel::new(cfg, w, nalgebra::DMatrix::identity(n, n)).unwrap();
        let grid = eval_grid_with_gradients(&model, &[9, 7, 5]).unwrap();
        for _ in 0..100 {
            let i = rng.random_range(0..grid.len());
            let q = model.query(&grid.node(i)).unwrap();
            assert_eq!(grid.values()[i], q.distance);
            assert_eq!(&grid.gradients().unwrap()[3 * i..3 * i + 3], q.gradient.as_slice());
        }
        assert_eq!(eval_grid(&model, &[9, 7, 5]).unwrap().values(), grid.values());
    }

    #[test]
    fn constant_model_gives_uniform_grid() {
        let cfg = BasisConfig::unit(3, 2, 2).unwrap();
        let model = FieldModel::constant(cfg, 0.25, 1.0).unwrap();
        let g = eval_grid(&model, &[17]).unwrap();
        assert!(g.values().iter().all(|v| (v - 0.25).abs() < 1e-14));
        assert!(eval_grid(&model, &[1]).is_err());
        assert!(eval_grid(&model, &[4, 4, 4]).is_err());
        assert!(extract_level_set(&g, 0.0).unwrap().is_empty());
    }
}
