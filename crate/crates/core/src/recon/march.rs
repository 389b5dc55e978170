//! Marching squares and marching cubes with linear edge interpolation.
//!
//! Vertices are shared between cells through a key naming the grid edge they
//! lie on, so closed level sets come out as closed polylines / watertight
//! meshes. Orientation: the region below `iso` lies to the left of each
//! contour segment (counter-clockwise around it), and mesh triangles wind
//! counter-clockwise seen from above `iso`.

use std::collections::HashMap;

use rayon::prelude::*;

use super::tables::TRIANGLE_TABLE;
use super::ScalarGrid;

/// A grid edge: the flat index of its lower node and its axis.
type EdgeKey = (usize, usize);

/// Contour polylines of a 2D grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Contours {
    pub vertices: Vec<[f64; 2]>,
    pub polylines: Vec<Polyline>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<usize>,
    /// The last vertex connects back to the first.
    pub closed: bool,
}

impl Contours {
    pub fn segment_count(&self) -> usize {
        self.polylines.iter().map(|p| p.vertices.len() - usize::from(!p.closed)).sum()
    }
}

/// Triangle mesh of a 3D level set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IsoMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl IsoMesh {
    /// Edges used by other than exactly two triangles.
    pub fn boundary_edge_count(&self) -> usize {
        let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        uses.values().filter(|&&n| n != 2).count()
    }

    /// Triangles with zero area (two vertices at the same position).
    pub fn degenerate_count(&self) -> usize {
        (0..self.triangles.len()).filter(|&i| self.triangle_normal(i).iter().all(|v| *v == 0.0)).count()
    }

    pub fn triangle_normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    }
}

/// Position of the iso crossing on the grid edge `key`, interpolated from the
/// lower node so every cell sharing the edge gets the same bits.
fn edge_point(grid: &ScalarGrid, (flat, axis): EdgeKey, iso: f64) -> Vec<f64> {
    let idx = grid.multi_index(flat);
    let mut upper = idx.clone();
    upper[axis] += 1;
    let va = grid.values[flat];
    let vb = grid.value_at(&upper);
    let t = (iso - va) / (vb - va);
    let mut p: Vec<f64> = idx.iter().enumerate().map(|(d, &i)| grid.coordinate(d, i)).collect();
    let (a, b) = (grid.coordinate(axis, idx[axis]), grid.coordinate(axis, idx[axis] + 1));
    p[axis] = a + t * (b - a);
    p
}

/// Assigns vertex ids to edge keys in first-seen order.
struct VertexPool {
    ids: HashMap<EdgeKey, usize>,
    keys: Vec<EdgeKey>,
}

impl VertexPool {
    fn new() -> Self {
        Self { ids: HashMap::new(), keys: Vec::new() }
    }

    fn id(&mut self, key: EdgeKey) -> usize {
        *self.ids.entry(key).or_insert_with(|| {
            self.keys.push(key);
            self.keys.len() - 1
        })
    }
}

// Square corners (axis0, axis1): 0=(0,0) 1=(1,0) 2=(1,1) 3=(0,1), CCW.
// Edge k joins corner k and corner k+1 (mod 4).
const SQUARE_CORNERS: [[usize; 2]; 4] = [[0, 0], [1, 0], [1, 1], [0, 1]];

fn square_edge_key(grid: &ScalarGrid, cell: [usize; 2], edge: usize) -> EdgeKey {
    let a = SQUARE_CORNERS[edge];
    let b = SQUARE_CORNERS[(edge + 1) % 4];
    let lo = [cell[0] + a[0].min(b[0]), cell[1] + a[1].min(b[1])];
    let axis = if a[0] != b[0] { 0 } else { 1 };
    (grid.flat_index(&lo), axis)
}

/// Edge pairs crossed in a square cell, given the below-iso corner mask.
/// Saddles are split by the cell-center average.
fn square_segments(case: usize, center_below: bool) -> &'static [(usize, usize)] {
    match case {
        1 | 14 => &[(0, 3)],
        2 | 13 => &[(0, 1)],
        3 | 12 => &[(1, 3)],
        4 | 11 => &[(1, 2)],
        6 | 9 => &[(0, 2)],
        7 | 8 => &[(2, 3)],
        5 if center_below => &[(0, 1), (2, 3)],
        5 => &[(0, 3), (1, 2)],
        10 if center_below => &[(0, 3), (1, 2)],
        10 => &[(0, 1), (2, 3)],
        _ => &[],
    }
}

pub fn marching_squares(grid: &ScalarGrid, iso: f64) -> Contours {
    assert_eq!(grid.dim(), 2, "marching squares needs a 2D grid");
    let [n0, n1] = [grid.dims[0], grid.dims[1]];
    let rows: Vec<Vec<(EdgeKey, EdgeKey)>> = (0..n0 - 1)
        .into_par_iter()
        .map(|i| {
            let mut segs = Vec::new();
            for j in 0..n1 - 1 {
                let values = SQUARE_CORNERS.map(|c| grid.value_at(&[i + c[0], j + c[1]]));
                let case = values.iter().enumerate().fold(0, |m, (k, &v)| m | (usize::from(v < iso) << k));
                let center_below = values.iter().sum::<f64>() / 4.0 < iso;
                for &(ea, eb) in square_segments(case, center_below) {
                    // Corners strictly between ea and eb (CCW) lie to the
                    // right of ea→eb; keep below-iso corners on the left.
                    let right_corner_below = values[(ea + 1) % 4] < iso;
                    let (from, to) = if right_corner_below { (eb, ea) } else { (ea, eb) };
                    segs.push((square_edge_key(grid, [i, j], from), square_edge_key(grid, [i, j], to)));
                }
            }
            segs
        })
        .collect();

    let mut pool = VertexPool::new();
    let segments: Vec<(usize, usize)> = rows.into_iter().flatten().map(|(a, b)| (pool.id(a), pool.id(b))).collect();
    let vertices = pool
        .keys
        .iter()
        .map(|&k| {
            let p = edge_point(grid, k, iso);
            [p[0], p[1]]
        })
        .collect();

    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut has_incoming = vec![false; pool.keys.len()];
    for (s, &(a, b)) in segments.iter().enumerate() {
        next.insert(a, s);
        has_incoming[b] = true;
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    let walk = |start_seg: usize, used: &mut Vec<bool>| {
        let mut verts = vec![segments[start_seg].0];
        let mut s = start_seg;
        loop {
            used[s] = true;
            let b = segments[s].1;
            match next.get(&b) {
                Some(&n) if !used[n] => {
                    verts.push(b);
                    s = n;
                }
                Some(&n) if n == start_seg => return Polyline { vertices: verts, closed: true },
                _ => {
                    verts.push(b);
                    return Polyline { vertices: verts, closed: false };
                }
            }
        }
    };
    for s in 0..segments.len() {
        if !used[s] && !has_incoming[segments[s].0] {
            polylines.push(walk(s, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            polylines.push(walk(s, &mut used));
        }
    }
    Contours { vertices, polylines }
}

const CUBE_CORNERS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

const CUBE_EDGES: [[usize; 2]; 12] =
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

fn cube_edge_key(grid: &ScalarGrid, cell: [usize; 3], edge: usize) -> EdgeKey {
    let [a, b] = CUBE_EDGES[edge].map(|c| CUBE_CORNERS[c]);
    let lo = [cell[0] + a[0].min(b[0]), cell[1] + a[1].min(b[1]), cell[2] + a[2].min(b[2])];
    let axis = (0..3).find(|&d| a[d] != b[d]).expect("edge spans one axis");
    (grid.flat_index(&lo), axis)
}

pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> IsoMesh {
    assert_eq!(grid.dim(), 3, "marching cubes needs a 3D grid");
    let [n0, n1, n2] = [grid.dims[0], grid.dims[1], grid.dims[2]];
    let slabs: Vec<Vec<[EdgeKey; 3]>> = (0..n0 - 1)
        .into_par_iter()
        .map(|i| {
            let mut tris = Vec::new();
            for j in 0..n1 - 1 {
                for k in 0..n2 - 1 {
                    let case = CUBE_CORNERS.iter().enumerate().fold(0usize, |m, (c, o)| {
                        m | (usize::from(grid.value_at(&[i + o[0], j + o[1], k + o[2]]) < iso) << c)
                    });
                    let row = &TRIANGLE_TABLE[case];
                    for t in row.chunks(3).take_while(|t| t[0] >= 0) {
                        // The table winds triangles facing the below-iso side;
                        // reverse so normals point toward increasing values.
                        tris.push([t[0], t[2], t[1]].map(|e| cube_edge_key(grid, [i, j, k], e as usize)));
                    }
                }
            }
            tris
        })
        .collect();

    let mut pool = VertexPool::new();
    let triangles = slabs.into_iter().flatten().map(|t| t.map(|k| pool.id(k))).collect();
    let vertices = pool
        .keys
        .iter()
        .map(|&k| {
            let p = edge_point(grid, k, iso);
            [p[0], p[1], p[2]]
        })
        .collect();
    IsoMesh { vertices, triangles }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_grid(n: usize, r: f64) -> ScalarGrid {
        ScalarGrid::from_fn(vec![n; 3], vec![0.0; 3], vec![1.0; 3], |p| {
            ((p[0] - 0.5).powi(2) + (p[1] - 0.47).powi(2) + (p[2] - 0.52).powi(2)).sqrt() - r
        })
        .unwrap()
    }

    #[test]
    fn sphere_mesh_is_watertight_and_outward() {
        let grid = sphere_grid(24, 0.3);
        let mesh = marching_cubes(&grid, 0.0);
        assert!(mesh.triangles.len() > 100);
        assert_eq!(mesh.boundary_edge_count(), 0);
        // Directed edges must each appear once for a consistently wound surface.
        let mut directed = std::collections::HashSet::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                assert!(directed.insert((t[k], t[(k + 1) % 3])));
            }
        }
        for (i, t) in mesh.triangles.iter().enumerate() {
            let n = mesh.triangle_normal(i);
            let c: Vec<f64> = (0..3).map(|d| t.iter().map(|&v| mesh.vertices[v][d]).sum::<f64>() / 3.0).collect();
            let out = [c[0] - 0.5, c[1] - 0.47, c[2] - 0.52];
            assert!(n[0] * out[0] + n[1] * out[1] + n[2] * out[2] > 0.0);
        }
    }

    #[test]
    fn vertices_lie_on_the_interpolated_iso_surface() {
        let grid = sphere_grid(20, 0.27);
        for iso in [0.0, 0.05] {
            let mesh = marching_cubes(&grid, iso);
            for v in &mesh.vertices {
                assert!((grid.interpolate(v).unwrap() - iso).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn iso_outside_range_is_empty() {
        let grid = sphere_grid(10, 0.3);
        assert!(marching_cubes(&grid, -10.0).triangles.is_empty());
        assert!(marching_cubes(&grid, 10.0).vertices.is_empty());
    }

    #[test]
    fn negated_field_flips_orientation_only() {
        let grid = sphere_grid(16, 0.31);
        let a = marching_cubes(&grid, 0.02);
        let b = marching_cubes(&grid.negated(), -0.02);
        assert_eq!(a.vertices.len(), b.vertices.len());
        assert_eq!(a.triangles.len(), b.triangles.len());
        let key = |v: &[f64; 3]| v.map(|x| (x * 1e9).round() as i64);
        let mut va: Vec<_> = a.vertices.iter().map(key).collect();
        let mut vb: Vec<_> = b.vertices.iter().map(key).collect();
        va.sort();
        vb.sort();
        assert_eq!(va, vb);
        let mut ta: Vec<_> = a.triangles.iter().map(|t| t.map(|i| key(&a.vertices[i]))).collect();
        let mut tb: Vec<_> = b.triangles.iter().map(|t| [t[0], t[2], t[1]].map(|i| key(&b.vertices[i]))).collect();
        let canon = |t: &mut [[i64; 3]; 3]| {
            let m = (0..3).min_by_key(|&i| t[i]).unwrap();
            t.rotate_left(m);
        };
        ta.iter_mut().for_each(canon);
        tb.iter_mut().for_each(canon);
        ta.sort();
        tb.sort();
        assert_eq!(ta, tb);
    }

    #[test]
    fn circle_contour_is_closed_and_counter_clockwise() {
        let grid = ScalarGrid::from_fn(vec![40, 40], vec![0.0; 2], vec![1.0; 2], |p| {
            ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() - 0.3
        })
        .unwrap();
        let c = marching_squares(&grid, 0.0);
        assert_eq!(c.polylines.len(), 1);
        let line = &c.polylines[0];
        assert!(line.closed);
        let signed_area: f64 = (0..line.vertices.len())
            .map(|k| {
                let a = c.vertices[line.vertices[k]];
                let b = c.vertices[line.vertices[(k + 1) % line.vertices.len()]];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0;
        assert!((signed_area - std::f64::consts::PI * 0.09).abs() < 1e-2);
        for v in &c.vertices {
            assert!((grid.interpolate(v).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn open_contours_and_saddles() {
        let grid = ScalarGrid::from_fn(vec![11, 11], vec![0.0; 2], vec![1.0; 2], |p| p[0] - 0.53).unwrap();
        let c = marching_squares(&grid, 0.0);
        assert_eq!(c.polylines.len(), 1);
        assert!(!c.polylines[0].closed);
        assert_eq!(c.polylines[0].vertices.len(), 11);
        // Below-iso half-plane x < 0.53 on the left: the line runs toward +y.
        let first = c.vertices[c.polylines[0].vertices[0]];
        let last = c.vertices[*c.polylines[0].vertices.last().unwrap()];
        assert!(first[1] < last[1]);

        let saddle = ScalarGrid::new(vec![2, 2], vec![0.0; 2], vec![1.0; 2], vec![-1.0, 1.0, 1.0, -1.0]).unwrap();
        let c = marching_squares(&saddle, 0.0);
        assert_eq!(c.polylines.len(), 2);
        assert_eq!(c.segment_count(), 2);
    }
}
