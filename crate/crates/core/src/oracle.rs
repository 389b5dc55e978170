//! Ground-truth signed distances and the evaluation metrics.
//!
//! [`TriangleMesh`] answers exact point-to-mesh distance queries signed by
//! angle-weighted pseudo-normals. [`evaluate`] compares a [`FieldModel`]
//! against any [`GroundTruth`] and buckets the errors near and far from the
//! surface.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::solver::SurfaceSample;

type V3 = Vector3<f64>;

/// Ground-truth |s| below which an evaluation point counts as near-surface.
pub const NEAR_THRESHOLD: f64 = 0.05;

const LEAF_SIZE: usize = 4;

/// Closest feature of a triangle, in global vertex indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Face,
    Edge(usize, usize),
    Vertex(usize),
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: V3,
    hi: V3,
    /// Leaf: face range into `order`. Inner: child node indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

/// Closed, outward-wound triangle mesh with precomputed pseudo-normals.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<V3>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<V3>,
    vertex_normals: Vec<V3>,
    edge_normals: HashMap<(usize, usize), V3>,
    edge_use: HashMap<(usize, usize), usize>,
    /// Distances at or below this count as on the surface.
    surface_eps: f64,
    bvh: Option<Bvh>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn normalize_or_zero(v: V3) -> V3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        V3::zeros()
    }
}

impl TriangleMesh {
    /// Builds the mesh and its bounding-volume hierarchy. Faces must have
    /// non-zero area and valid indices.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Self::without_acceleration(vertices, faces)?;
        mesh.bvh = Some(mesh.build_bvh());
        Ok(mesh)
    }

    /// Like [`TriangleMesh::new`] but every query scans all faces.
    pub fn without_acceleration(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let vertices: Vec<V3> = vertices.into_iter().map(V3::from).collect();
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument("mesh vertices must be finite".into()));
        }
        let mut face_normals = Vec::with_capacity(faces.len());
        let mut vertex_acc = vec![V3::zeros(); vertices.len()];
        let mut edge_acc: HashMap<(usize, usize), V3> = HashMap::new();
        let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidArgument(format!("face {fi} references a missing vertex")));
            }
            let [a, b, c] = f.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let len = cross.norm();
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidArgument(format!("face {fi} has zero area")));
            }
            let n = cross / len;
            face_normals.push(n);
            for k in 0..3 {
                let (i, j, l) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                let u = (vertices[j] - vertices[i]).normalize();
                let v = (vertices[l] - vertices[i]).normalize();
                let angle = u.dot(&v).clamp(-1.0, 1.0).acos();
                vertex_acc[i] += angle * n;
                *edge_acc.entry(edge_key(i, j)).or_insert_with(V3::zeros) += n;
                *edge_use.entry(edge_key(i, j)).or_insert(0) += 1;
            }
        }
        let vertex_normals = vertex_acc.into_iter().map(normalize_or_zero).collect();
        let edge_normals = edge_acc.into_iter().map(|(k, v)| (k, normalize_or_zero(v))).collect();
        let mut mesh = Self {
            vertices,
            faces,
            face_normals,
            vertex_normals,
            edge_normals,
            edge_use,
            surface_eps: 0.0,
            bvh: None,
        };
        if let Some((lo, hi)) = mesh.bounding_box() {
            let diag = (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt();
            mesh.surface_eps = 1e-12 * diag;
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> Vec<[f64; 3]> {
        self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_normal(&self, face: usize) -> [f64; 3] {
        let n = self.face_normals[face];
        [n.x, n.y, n.z]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Edges not shared by exactly two faces.
    pub fn non_manifold_edge_count(&self) -> usize {
        self.edge_use.values().filter(|&&n| n != 2).count()
    }

    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = self.vertices.first()?;
        let (lo, hi) = self.vertices.iter().fold((*first, *first), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
        Some(([lo.x, lo.y, lo.z], [hi.x, hi.y, hi.z]))
    }

    fn pseudo_normal(&self, face: usize, feature: Feature) -> V3 {
        match feature {
            Feature::Face => self.face_normals[face],
            Feature::Edge(a, b) => self.edge_normals[&edge_key(a, b)],
            Feature::Vertex(v) => self.vertex_normals[v],
        }
    }

    fn face_query(&self, face: usize, p: &V3) -> (f64, V3, Feature) {
        let f = self.faces[face];
        let (q, feat) = closest_point_on_triangle(p, &f.map(|i| self.vertices[i]));
        let feature = match feat {
            LocalFeature::Face => Feature::Face,
            LocalFeature::Edge(i, j) => Feature::Edge(f[i], f[j]),
            LocalFeature::Vertex(i) => Feature::Vertex(f[i]),
        };
        ((p - q).norm_squared(), q, feature)
    }

    fn closest_brute(&self, p: &V3) -> (usize, f64, V3, Feature) {
        let mut best = (usize::MAX, f64::INFINITY, V3::zeros(), Feature::Face);
        for fi in 0..self.faces.len() {
            let (d2, q, feat) = self.face_query(fi, p);
            if d2 < best.1 {
                best = (fi, d2, q, feat);
            }
        }
        best
    }

    fn closest_bvh(&self, bvh: &Bvh, p: &V3) -> (usize, f64, V3, Feature) {
        let mut best = (usize::MAX, f64::INFINITY, V3::zeros(), Feature::Face);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &bvh.nodes[ni];
            if box_distance_sq(&node.lo, &node.hi, p) > best.1 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &fi in &bvh.order[start..end] {
                        let (d2, q, feat) = self.face_query(fi, p);
                        if d2 < best.1 || (d2 == best.1 && fi < best.0) {
                            best = (fi, d2, q, feat);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = box_distance_sq(&bvh.nodes[left].lo, &bvh.nodes[left].hi, p);
                    let dr = box_distance_sq(&bvh.nodes[right].lo, &bvh.nodes[right].hi, p);
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }

    fn signed_from(&self, p: &V3, (face, d2, q, feature): (usize, f64, V3, Feature)) -> (f64, [f64; 3]) {
        let d = d2.sqrt();
        if d <= self.surface_eps {
            let n = self.pseudo_normal(face, feature);
            return (0.0, [n.x, n.y, n.z]);
        }
        let diff = p - q;
        let sign = if diff.dot(&self.pseudo_normal(face, feature)) < 0.0 { -1.0 } else { 1.0 };
        let g = sign * diff / d;
        (sign * d, [g.x, g.y, g.z])
    }

    fn point(p: &[f64]) -> Result<V3> {
        if p.len() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, actual: p.len() });
        }
        Ok(V3::new(p[0], p[1], p[2]))
    }

    /// Signed distance and its unit gradient at `p`.
    pub fn signed_distance(&self, p: &[f64]) -> Result<(f64, [f64; 3])> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("signed distance of an empty mesh".into()));
        }
        let p = Self::point(p)?;
        let hit = match &self.bvh {
            Some(bvh) => self.closest_bvh(bvh, &p),
            None => self.closest_brute(&p),
        };
        Ok(self.signed_from(&p, hit))
    }

    /// Same as [`TriangleMesh::signed_distance`] but always scans every face.
    pub fn signed_distance_brute_force(&self, p: &[f64]) -> Result<(f64, [f64; 3])> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("signed distance of an empty mesh".into()));
        }
        let p = Self::point(p)?;
        Ok(self.signed_from(&p, self.closest_brute(&p)))
    }

    /// Inside test by majority vote of ray-crossing parity along three fixed
    /// skew directions.
    pub fn contains_by_ray_parity(&self, p: &[f64]) -> Result<bool> {
        let p = Self::point(p)?;
        const DIRS: [[f64; 3]; 3] =
            [[0.5773, 0.5774, 0.5775], [-0.2672, 0.8018, -0.5345], [0.7072, -0.1, 0.7]];
        let votes = DIRS
            .iter()
            .filter(|d| {
                let dir = V3::from(**d).normalize();
                let hits = self
                    .faces
                    .iter()
                    .filter(|f| ray_hits_triangle(&p, &dir, &f.map(|i| self.vertices[i])))
                    .count();
                hits % 2 == 1
            })
            .count();
        Ok(votes >= 2)
    }

    fn build_bvh(&self) -> Bvh {
        let centroids: Vec<V3> =
            self.faces.iter().map(|f| f.iter().map(|&i| self.vertices[i]).sum::<V3>() / 3.0).collect();
        let mut order: Vec<usize> = (0..self.faces.len()).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let n = order.len();
            self.build_node(&mut nodes, &mut order, &centroids, 0, n);
        }
        Bvh { nodes, order }
    }

    fn build_node(
        &self,
        nodes: &mut Vec<BvhNode>,
        order: &mut [usize],
        centroids: &[V3],
        start: usize,
        end: usize,
    ) -> usize {
        let mut lo = V3::repeat(f64::INFINITY);
        let mut hi = V3::repeat(f64::NEG_INFINITY);
        for &fi in &order[start..end] {
            for &vi in &self.faces[fi] {
                lo = lo.inf(&self.vertices[vi]);
                hi = hi.sup(&self.vertices[vi]);
            }
        }
        let idx = nodes.len();
        nodes.push(BvhNode { lo, hi, kind: NodeKind::Leaf { start, end } });
        if end - start > LEAF_SIZE {
            let ext = hi - lo;
            let axis = ext.imax();
            let mid = start + (end - start) / 2;
            order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
            });
            let left = self.build_node(nodes, order, centroids, start, mid);
            let right = self.build_node(nodes, order, centroids, mid, end);
            nodes[idx].kind = NodeKind::Inner { left, right };
        }
        idx
    }
}

fn box_distance_sq(lo: &V3, hi: &V3, p: &V3) -> f64 {
    (0..3).map(|d| (lo[d] - p[d]).max(0.0).max(p[d] - hi[d]).powi(2)).sum()
}

#[derive(Debug, Clone, Copy)]
enum LocalFeature {
    Face,
    Edge(usize, usize),
    Vertex(usize),
}

/// Closest point on triangle `t` to `p` with the Voronoi region it falls in.
fn closest_point_on_triangle(p: &V3, t: &[V3; 3]) -> (V3, LocalFeature) {
    let [a, b, c] = *t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, LocalFeature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, LocalFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + v * ab, LocalFeature::Edge(0, 1));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, LocalFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + w * ac, LocalFeature::Edge(0, 2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + w * (c - b), LocalFeature::Edge(1, 2));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, LocalFeature::Face)
}

/// Möller–Trumbore ray/triangle intersection for `t > 0`.
fn ray_hits_triangle(origin: &V3, dir: &V3, t: &[V3; 3]) -> bool {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let s = origin - t[0];
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    inv * e2.dot(&q) > 1e-12
}

/// Free-function form of [`TriangleMesh::signed_distance`].
pub fn mesh_signed_distance(mesh: &TriangleMesh, p: &[f64]) -> Result<(f64, [f64; 3])> {
    mesh.signed_distance(p)
}

/// Axis-aligned cube of side `side` centered at `center`, 12 outward triangles.
pub fn cube_mesh(center: [f64; 3], side: f64) -> Result<TriangleMesh> {
    let h = 0.5 * side;
    let vertices = (0..8)
        .map(|i| {
            let s = |bit: usize| if i & bit != 0 { h } else { -h };
            [center[0] + s(1), center[1] + s(2), center[2] + s(4)]
        })
        .collect();
    // Vertex i has x from bit 0, y from bit 1, z from bit 2.
    let quads = [
        [0, 2, 3, 1], // z-
        [4, 5, 7, 6], // z+
        [0, 1, 5, 4], // y-
        [2, 6, 7, 3], // y+
        [0, 4, 6, 2], // x-
        [1, 3, 7, 5], // x+
    ];
    let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriangleMesh::new(vertices, faces)
}

/// Unit cube centered at the origin.
pub fn unit_cube() -> TriangleMesh {
    cube_mesh([0.0; 3], 1.0).expect("static cube is valid")
}

/// Icosahedron subdivided `subdivisions` times and projected onto a sphere.
pub fn icosphere(center: [f64; 3], radius: f64, subdivisions: usize) -> Result<TriangleMesh> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidArgument(format!("icosphere radius must be > 0, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<V3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| V3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<V3>| -> usize {
            *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let c = V3::from(center);
    let vertices = verts.iter().map(|v| (c + radius * v).into()).collect();
    TriangleMesh::new(vertices, faces)
}

/// Area-weighted uniform samples with face normals, each tagged with its face.
pub fn sample_surface_indexed(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<(usize, SurfaceSample)>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    if mesh.is_empty() {
        return Err(Error::InvalidArgument("cannot sample an empty mesh".into()));
    }
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).collect();
    let picker = WeightedIndex::new(&areas).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let fi = picker.sample(&mut rng);
            let [a, b, c] = mesh.faces[fi].map(|i| mesh.vertices[i]);
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            let p = (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c;
            let nrm = mesh.face_normals[fi];
            Ok((fi, SurfaceSample::new(vec![p.x, p.y, p.z], vec![nrm.x, nrm.y, nrm.z])?))
        })
        .collect()
}

pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    Ok(sample_surface_indexed(mesh, n, seed)?.into_iter().map(|(_, s)| s).collect())
}

/// Exact signed distance with gradient.
pub trait GroundTruth: Sync {
    fn dim(&self) -> usize;
    fn signed_distance(&self, p: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl GroundTruth for TriangleMesh {
    fn dim(&self) -> usize {
        3
    }

    fn signed_distance(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (s, g) = TriangleMesh::signed_distance(self, p)?;
        Ok((s, g.to_vec()))
    }
}

/// Analytic D-sphere; a circle when two-dimensional.
#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) || center.is_empty() {
            return Err(Error::InvalidArgument(format!("invalid sphere (radius {radius})")));
        }
        Ok(Self { center, radius })
    }

    /// `n` surface samples with outward normals, uniform in direction.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<SurfaceSample> {
        self.sample_biased(n, seed, 0.0)
    }

    /// Directions drawn as normalize(g + bias·e₀) with g standard normal, so
    /// `bias > 0` crowds samples toward the +x pole.
    pub fn sample_biased(&self, n: usize, seed: u64, bias: f64) -> Vec<SurfaceSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let mut g: Vec<f64> = (0..self.center.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            g[0] += bias;
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            g.iter_mut().for_each(|v| *v /= norm);
            let p = self.center.iter().zip(&g).map(|(c, d)| c + self.radius * d).collect();
            out.push(SurfaceSample::new(p, g).expect("unit normal"));
        }
        out
    }
}

impl GroundTruth for Sphere {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn signed_distance(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        if p.len() != self.center.len() {
            return Err(Error::DimensionMismatch { expected: self.center.len(), actual: p.len() });
        }
        let diff: Vec<f64> = p.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let grad = if r > 0.0 { diff.iter().map(|v| v / r).collect() } else { vec![0.0; p.len()] };
        Ok((r - self.radius, grad))
    }
}

/// Count, mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Empty input yields count 0 with mean and std 0.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { count: values.len(), mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub mae: Summary,
    pub gcd: Summary,
}

/// MAE and GCD over all points and split at `threshold` on ground-truth |s|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub overall: BucketMetrics,
    pub near: BucketMetrics,
    pub far: BucketMetrics,
    /// Points left out of GCD because either gradient vanished.
    pub gcd_excluded: usize,
}

/// Per-point comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointError {
    pub truth: f64,
    pub mae: f64,
    pub gcd: Option<f64>,
}

pub fn absolute_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs()
}

/// `1 − cos∠(a, b)`, `None` when either vector is (numerically) zero.
pub fn gradient_cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return None;
    }
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Some(1.0 - cos.clamp(-1.0, 1.0))
}

impl MetricsReport {
    pub fn from_errors(errors: &[PointError], threshold: f64) -> Self {
        let bucket = |keep: &dyn Fn(&PointError) -> bool| {
            let mae: Vec<f64> = errors.iter().filter(|e| keep(e)).map(|e| e.mae).collect();
            let gcd: Vec<f64> = errors.iter().filter(|e| keep(e)).filter_map(|e| e.gcd).collect();
            BucketMetrics { mae: Summary::of(&mae), gcd: Summary::of(&gcd) }
        };
        Self {
            threshold,
            overall: bucket(&|_| true),
            near: bucket(&|e| e.truth.abs() < threshold),
            far: bucket(&|e| e.truth.abs() >= threshold),
            gcd_excluded: errors.iter().filter(|e| e.gcd.is_none()).count(),
        }
    }

    /// Flat `key=value` lines with stable key names.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "threshold={:?}", self.threshold);
        for (name, b) in [("overall", &self.overall), ("near", &self.near), ("far", &self.far)] {
            for (metric, s) in [("mae", &b.mae), ("gcd", &b.gcd)] {
                let _ = writeln!(out, "{name}.{metric}.count={}", s.count);
                let _ = writeln!(out, "{name}.{metric}.mean={:?}", s.mean);
                let _ = writeln!(out, "{name}.{metric}.std={:?}", s.std);
            }
        }
        let _ = writeln!(out, "gcd_excluded={}", self.gcd_excluded);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad metrics record: {e}")))
    }
}

/// Per-point errors of `model` against `truth`, in input order.
pub fn point_errors(model: &FieldModel, truth: &dyn GroundTruth, points: &[Vec<f64>]) -> Result<Vec<PointError>> {
    points
        .par_iter()
        .map(|p| {
            let q = model.query(p)?;
            let (s, g) = truth.signed_distance(p)?;
            Ok(PointError {
                truth: s,
                mae: absolute_error(q.distance, s),
                gcd: gradient_cosine_distance(&q.gradient, &g),
            })
        })
        .collect()
}

pub fn evaluate(model: &FieldModel, truth: &dyn GroundTruth, points: &[Vec<f64>]) -> Result<MetricsReport> {
    evaluate_with_threshold(model, truth, points, NEAR_THRESHOLD)
}

pub fn evaluate_with_threshold(
    model: &FieldModel,
    truth: &dyn GroundTruth,
    points: &[Vec<f64>],
    threshold: f64,
) -> Result<MetricsReport> {
    if truth.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), actual: truth.dim() });
    }
    let errors = point_errors(model, truth, points)?;
    let report = MetricsReport::from_errors(&errors, threshold);
    if report.gcd_excluded > 0 {
        log::warn!("{} evaluation points had a vanishing gradient and were left out of GCD", report.gcd_excluded);
    }
    Ok(report)
}

/// Uniform random points in the model domain.
pub fn uniform_points(config: &BasisConfig, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| config.domain().iter().map(|iv| iv.lo + (iv.hi - iv.lo) * rng.random::<f64>()).collect())
        .collect()
}

/// Rejection-sampled points in the domain with ground-truth |s| < `band`.
pub fn shell_points(
    truth: &dyn GroundTruth,
    config: &BasisConfig,
    n: usize,
    band: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let max_tries = n.saturating_mul(10_000).max(10_000);
    for _ in 0..max_tries {
        if out.len() == n {
            return Ok(out);
        }
        let p: Vec<f64> = config.domain().iter().map(|iv| iv.lo + (iv.hi - iv.lo) * rng.random::<f64>()).collect();
        if truth.signed_distance(&p)?.0.abs() < band {
            out.push(p);
        }
    }
    if out.len() == n {
        Ok(out)
    } else {
        Err(Error::InvalidArgument(format!("only {} of {n} shell points found within band {band}", out.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_examples() {
        let cube = unit_cube();
        let (s, _) = cube.signed_distance(&[0.0, 0.0, 0.0]).unwrap();
        assert!((s + 0.5).abs() < 1e-15);
        let (s, g) = cube.signed_distance(&[1.0, 0.0, 0.0]).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        assert!((g[0] - 1.0).abs() < 1e-15 && g[1].abs() < 1e-15 && g[2].abs() < 1e-15);
        let (s, g) = cube.signed_distance(&[1.0, 1.0, 1.0]).unwrap();
        assert!((s - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((g[0] - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let (s, _) = cube.signed_distance(&[1.0, 1.0, 0.0]).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        let (s, g) = cube.signed_distance(&[0.5, 0.1, 0.2]).unwrap();
        assert_eq!(s, 0.0); // on the x+ face
        assert_eq!(g, [1.0, 0.0, 0.0]);
        assert_eq!(cube.non_manifold_edge_count(), 0);
        assert!((cube.surface_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let empty = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(empty.signed_distance(&[0.0; 3]).is_err());
        assert!(unit_cube().signed_distance(&[0.0; 2]).is_err());
        assert!(TriangleMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 2]]).is_err());
        assert!(TriangleMesh::new(vec![[0.0; 3]], vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn pseudo_normals_are_unit() {
        let m = icosphere([0.0; 3], 1.0, 1).unwrap();
        for n in m.vertex_normals.iter().chain(m.edge_normals.values()) {
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.faces().len(), 80);
    }

    #[test]
    fn closest_point_regions_match_brute_force_projection() {
        let tri = [V3::new(0.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = V3::new(rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0), rng.random_range(-1.0..1.0));
            let (q, _) = closest_point_on_triangle(&p, &tri);
            // Dense barycentric scan as an independent check.
            let mut best = f64::INFINITY;
            let steps = 200;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let c = tri[0] + (i as f64 / steps as f64) * (tri[1] - tri[0]) + (j as f64 / steps as f64) * (tri[2] - tri[0]);
                    best = best.min((p - c).norm());
                }
            }
            let d = (p - q).norm();
            assert!(d <= best + 1e-12 && best - d < 1e-2);
        }
    }

    #[test]
    fn sign_matches_ray_parity() {
        let meshes = [unit_cube(), icosphere([0.1, -0.2, 0.05], 0.6, 2).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mesh in &meshes {
            let mut agree = 0;
            for _ in 0..1000 {
                let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (s, _) = mesh.signed_distance(&p).unwrap();
                if (s < 0.0) == mesh.contains_by_ray_parity(&p).unwrap() {
                    agree += 1;
                }
            }
            assert_eq!(agree, 1000);
        }
    }

    #[test]
    fn bvh_matches_brute_force_exactly() {
        let mesh = icosphere([0.0; 3], 0.5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(mesh.signed_distance(&p).unwrap(), mesh.signed_distance_brute_force(&p).unwrap());
        }
    }

    #[test]
    fn sampling_is_area_weighted_and_deterministic() {
        let cube = unit_cube();
        let n = 1000;
        let s = sample_surface_indexed(&cube, n, 42).unwrap();
        let mut counts = [0usize; 12];
        for (f, sample) in &s {
            counts[*f] += 1;
            let (d, _) = cube.signed_distance(&sample.position).unwrap();
            assert!(d.abs() < 1e-9);
            assert_eq!(sample.normal, cube.face_normal(*f).to_vec());
        }
        let p = 1.0 / 12.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
        assert_eq!(sample_surface(&cube, 50, 9).unwrap(), sample_surface(&cube, 50, 9).unwrap());
        assert_ne!(sample_surface(&cube, 50, 9).unwrap(), sample_surface(&cube, 50, 10).unwrap());
        assert!(sample_surface(&cube, 0, 1).is_err());
    }

    #[test]
    fn metric_definitions() {
        assert!((absolute_error(0.10, 0.08) - 0.02).abs() < 1e-15);
        assert_eq!(gradient_cosine_distance(&[1.0, 0.0], &[2.0, 0.0]), Some(0.0));
        assert_eq!(gradient_cosine_distance(&[1.0, 0.0], &[0.0, 3.0]), Some(1.0));
        assert_eq!(gradient_cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]), Some(2.0));
        assert_eq!(gradient_cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn report_buckets_partition_and_serialize() {
        let errors = vec![
            PointError { truth: 0.01, mae: 0.1, gcd: Some(0.2) },
            PointError { truth: -0.2, mae: 0.3, gcd: None },
            PointError { truth: 0.05, mae: 0.5, gcd: Some(0.0) },
        ];
        let r = MetricsReport::from_errors(&errors, NEAR_THRESHOLD);
        assert_eq!(r.near.mae.count + r.far.mae.count, r.overall.mae.count);
        assert_eq!(r.near.mae.count, 1);
        assert_eq!(r.gcd_excluded, 1);
        assert_eq!(r.overall.gcd.count, 2);
        assert!((r.far.mae.mean - 0.4).abs() < 1e-15);
        assert!((r.far.mae.std - 0.1).abs() < 1e-15);
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
        let kv = r.to_key_value();
        assert!(kv.contains("near.mae.count=1\n"));
        assert!(kv.contains("gcd_excluded=1\n"));
    }

    #[test]
    fn evaluate_exact_sphere_prior() {
        let cfg = BasisConfig::unit(3, 4, 3).unwrap();
        let truth = Sphere::new(vec![0.5; 3], 0.3).unwrap();
        let prior = crate::field::init_spherical_prior(&cfg, &[0.5; 3], 0.3, 100.0).unwrap();
        let pts = shell_points(&truth, &cfg, 300, NEAR_THRESHOLD, 1).unwrap();
        let r = evaluate(&prior, &truth, &pts).unwrap();
        assert_eq!(r.near.mae.count, 300);
        assert!(r.near.mae.mean < 0.01, "{}", r.to_key_value());
        assert!(r.near.gcd.mean < 0.01);
        let mesh_pts = uniform_points(&cfg, 10, 2);
        assert!(evaluate(&prior, &unit_cube(), &mesh_pts).is_ok());
        let cfg2 = BasisConfig::unit(3, 2, 2).unwrap();
        let m2 = FieldModel::constant(cfg2, 0.0, 1.0).unwrap();
        assert!(evaluate(&m2, &truth, &[]).is_err());
    }
}
