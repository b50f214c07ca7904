//! Rectilinear tensor grids over a domain's bounding box, optionally graded
//! towards prescribed centres, with interior masks and boundary cut data.

use crate::geometry::{DomainShape, Point};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const NONE: u32 = u32::MAX;

/// Smallest number of nodes per axis of a grid.
pub const MIN_NODES: usize = 17;

/// A cluster of refinement on one axis: nodes accumulate at `center` with
/// spacing close to `core` there, relaxing geometrically (ratio ≈ 1 + 1/`grading`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: f64,
    pub core: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AxisMap {
    Uniform {
        x0: f64,
        h: f64,
    },
    /// s(x) = (x − x0)/h0 + Σ_k g [asinh((x − c_k)/ℓ_k) − asinh((x0 − c_k)/ℓ_k)],
    /// nodes at s = i·ds.
    Graded {
        x0: f64,
        h0: f64,
        grading: f64,
        clusters: Vec<(f64, f64)>,
        ds: f64,
    },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub map: AxisMap,
    pub coords: Vec<f64>,
}

impl Axis {
    pub fn uniform(x0: f64, h: f64, n: usize) -> Self {
        Axis { map: AxisMap::Uniform { x0, h }, coords: (0..n).map(|i| x0 + h * i as f64).collect() }
    }

    /// Graded axis over `[x0, x1]` with far-field spacing about `h0`.
    pub fn graded(x0: f64, x1: f64, h0: f64, clusters: &[Cluster], grading: f64) -> Self {
        let cl: Vec<(f64, f64)> =
            merge_clusters(clusters, grading).into_iter().map(|c| (c.center, c.core * grading)).collect();
        let s = |x: f64| graded_s(x, x0, h0, grading, &cl);
        let total = s(x1);
        let n = total.ceil() as usize + 1;
        let ds = total / (n - 1) as f64;
        let map = AxisMap::Graded { x0, h0, grading, clusters: cl, ds };
        let mut axis = Axis { map, coords: Vec::new() };
        axis.coords = (0..n).map(|i| axis.invert(i as f64 * ds, x0, x1)).collect();
        axis.coords[0] = x0;
        axis.coords[n - 1] = x1;
        axis
    }

    fn invert(&self, target: f64, x0: f64, x1: f64) -> f64 {
        let AxisMap::Graded { h0, grading, clusters, .. } = &self.map else { unreachable!() };
        // s is increasing but very steep near cores; bisection is robust
        let (mut lo, mut hi) = (x0, x1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if graded_s(mid, x0, *h0, *grading, clusters) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.map, AxisMap::Uniform { .. })
    }

    /// Axis with every cell bisected; the old nodes are a subset of the new ones.
    pub fn refined(&self) -> Self {
        match &self.map {
            AxisMap::Uniform { x0, h } => Axis::uniform(*x0, h / 2.0, 2 * self.len() - 1),
            AxisMap::Graded { x0, h0, grading, clusters, ds } => {
                let mut axis = Axis {
                    map: AxisMap::Graded {
                        x0: *x0,
                        h0: *h0,
                        grading: *grading,
                        clusters: clusters.clone(),
                        ds: ds / 2.0,
                    },
                    coords: Vec::with_capacity(2 * self.len() - 1),
                };
                let x1 = *self.coords.last().unwrap();
                let mut c = Vec::with_capacity(2 * self.len() - 1);
                for i in 0..self.len() - 1 {
                    c.push(self.coords[i]);
                    c.push(axis.invert((i as f64 + 0.5) * ds, *x0, x1));
                }
                c.push(x1);
                axis.coords = c;
                axis
            }
            AxisMap::Explicit => {
                let mut c = Vec::with_capacity(2 * self.len() - 1);
                for w in self.coords.windows(2) {
                    c.push(w[0]);
                    c.push(0.5 * (w[0] + w[1]));
                }
                c.push(*self.coords.last().unwrap());
                Axis { map: AxisMap::Explicit, coords: c }
            }
        }
    }

    /// Dual-cell widths (x_{i+1} − x_{i−1})/2, halved at the ends.
    pub fn dual_widths(&self) -> Vec<f64> {
        let c = &self.coords;
        let n = c.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { c[i] - c[i - 1] } else { 0.0 };
                let r = if i + 1 < n { c[i + 1] - c[i] } else { 0.0 };
                0.5 * (l + r)
            })
            .collect()
    }

    /// Index of the cell `[x_i, x_{i+1}]` containing `x`, clamped to valid cells.
    pub fn locate(&self, x: f64) -> usize {
        let c = &self.coords;
        match self.map {
            AxisMap::Uniform { x0, h } => (((x - x0) / h).floor().max(0.0) as usize).min(c.len() - 2),
            _ => c.partition_point(|&v| v <= x).saturating_sub(1).min(c.len() - 2),
        }
    }

    pub fn min_spacing_near(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let lo = i.saturating_sub(1);
        let hi = (i + 2).min(self.len() - 1);
        (lo..hi).map(|k| self.coords[k + 1] - self.coords[k]).fold(f64::INFINITY, f64::min)
    }
}

fn graded_s(x: f64, x0: f64, h0: f64, grading: f64, clusters: &[(f64, f64)]) -> f64 {
    (x - x0) / h0
        + clusters.iter().map(|&(c, l)| grading * (((x - c) / l).asinh() - ((x0 - c) / l).asinh())).sum::<f64>()
}

/// Clusters closer than a few core widths are merged (keeping the finer core).
fn merge_clusters(clusters: &[Cluster], grading: f64) -> Vec<Cluster> {
    let mut v: Vec<Cluster> = clusters.to_vec();
    v.sort_by(|a, b| a.center.total_cmp(&b.center));
    let mut out: Vec<Cluster> = Vec::new();
    for c in v {
        if let Some(last) = out.last_mut() {
            let reach = 2.0 * grading * last.core.max(c.core);
            if (c.center - last.center).abs() < reach {
                let w = if c.core < last.core { c } else { *last };
                *last = Cluster { center: 0.5 * (last.center + c.center), core: w.core };
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Arm directions: east, west, north, south.
pub const EAST: usize = 0;
pub const WEST: usize = 1;
pub const NORTH: usize = 2;
pub const SOUTH: usize = 3;

#[derive(Debug, Clone)]
pub struct Grid {
    pub x: Axis,
    pub y: Axis,
    pub shape: Option<DomainShape>,
    mask: Vec<bool>,
    interior: Vec<u32>,
    slot: Vec<u32>,
    /// Per interior slot: distance along each arm to the neighbour or the boundary.
    arms: Vec<[f64; 4]>,
    /// Per interior slot: neighbour slots (NONE where the arm is cut by the boundary).
    neighbors: Vec<[u32; 4]>,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

impl Grid {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_uniform(&self) -> bool {
        self.x.is_uniform() && self.y.is_uniform()
    }

    /// Spacing of a uniform axis pair, or NaN on graded grids.
    pub fn spacing(&self) -> (f64, f64) {
        match (&self.x.map, &self.y.map) {
            (AxisMap::Uniform { h: hx, .. }, AxisMap::Uniform { h: hy, .. }) => (*hx, *hy),
            _ => (f64::NAN, f64::NAN),
        }
    }

    pub fn origin(&self) -> Point {
        [self.x.coords[0], self.y.coords[0]]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx(), k / self.nx())
    }

    #[inline]
    pub fn point(&self, k: usize) -> Point {
        let (i, j) = self.ij(k);
        [self.x.coords[i], self.y.coords[j]]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_interior(&self, k: usize) -> bool {
        self.mask[k]
    }

    /// Node ids of interior nodes, in row-major order.
    pub fn interior(&self) -> &[u32] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Interior slot of node `k`, or `NONE`.
    pub fn slot(&self, k: usize) -> u32 {
        self.slot[k]
    }

    pub fn arms(&self, s: usize) -> [f64; 4] {
        self.arms[s]
    }

    pub fn neighbors(&self, s: usize) -> [u32; 4] {
        self.neighbors[s]
    }

    /// Dual-cell area of interior slot `s` (the quadrature weight).
    pub fn weight(&self, s: usize) -> f64 {
        let (i, j) = self.ij(self.interior[s] as usize);
        self.wx[i] * self.wy[j]
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_interior()).map(|s| self.weight(s)).collect()
    }

    pub fn dual_widths(&self) -> (&[f64], &[f64]) {
        (&self.wx, &self.wy)
    }

    /// Boundary point at the end of a cut arm of slot `s`.
    pub fn arm_end(&self, s: usize, dir: usize) -> Point {
        let p = self.point(self.interior[s] as usize);
        let d = self.arms[s][dir];
        match dir {
            EAST => [p[0] + d, p[1]],
            WEST => [p[0] - d, p[1]],
            NORTH => [p[0], p[1] + d],
            _ => [p[0], p[1] - d],
        }
    }

    /// Smallest spacing among cells adjacent to `p`, over both axes.
    pub fn local_spacing(&self, p: Point) -> f64 {
        self.x.min_spacing_near(p[0]).max(self.y.min_spacing_near(p[1]))
    }

    /// Uniform grid covering the bounding box inflated by one spacing:
    /// h = side/(n − 1) per axis, n + 2 nodes per axis.
    pub fn uniform(shape: &DomainShape, n: usize) -> Self {
        assert!(n >= MIN_NODES, "grid needs at least {MIN_NODES} nodes per axis");
        let bb = shape.bounding_box();
        let hx = (bb[1] - bb[0]) / (n - 1) as f64;
        let hy = (bb[3] - bb[2]) / (n - 1) as f64;
        let x = Axis::uniform(bb[0] - hx, hx, n + 2);
        let y = Axis::uniform(bb[2] - hy, hy, n + 2);
        Grid::from_axes(x, y, Some(shape.clone()), None)
    }

    /// Like [`Grid::uniform`] but with nodes clustered around the given centres.
    pub fn graded(shape: &DomainShape, n: usize, cx: &[Cluster], cy: &[Cluster], grading: f64) -> Self {
        assert!(n >= MIN_NODES, "grid needs at least {MIN_NODES} nodes per axis");
        let bb = shape.bounding_box();
        let hx = (bb[1] - bb[0]) / (n - 1) as f64;
        let hy = (bb[3] - bb[2]) / (n - 1) as f64;
        let axis = |lo: f64, hi: f64, h: f64, cl: &[Cluster]| {
            let cl: Vec<Cluster> = cl.iter().copied().filter(|c| c.core < h).collect();
            if cl.is_empty() {
                Axis::uniform(lo - h, h, n + 2)
            } else {
                Axis::graded(lo - h, hi + h, h, &cl, grading)
            }
        };
        let x = axis(bb[0], bb[1], hx, cx);
        let y = axis(bb[2], bb[3], hy, cy);
        Grid::from_axes(x, y, Some(shape.clone()), None)
    }

    /// Builds a grid from explicit axes. The mask comes from the shape when
    /// given, otherwise from `mask`; without a shape, arms are not cut.
    pub fn from_axes(x: Axis, y: Axis, shape: Option<DomainShape>, mask: Option<Vec<bool>>) -> Self {
        let nx = x.len();
        let ny = y.len();
        let mask = match (&shape, mask) {
            (Some(s), _) => {
                let mut m = vec![false; nx * ny];
                for j in 0..ny {
                    for i in 0..nx {
                        m[j * nx + i] = s.contains([x.coords[i], y.coords[j]]);
                    }
                }
                // keep the stencil inside the array
                for j in 0..ny {
                    for i in 0..nx {
                        if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                            m[j * nx + i] = false;
                        }
                    }
                }
                m
            }
            (None, Some(m)) => {
                assert_eq!(m.len(), nx * ny);
                let mut m = m;
                for j in 0..ny {
                    for i in 0..nx {
                        if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                            m[j * nx + i] = false;
                        }
                    }
                }
                m
            }
            (None, None) => panic!("grid needs a shape or a mask"),
        };
        let mut slot = vec![NONE; nx * ny];
        let mut interior = Vec::new();
        for (k, &m) in mask.iter().enumerate() {
            if m {
                slot[k] = interior.len() as u32;
                interior.push(k as u32);
            }
        }
        let wx = x.dual_widths();
        let wy = y.dual_widths();
        let mut arms = Vec::with_capacity(interior.len());
        let mut neighbors = Vec::with_capacity(interior.len());
        for &k in &interior {
            let k = k as usize;
            let (i, j) = (k % nx, k / nx);
            let p = [x.coords[i], y.coords[j]];
            let nbr = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)];
            let mut a = [0.0; 4];
            let mut nb = [NONE; 4];
            for (dir, &(ii, jj)) in nbr.iter().enumerate() {
                let q = [x.coords[ii], y.coords[jj]];
                let full = (q[0] - p[0]).abs() + (q[1] - p[1]).abs();
                let kk = jj * nx + ii;
                if mask[kk] {
                    a[dir] = full;
                    nb[dir] = slot[kk];
                } else {
                    let frac = match &shape {
                        Some(s) if s.contains(p) && !s.contains(q) => s.crossing(p, q),
                        _ => 1.0,
                    };
                    // guard against arms so short that the row degenerates
                    a[dir] = (frac * full).max(1e-6 * full);
                }
            }
            arms.push(a);
            neighbors.push(nb);
        }
        Grid { x, y, shape, mask, interior, slot, arms, neighbors, wx, wy }
    }

    /// Grid with every cell bisected.
    pub fn refined(&self) -> Self {
        let mask = if self.shape.is_none() {
            // nearest coarse node decides membership
            let x = self.x.refined();
            let y = self.y.refined();
            let mut m = vec![false; x.len() * y.len()];
            for j in 0..y.len() {
                for i in 0..x.len() {
                    m[j * x.len() + i] = self.mask[self.node(i / 2, j / 2)];
                }
            }
            Some(m)
        } else {
            None
        };
        Grid::from_axes(self.x.refined(), self.y.refined(), self.shape.clone(), mask)
    }
}

/// Scalar field on all grid nodes; exterior nodes hold 0.
#[derive(Debug, Clone)]
pub struct GridField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GridField { grid, values: vec![0.0; n] }
    }

    /// Samples `f` at interior nodes.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64 + Sync) -> Self {
        let vals = crate::par::map_indices(grid.n_interior(), |s| f(grid.point(grid.interior()[s] as usize)));
        Self::from_interior(grid, &vals)
    }

    pub fn from_interior(grid: Arc<Grid>, v: &[f64]) -> Self {
        assert_eq!(v.len(), grid.n_interior());
        let mut values = vec![0.0; grid.len()];
        for (s, &k) in grid.interior().iter().enumerate() {
            values[k as usize] = v[s];
        }
        GridField { grid, values }
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior().iter().map(|&k| self.values[k as usize]).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.grid.interior().iter().map(|&k| self.values[k as usize].abs()).fold(0.0, f64::max)
    }

    /// Bilinear interpolation (exterior nodes count as 0).
    pub fn interpolate(&self, p: Point) -> f64 {
        let g = &self.grid;
        let i = g.x.locate(p[0]);
        let j = g.y.locate(p[1]);
        let tx = ((p[0] - g.x.coords[i]) / (g.x.coords[i + 1] - g.x.coords[i])).clamp(0.0, 1.0);
        let ty = ((p[1] - g.y.coords[j]) / (g.y.coords[j + 1] - g.y.coords[j])).clamp(0.0, 1.0);
        let v = |a: usize, b: usize| self.values[g.node(a, b)];
        (1.0 - ty) * ((1.0 - tx) * v(i, j) + tx * v(i + 1, j)) + ty * ((1.0 - tx) * v(i, j + 1) + tx * v(i + 1, j + 1))
    }

    pub fn neg(&self) -> Self {
        GridField { grid: self.grid.clone(), values: self.values.iter().map(|v| -v).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_axis_has_fine_core() {
        let a = Axis::graded(-1.0, 1.0, 0.01, &[Cluster { center: 0.3, core: 1e-4 }], 6.0);
        let i = a.locate(0.3);
        let h = a.coords[i + 1] - a.coords[i];
        assert!(h < 1.2e-4 && h > 0.8e-4, "{h}");
        let hmax = a.coords.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(hmax <= 0.01 + 1e-12, "{hmax}");
        assert!(a.coords.windows(2).all(|w| w[1] > w[0]));
        let r = a.refined();
        assert_eq!(r.len(), 2 * a.len() - 1);
        for (k, c) in a.coords.iter().enumerate() {
            assert!((r.coords[2 * k] - c).abs() < 1e-13);
        }
    }

    #[test]
    fn arms_cut_at_the_boundary() {
        let g = Grid::uniform(&DomainShape::unit_disk(), 17);
        for s in 0..g.n_interior() {
            for dir in 0..4 {
                if g.neighbors(s)[dir] == NONE {
                    let e = g.arm_end(s, dir);
                    assert!((e[0].hypot(e[1]) - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
