//! Green's function of a general domain from harmonic corrections on a
//! uniform grid.
//!
//! For a source y the regular part is split as
//! Ĥ(x, y) = χ(d_y)/(2π) log|x − ȳ| + c_y(x), where ȳ is the reflection of
//! y across the boundary and χ a smooth cutoff that switches the image term on
//! inside the tubular neighbourhood. The image absorbs the near-singular
//! boundary data of sources close to ∂Ω, so c_y stays smooth and is well
//! resolved on the grid. c_y solves the discrete Laplace equation with data
//! (1/2π)(log|b − y| − χ log|b − ȳ|) on ∂Ω. Its y-derivatives solve the same
//! system with differentiated data (the discrete solution is linear in the
//! data), so gradients of h and of H in either argument cost no extra
//! sources. The reported H is the symmetrization ½(Ĥ(x, y) + Ĥ(y, x)).

use super::interp;
use super::{check_inside, GreenError, GreenFunction, GreenResult, INV_2PI};
use crate::geometry::{dist, DomainShape, Point};
use crate::grid::{Grid, EAST, NONE, NORTH, SOUTH, WEST};
use crate::linalg::{DiscreteOperator, SparseCholesky};
use parking_lot::Mutex;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const DEFAULT_CACHE: usize = 64;

/// Exterior node value as a linear combination of interior node values and
/// boundary data samples.
#[derive(Debug, Clone, Default)]
struct ExtRule {
    node: usize,
    inner: Vec<(usize, f64)>,
    bnd: Vec<(Point, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Image {
    chi: f64,
    dchi: Point,
    ybar: Point,
    /// dybar[k] = ∂ȳ/∂y_k.
    dybar: [Point; 2],
}

impl Image {
    fn value(&self, x: Point) -> f64 {
        self.chi * INV_2PI * dist(x, self.ybar).ln()
    }

    fn grad_x(&self, x: Point) -> Point {
        let d = [x[0] - self.ybar[0], x[1] - self.ybar[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        let f = self.chi * INV_2PI / r2;
        [f * d[0], f * d[1]]
    }

    fn grad_y(&self, x: Point) -> Point {
        let d = [x[0] - self.ybar[0], x[1] - self.ybar[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        let l = 0.5 * r2.ln();
        let g = |k: usize| {
            INV_2PI * (self.dchi[k] * l - self.chi * (d[0] * self.dybar[k][0] + d[1] * self.dybar[k][1]) / r2)
        };
        [g(0), g(1)]
    }
}

/// Cached correction for one source: value field and its two y-derivative
/// fields on all grid nodes (exterior band extrapolated).
struct Source {
    image: Option<Image>,
    fields: [Vec<f64>; 3],
}

struct Cache {
    tick: u64,
    entries: Vec<([u64; 2], Arc<Source>, u64)>,
}

pub struct NumericGreen {
    shape: DomainShape,
    eps0: f64,
    h_fd: f64,
    grid: Arc<Grid>,
    op: DiscreteOperator,
    chol: SparseCholesky,
    ext: Vec<ExtRule>,
    capacity: usize,
    cache: Mutex<Cache>,
    store: Option<PathBuf>,
}

impl std::fmt::Debug for NumericGreen {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NumericGreen")
            .field("shape", &self.shape)
            .field("nx", &self.grid.nx())
            .field("ny", &self.grid.ny())
            .finish()
    }
}

/// C∞ step: 0 for t ≤ 0, 1 for t ≥ 1; returns (S, S').
fn smooth_step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    let da = a / (t * t);
    let db = -b / ((1.0 - t) * (1.0 - t));
    let s = a / (a + b);
    (s, (da * (a + b) - a * (da + db)) / ((a + b) * (a + b)))
}

impl NumericGreen {
    pub fn new(shape: DomainShape, n: usize) -> GreenResult<Self> {
        Self::with_capacity(shape, n, DEFAULT_CACHE)
    }

    pub fn with_capacity(shape: DomainShape, n: usize, capacity: usize) -> GreenResult<Self> {
        shape.validate()?;
        let grid = Arc::new(Grid::uniform(&shape, n));
        let op = DiscreteOperator::assemble(grid.clone());
        let chol = SparseCholesky::factor(&op, None)?;
        let ext = extrapolation_rules(&grid);
        Ok(NumericGreen {
            eps0: shape.tube_width(),
            h_fd: 1e-5 * shape.diameter(),
            shape,
            grid,
            op,
            chol,
            ext,
            capacity: capacity.max(1),
            cache: Mutex::new(Cache { tick: 0, entries: Vec::new() }),
            store: None,
        })
    }

    /// Persists source corrections under `dir`, in a subdirectory keyed by
    /// shape and grid size, and reuses them across processes.
    pub fn with_store(mut self, dir: &Path) -> Self {
        let key = format!(
            "{}|{}|{}",
            serde_json::to_string(&self.shape).expect("shape serializes"),
            self.grid.nx(),
            self.grid.ny()
        );
        let digest = hex::encode(Sha256::digest(key.as_bytes()));
        self.store = Some(dir.join(format!("green-{}", &digest[..16])));
        self
    }

    fn store_path(&self, y: Point) -> Option<PathBuf> {
        self.store.as_ref().map(|d| d.join(format!("{:016x}{:016x}.bin", y[0].to_bits(), y[1].to_bits())))
    }

    fn load_fields(&self, path: &Path) -> Option<[Vec<f64>; 3]> {
        let bytes = std::fs::read(path).ok()?;
        let len = self.grid.len();
        if bytes.len() != 3 * len * 8 {
            return None;
        }
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut next = || (0..len).map(|_| vals.next().expect("length checked")).collect::<Vec<f64>>();
        Some([next(), next(), next()])
    }

    fn save_fields(path: &Path, fields: &[Vec<f64>; 3]) {
        let bytes: Vec<u8> = fields.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
        // the store is an optimization; a failed write only costs a recomputation
        let _ = crate::io::write_atomic(path, &bytes);
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Step used for finite differences and the near-boundary guard.
    pub fn fd_step(&self) -> f64 {
        self.h_fd
    }

    fn image(&self, y: Point) -> GreenResult<Option<Image>> {
        let cutoff = 0.9 * self.eps0;
        let bd = match self.shape.boundary_data_within(y, self.eps0) {
            Ok(bd) => bd,
            Err(crate::geometry::GeometryError::OutsideTube { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if bd.d >= cutoff {
            return Ok(None);
        }
        let width = 0.4 * self.eps0;
        let (chi, ds) = smooth_step((cutoff - bd.d) / width);
        // ∇d = −ν
        let dchi_dd = -ds / width;
        let dchi = [-dchi_dd * bd.nu[0], -dchi_dd * bd.nu[1]];
        let t = [-bd.nu[1], bd.nu[0]];
        let f = 2.0 / (1.0 - bd.kappa * bd.d);
        let dybar = [[f * t[0] * t[0] - 1.0, f * t[1] * t[0]], [f * t[0] * t[1], f * t[1] * t[1] - 1.0]];
        Ok(Some(Image { chi, dchi, ybar: bd.reflection, dybar }))
    }

    /// Boundary data of c_y and its y-derivatives at boundary point b.
    fn data(y: Point, image: &Option<Image>, b: Point) -> [f64; 3] {
        let d = [b[0] - y[0], b[1] - y[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        let mut out = [0.5 * INV_2PI * r2.ln(), -INV_2PI * d[0] / r2, -INV_2PI * d[1] / r2];
        if let Some(im) = image {
            out[0] -= im.value(b);
            let gy = im.grad_y(b);
            out[1] -= gy[0];
            out[2] -= gy[1];
        }
        out
    }

    fn solve_source(&self, y: Point) -> GreenResult<Source> {
        let image = self.image(y)?;
        let stored = self.store_path(y);
        if let Some(fields) = stored.as_deref().and_then(|p| self.load_fields(p)) {
            return Ok(Source { image, fields });
        }
        let g = &self.grid;
        let n = self.op.len();
        let mut rhs = vec![0.0; 3 * n];
        for s in 0..n {
            let (coef, nbr) = self.op.coefficients(s);
            for d in 0..4 {
                if nbr[d] == NONE {
                    let v = Self::data(y, &image, g.arm_end(s, d));
                    for c in 0..3 {
                        rhs[c * n + s] += coef[d] * v[c];
                    }
                }
            }
        }
        self.chol.solve_many(&mut rhs, 3);
        let mut fields = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
        for (s, &k) in g.interior().iter().enumerate() {
            for c in 0..3 {
                fields[c][k as usize] = rhs[c * n + s];
            }
        }
        for rule in &self.ext {
            let mut v = [0.0; 3];
            for &(k, w) in &rule.inner {
                for c in 0..3 {
                    v[c] += w * fields[c][k];
                }
            }
            for &(p, w) in &rule.bnd {
                let dv = Self::data(y, &image, p);
                for c in 0..3 {
                    v[c] += w * dv[c];
                }
            }
            for c in 0..3 {
                fields[c][rule.node] = v[c];
            }
        }
        if let Some(p) = &stored {
            Self::save_fields(p, &fields);
        }
        Ok(Source { image, fields })
    }

    fn source(&self, y: Point) -> GreenResult<Arc<Source>> {
        let key = [y[0].to_bits(), y[1].to_bits()];
        {
            let mut c = self.cache.lock();
            c.tick += 1;
            let tick = c.tick;
            if let Some(e) = c.entries.iter_mut().find(|e| e.0 == key) {
                e.2 = tick;
                return Ok(e.1.clone());
            }
        }
        let src = Arc::new(self.solve_source(y)?);
        let mut c = self.cache.lock();
        c.tick += 1;
        let tick = c.tick;
        if c.entries.len() >= self.capacity {
            let oldest = c.entries.iter().enumerate().min_by_key(|e| e.1 .2).map(|e| e.0).unwrap();
            c.entries.swap_remove(oldest);
        }
        c.entries.push((key, src.clone(), tick));
        Ok(src)
    }

    fn interp(&self, f: &[f64], x: Point) -> (f64, Point) {
        let g = &self.grid;
        let (hx, hy) = g.spacing();
        let o = g.origin();
        interp::eval(f, g.nx(), g.ny(), o[0], o[1], hx, hy, x)
    }

    /// Ĥ(x, y) and ∇ₓĤ from the source-y correction.
    fn hat(&self, x: Point, src: &Source) -> (f64, Point) {
        let (mut v, mut gr) = self.interp(&src.fields[0], x);
        if let Some(im) = &src.image {
            v += im.value(x);
            let gi = im.grad_x(x);
            gr[0] += gi[0];
            gr[1] += gi[1];
        }
        (v, gr)
    }

    /// ∇_yĤ(x, y) from the source-y correction.
    fn hat_dy(&self, x: Point, src: &Source) -> Point {
        let mut out = [self.interp(&src.fields[1], x).0, self.interp(&src.fields[2], x).0];
        if let Some(im) = &src.image {
            let gi = im.grad_y(x);
            out[0] += gi[0];
            out[1] += gi[1];
        }
        out
    }

    /// Number of cached sources (for tests and reports).
    pub fn cached_sources(&self) -> usize {
        self.cache.lock().entries.len()
    }

    /// Unsymmetrized Ĥ(x, y) from the source-y correction.
    pub fn regular_part_one_sided(&self, x: Point, y: Point) -> GreenResult<f64> {
        check_inside(&self.shape, x)?;
        check_inside(&self.shape, y)?;
        Ok(self.hat(x, &*self.source(y)?).0)
    }
}

impl GreenFunction for NumericGreen {
    fn shape(&self) -> &DomainShape {
        &self.shape
    }

    fn regular_part(&self, x: Point, y: Point) -> GreenResult<f64> {
        check_inside(&self.shape, x)?;
        check_inside(&self.shape, y)?;
        if x == y {
            return Ok(self.hat(x, &*self.source(x)?).0);
        }
        let a = self.hat(x, &*self.source(y)?).0;
        let b = self.hat(y, &*self.source(x)?).0;
        Ok(0.5 * (a + b))
    }

    fn grad_x_regular(&self, x: Point, y: Point) -> GreenResult<Point> {
        check_inside(&self.shape, x)?;
        check_inside(&self.shape, y)?;
        let a = self.hat(x, &*self.source(y)?).1;
        let b = self.hat_dy(y, &*self.source(x)?);
        Ok([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])
    }

    fn regular_part_from_source(&self, x: Point, y: Point) -> GreenResult<f64> {
        self.regular_part_one_sided(x, y)
    }

    fn robin(&self, x: Point) -> GreenResult<f64> {
        check_inside(&self.shape, x)?;
        Ok(self.hat(x, &*self.source(x)?).0)
    }

    fn grad_robin(&self, x: Point) -> GreenResult<Point> {
        check_inside(&self.shape, x)?;
        let d = self.shape.distance_to_boundary(x);
        if d < 4.0 * self.h_fd {
            return Err(GreenError::TooCloseToBoundary(x, d));
        }
        let src = self.source(x)?;
        let a = self.hat(x, &src).1;
        let b = self.hat_dy(x, &src);
        Ok([a[0] + b[0], a[1] + b[1]])
    }

    fn normal_derivative_green(&self, x0: Point, theta: f64) -> GreenResult<f64> {
        check_inside(&self.shape, x0)?;
        let src = self.source(x0)?;
        let p = self.shape.boundary_point(theta);
        let nu = self.shape.normal(theta);
        let s = 10.0 * self.h_fd;
        let g = |m: f64| {
            let y = [p[0] - m * s * nu[0], p[1] - m * s * nu[1]];
            super::singular(y, x0) + self.hat(y, &src).0
        };
        // outward derivative = −d/ds along −ν
        Ok((3.0 * g(0.0) - 4.0 * g(1.0) + g(2.0)) / (2.0 * s))
    }
}

/// Lagrange weights at `s` for abscissae `xs`.
fn lagrange(xs: &[f64], s: f64) -> Vec<f64> {
    (0..xs.len())
        .map(|i| xs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &xj)| (s - xj) / (xs[i] - xj)).product())
        .collect()
}

/// Extrapolation rules for the exterior band used by the cubic interpolant.
fn extrapolation_rules(g: &Grid) -> Vec<ExtRule> {
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let interior =
        |i: isize, j: isize| i >= 0 && j >= 0 && i < nx && j < ny && g.is_interior(g.node(i as usize, j as usize));
    // unit steps and the arm index of the step direction
    let dirs: [(isize, isize, usize); 4] = [(1, 0, EAST), (-1, 0, WEST), (0, 1, NORTH), (0, -1, SOUTH)];
    let mut rules = Vec::new();
    let mut has_rule = vec![false; g.len()];
    let band = 3isize;
    let near = |i: isize, j: isize| (-band..=band).any(|a| (-band..=band).any(|b| interior(i + a, j + b)));
    for j in 0..ny {
        for i in 0..nx {
            if interior(i, j) || !near(i, j) {
                continue;
            }
            let mut cands: Vec<ExtRule> = Vec::new();
            for level in 1..=band {
                for &(di, dj, arm) in &dirs {
                    // base node B = E − level·e must be the last interior node
                    let (bi, bj) = (i - level * di, j - level * dj);
                    if !interior(bi, bj) || (1..level).any(|l| interior(i - l * di, j - l * dj)) {
                        continue;
                    }
                    let bk = g.node(bi as usize, bj as usize);
                    let slot = g.slot(bk) as usize;
                    if g.neighbors(slot)[arm] != NONE {
                        continue;
                    }
                    let h = (g.x.coords[1] - g.x.coords[0]) * di.abs() as f64
                        + (g.y.coords[1] - g.y.coords[0]) * dj.abs() as f64;
                    let t = g.arms(slot)[arm];
                    let gamma = g.arm_end(slot, arm);
                    let node_at = |m: isize| (bi - m * di, bj - m * dj);
                    let ok = |m: isize| {
                        let (a, b) = node_at(m);
                        interior(a, b)
                    };
                    let ms: Vec<isize> = if t >= 0.25 * h {
                        if ok(1) {
                            vec![1, 0]
                        } else {
                            vec![0]
                        }
                    } else if ok(1) && ok(2) {
                        vec![2, 1]
                    } else if ok(1) {
                        vec![1]
                    } else {
                        vec![0]
                    };
                    let mut xs: Vec<f64> = ms.iter().map(|&m| -(m as f64) * h).collect();
                    xs.push(t);
                    let w = lagrange(&xs, level as f64 * h);
                    let mut r = ExtRule { node: g.node(i as usize, j as usize), ..Default::default() };
                    for (idx, &m) in ms.iter().enumerate() {
                        let (a, b) = node_at(m);
                        r.inner.push((g.node(a as usize, b as usize), w[idx]));
                    }
                    r.bnd.push((gamma, w[ms.len()]));
                    cands.push(r);
                }
                if !cands.is_empty() {
                    break;
                }
            }
            if cands.is_empty() {
                continue;
            }
            let m = cands.len() as f64;
            let mut r = ExtRule { node: cands[0].node, ..Default::default() };
            for c in cands {
                r.inner.extend(c.inner.into_iter().map(|(k, w)| (k, w / m)));
                r.bnd.extend(c.bnd.into_iter().map(|(p, w)| (p, w / m)));
            }
            has_rule[r.node] = true;
            rules.push(r);
        }
    }
    // corner nodes unreachable along grid lines: average ruled 8-neighbours
    let mut extra = Vec::new();
    let by_node: std::collections::HashMap<usize, usize> = rules.iter().enumerate().map(|(i, r)| (r.node, i)).collect();
    for j in 0..ny {
        for i in 0..nx {
            let k = g.node(i as usize, j as usize);
            if interior(i, j) || has_rule[k] || !near(i, j) {
                continue;
            }
            let mut parts: Vec<&ExtRule> = Vec::new();
            for a in -1..=1isize {
                for b in -1..=1isize {
                    let (ii, jj) = (i + a, j + b);
                    if ii < 0 || jj < 0 || ii >= nx || jj >= ny {
                        continue;
                    }
                    if let Some(&r) = by_node.get(&g.node(ii as usize, jj as usize)) {
                        parts.push(&rules[r]);
                    }
                }
            }
            if parts.is_empty() {
                continue;
            }
            let m = parts.len() as f64;
            let mut r = ExtRule { node: k, ..Default::default() };
            for p in parts {
                r.inner.extend(p.inner.iter().map(|&(k, w)| (k, w / m)));
                r.bnd.extend(p.bnd.iter().map(|&(q, w)| (q, w / m)));
            }
            extra.push(r);
        }
    }
    rules.extend(extra);
    rules
}
