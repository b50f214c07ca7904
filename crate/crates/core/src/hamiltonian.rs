//! The two-vortex Hamiltonian 𝓗_γ(ξ₁, ξ₂) = h(ξ₁) + h(ξ₂)/γ² − 2G(ξ₁, ξ₂)/γ,
//! the general Kirchhoff–Routh function, and the search, classification and
//! γ-continuation of critical points.

use crate::geometry::{dist, DomainShape, Point};
use crate::green::{flux_profile, robin_argmax, FluxProfile, GreenError, GreenFunction};
use crate::par::{self, Exec};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error("no critical point found from {starts} starts")]
    NoneFound { starts: usize },
    #[error("branch lost at gamma = {gamma}: {reason}")]
    BranchLost { gamma: f64, reason: String },
}

pub type HamiltonianResult<T> = Result<T, HamiltonianError>;

/// A vortex pair with intensity ratio γ and weight τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexConfig {
    pub xi1: Point,
    pub xi2: Point,
    pub gamma: f64,
    pub tau: f64,
}

impl VortexConfig {
    pub fn new(xi1: Point, xi2: Point, gamma: f64, tau: f64) -> Self {
        VortexConfig { xi1, xi2, gamma, tau }
    }

    /// Smallest of the two boundary distances and the separation. The
    /// configuration is admissible with margin η when this is at least η.
    pub fn margin(&self, shape: &DomainShape) -> f64 {
        shape.distance_to_boundary(self.xi1).min(shape.distance_to_boundary(self.xi2)).min(dist(self.xi1, self.xi2))
    }

    pub fn check(&self, shape: &DomainShape) -> HamiltonianResult<()> {
        check_intensities(self.gamma, self.tau)?;
        for p in [self.xi1, self.xi2] {
            if !shape.contains(p) {
                return Err(GreenError::OutsideDomain(p).into());
            }
        }
        if dist(self.xi1, self.xi2) < crate::green::COINCIDENCE_TOL {
            return Err(GreenError::CoincidentPoints(self.xi1, self.xi2).into());
        }
        Ok(())
    }

    /// The pair with roles exchanged and γ inverted. Critical points of 𝓗_γ
    /// at (ξ₁, ξ₂) are exactly those of 𝓗_{1/γ} at (ξ₂, ξ₁).
    pub fn mirrored(&self) -> Self {
        VortexConfig { xi1: self.xi2, xi2: self.xi1, gamma: 1.0 / self.gamma, tau: self.tau }
    }

    pub fn to_vec(&self) -> [f64; 4] {
        [self.xi1[0], self.xi1[1], self.xi2[0], self.xi2[1]]
    }

    pub fn with_points(&self, z: &[f64]) -> Self {
        VortexConfig { xi1: [z[0], z[1]], xi2: [z[2], z[3]], ..*self }
    }
}

fn check_intensities(gamma: f64, tau: f64) -> HamiltonianResult<()> {
    for (name, v) in [("gamma", gamma), ("tau", tau)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(HamiltonianError::InvalidConfig(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

pub fn hamiltonian<E: GreenFunction + ?Sized>(e: &E, cfg: &VortexConfig) -> HamiltonianResult<f64> {
    let g = cfg.gamma;
    Ok(e.robin(cfg.xi1)? + e.robin(cfg.xi2)? / (g * g) - 2.0 * e.green(cfg.xi1, cfg.xi2)? / g)
}

/// Σ_{i≠j} rᵢrⱼ G(xᵢ, xⱼ) + Σ rᵢ² h(xᵢ). Points of zero intensity are skipped.
pub fn kirchhoff_routh<E: GreenFunction + ?Sized>(e: &E, points: &[Point], r: &[f64]) -> HamiltonianResult<f64> {
    if points.len() != r.len() {
        return Err(HamiltonianError::InvalidConfig(format!("{} points but {} intensities", points.len(), r.len())));
    }
    let live: Vec<(Point, f64)> = points.iter().copied().zip(r.iter().copied()).filter(|p| p.1 != 0.0).collect();
    let mut total = 0.0;
    for (i, &(x, ri)) in live.iter().enumerate() {
        total += ri * ri * e.robin(x)?;
        for &(y, rj) in &live[i + 1..] {
            total += 2.0 * ri * rj * e.green(x, y)?;
        }
    }
    Ok(total)
}

/// ∇𝓗_γ as (∂/∂ξ₁, ∂/∂ξ₂).
pub fn grad_hamiltonian<E: GreenFunction + ?Sized>(e: &E, cfg: &VortexConfig) -> HamiltonianResult<[f64; 4]> {
    let g = cfg.gamma;
    let h1 = e.grad_robin(cfg.xi1)?;
    let h2 = e.grad_robin(cfg.xi2)?;
    let gx = e.grad_x_green(cfg.xi1, cfg.xi2)?;
    let gy = e.grad_x_green(cfg.xi2, cfg.xi1)?;
    Ok([
        h1[0] - 2.0 * gx[0] / g,
        h1[1] - 2.0 * gx[1] / g,
        h2[0] / (g * g) - 2.0 * gy[0] / g,
        h2[1] / (g * g) - 2.0 * gy[1] / g,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Maximum,
    Minimum,
    Saddle,
    Degenerate,
}

/// Eigenvalues with |λ| ≤ ZERO_EIGEN_REL · max|λ| count as zero.
pub const ZERO_EIGEN_REL: f64 = 1e-4;

pub fn classify_eigenvalues(eigs: &[f64]) -> Classification {
    let scale = eigs.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if scale == 0.0 || eigs.iter().any(|l| l.abs() <= ZERO_EIGEN_REL * scale) {
        Classification::Degenerate
    } else if eigs.iter().all(|&l| l < 0.0) {
        Classification::Maximum
    } else if eigs.iter().all(|&l| l > 0.0) {
        Classification::Minimum
    } else {
        Classification::Saddle
    }
}

/// Ascending eigenvalues of the symmetric part of `h`.
pub fn symmetric_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    let sym = (h + h.transpose()) * 0.5;
    let mut eigs: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

pub fn classify_hessian(h: &DMatrix<f64>) -> (Vec<f64>, Classification) {
    let eigs = symmetric_eigenvalues(h);
    let c = classify_eigenvalues(&eigs);
    (eigs, c)
}

/// Central-difference Jacobian of a gradient map, symmetrized.
pub fn fd_hessian<Er>(grad: impl Fn(&[f64]) -> Result<Vec<f64>, Er>, z: &[f64], step: f64) -> Result<DMatrix<f64>, Er> {
    let n = z.len();
    let mut h = DMatrix::zeros(n, n);
    let mut w = z.to_vec();
    for k in 0..n {
        w[k] = z[k] + step;
        let gp = grad(&w)?;
        w[k] = z[k] - step;
        let gm = grad(&w)?;
        w[k] = z[k];
        for i in 0..n {
            h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// A converged critical point of 𝓗_γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub config: VortexConfig,
    pub value: f64,
    pub gradient: [f64; 4],
    pub grad_norm: f64,
    /// Full 4×4 finite-difference Hessian, row-major.
    pub hessian: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues restricted to the gauge slice (ξ₁ on a fixed ray), on disks.
    pub gauge_eigenvalues: Option<Vec<f64>>,
    pub classification: Classification,
    /// min(d(ξ₁), d(ξ₂), |ξ₁ − ξ₂|).
    pub margin: f64,
    /// Index of the multistart seed that produced this point.
    pub seed: usize,
    pub iterations: usize,
}

impl CriticalPoint {
    pub fn converged(&self) -> bool {
        self.grad_norm <= crit_tol(self.value)
    }
}

/// Convergence threshold on ‖∇𝓗_γ‖.
pub fn crit_tol(value: f64) -> f64 {
    1e-8 * (1.0 + value.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub starts: usize,
    pub seed: u64,
    /// Admissibility margin η; `None` means 0.05 × inradius.
    pub eta: Option<f64>,
    /// Fix ξ₁ on the ray θ = 0 from the centre; `None` means "on disks".
    pub gauge: Option<bool>,
    pub max_iter: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { starts: 64, seed: 0, eta: None, gauge: None, max_iter: 40, exec: Exec::default() }
    }
}

/// Rotational gauge on a disk: ξ₁ = c + (z₀, 0), ξ₂ = c + (z₁, z₂).
fn gauge_center(shape: &DomainShape, gauge: Option<bool>) -> Option<Point> {
    let disk = matches!(shape, DomainShape::Disk { .. });
    if gauge.unwrap_or(disk) && disk {
        Some(shape.center())
    } else {
        None
    }
}

/// 𝓗_γ plus the barrier μ[log(1 − ρ²(ξ₁)) + log(1 − ρ²(ξ₂)) + log|ξ₁ − ξ₂|]
/// with ρ the shape gauge, in full or gauge-reduced coordinates.
struct Problem<'a, E: ?Sized> {
    e: &'a E,
    shape: &'a DomainShape,
    gamma: f64,
    tau: f64,
    gauge: Option<Point>,
    mu: f64,
    step: f64,
}

struct Eval {
    value: f64,
    reduced: Vec<f64>,
}

struct Converged {
    z: Vec<f64>,
    iterations: usize,
}

impl<'a, E: GreenFunction + ?Sized> Problem<'a, E> {
    fn new(e: &'a E, gamma: f64, tau: f64, gauge: Option<Point>) -> Self {
        let shape = e.shape();
        Problem { e, shape, gamma, tau, gauge, mu: 0.0, step: 1e-4 * shape.diameter() }
    }

    fn config(&self, z: &[f64]) -> VortexConfig {
        let (xi1, xi2) = match self.gauge {
            Some(c) => ([c[0] + z[0], c[1]], [c[0] + z[1], c[1] + z[2]]),
            None => ([z[0], z[1]], [z[2], z[3]]),
        };
        VortexConfig::new(xi1, xi2, self.gamma, self.tau)
    }

    fn coords(&self, cfg: &VortexConfig) -> Vec<f64> {
        match self.gauge {
            Some(c) => {
                let a = [cfg.xi1[0] - c[0], cfg.xi1[1] - c[1]];
                let b = [cfg.xi2[0] - c[0], cfg.xi2[1] - c[1]];
                let r = a[0].hypot(a[1]);
                let (cs, sn) = if r > 0.0 { (a[0] / r, a[1] / r) } else { (1.0, 0.0) };
                vec![r, cs * b[0] + sn * b[1], -sn * b[0] + cs * b[1]]
            }
            None => cfg.to_vec().to_vec(),
        }
    }

    fn reduce(&self, g: [f64; 4]) -> Vec<f64> {
        match self.gauge {
            Some(_) => vec![g[0], g[2], g[3]],
            None => g.to_vec(),
        }
    }

    fn feasible(&self, z: &[f64]) -> bool {
        if z.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if self.gauge.is_some() && z[0] <= 0.0 {
            return false;
        }
        let cfg = self.config(z);
        if !(self.shape.contains(cfg.xi1) && self.shape.contains(cfg.xi2)) {
            return false;
        }
        cfg.margin(self.shape) > 1e-9 * self.shape.diameter()
    }

    fn eval(&self, z: &[f64]) -> HamiltonianResult<Eval> {
        let cfg = self.config(z);
        let mut value = hamiltonian(self.e, &cfg)?;
        let grad = grad_hamiltonian(self.e, &cfg)?;
        let mut phi = grad;
        if self.mu > 0.0 {
            for (k, p) in [cfg.xi1, cfg.xi2].into_iter().enumerate() {
                let (q, dq) = self.shape.gauge_sq(p);
                value += self.mu * (1.0 - q).ln();
                phi[2 * k] -= self.mu * dq[0] / (1.0 - q);
                phi[2 * k + 1] -= self.mu * dq[1] / (1.0 - q);
            }
            let s = dist(cfg.xi1, cfg.xi2);
            let u = [(cfg.xi1[0] - cfg.xi2[0]) / s, (cfg.xi1[1] - cfg.xi2[1]) / s];
            let c = self.mu / s;
            value += self.mu * s.ln();
            phi[0] += c * u[0];
            phi[1] += c * u[1];
            phi[2] -= c * u[0];
            phi[3] -= c * u[1];
        }
        Ok(Eval { value, reduced: self.reduce(phi) })
    }

    fn hessian(&self, z: &[f64]) -> HamiltonianResult<DMatrix<f64>> {
        fd_hessian(|w| self.eval(w).map(|e| e.reduced), z, self.step)
    }

    /// Largest fraction of `s` that moves each vortex by at most half its
    /// current clearance.
    fn trust(&self, z: &[f64], s: &[f64]) -> f64 {
        let a = self.config(z);
        let mut w = z.to_vec();
        for (wi, si) in w.iter_mut().zip(s) {
            *wi += si;
        }
        let b = self.config(&w);
        let sep = dist(a.xi1, a.xi2);
        let mut t = 1.0f64;
        for (p, q) in [(a.xi1, b.xi1), (a.xi2, b.xi2)] {
            let room = self.shape.distance_to_boundary(p).min(sep);
            let m = dist(p, q);
            if m > 0.5 * room {
                t = t.min(0.5 * room / m);
            }
        }
        t
    }

    /// Damped Newton on the reduced gradient of the barrier function, with a
    /// halving line search on the gradient norm. The finite-difference
    /// Hessian is kept while the gradient norm at least halves per step and
    /// refreshed otherwise; with a fresh Hessian and a failed line search the
    /// step falls back to Levenberg–Marquardt on ½‖∇‖².
    fn newton(&self, z0: &[f64], tol: impl Fn(f64) -> f64, max_iter: usize) -> Result<Converged, String> {
        if !self.feasible(z0) {
            return Err("infeasible start".into());
        }
        let mut z = z0.to_vec();
        let mut cur = self.eval(&z).map_err(|e| e.to_string())?;
        let mut hess: Option<DMatrix<f64>> = None;
        for it in 0..=max_iter {
            let gn = norm(&cur.reduced);
            if gn <= tol(cur.value) {
                return Ok(Converged { z, iterations: it });
            }
            if it == max_iter {
                break;
            }
            let fresh = hess.is_none();
            let h = match hess.take() {
                Some(h) => h,
                None => self.hessian(&z).map_err(|e| e.to_string())?,
            };
            let mut step = None;
            for lm in [None, Some(1e-3), Some(1e-1), Some(1e1)] {
                if lm.is_some() && !fresh {
                    break;
                }
                let s = match lm {
                    None => newton_step(&h, &cur.reduced),
                    Some(l) => lm_step(&h, &cur.reduced, l),
                };
                if let Some(found) = self.line_search(&z, &s, gn) {
                    step = Some(found);
                    break;
                }
            }
            match step {
                Some((w, ev)) => {
                    if norm(&ev.reduced) <= 0.5 * gn {
                        hess = Some(h);
                    }
                    z = w;
                    cur = ev;
                }
                None if fresh => return Err(format!("line search failed at gradient norm {gn:e}")),
                None => {}
            }
        }
        Err(format!("no convergence in {max_iter} iterations"))
    }

    fn line_search(&self, z: &[f64], s: &[f64], gn: f64) -> Option<(Vec<f64>, Eval)> {
        let mut a = self.trust(z, s);
        for _ in 0..=20 {
            let w: Vec<f64> = z.iter().zip(s).map(|(zi, si)| zi + a * si).collect();
            if self.feasible(&w) {
                if let Ok(ev) = self.eval(&w) {
                    if norm(&ev.reduced) < (1.0 - 1e-4 * a) * gn {
                        return Some((w, ev));
                    }
                }
            }
            a *= 0.5;
        }
        None
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton step −H⁻¹g through the eigen-decomposition, with tiny eigenvalues
/// floored so the step stays finite.
fn newton_step(h: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(f64::MIN_POSITIVE);
    let g = DVector::from_column_slice(g);
    let mut s = DVector::zeros(g.len());
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let l = if l.abs() < 1e-10 * scale { (1e-10 * scale).copysign(l) } else { l };
        s -= v * (v.dot(&g) / l);
    }
    s.iter().copied().collect()
}

/// Levenberg–Marquardt step −(H² + λ‖H‖²I)⁻¹Hg for ½‖g‖².
fn lm_step(h: &DMatrix<f64>, g: &[f64], lambda: f64) -> Vec<f64> {
    let n = g.len();
    let h2 = h * h;
    let scale = h2.norm().max(f64::MIN_POSITIVE);
    let a = h2 + DMatrix::identity(n, n) * (lambda * scale);
    let rhs = h * DVector::from_column_slice(g);
    match a.cholesky() {
        Some(c) => c.solve(&rhs).iter().map(|v| -v).collect(),
        None => vec![0.0; n],
    }
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Quasi-random configurations admissible with margin 2η:
/// a Halton sequence in bases 2, 3, 5, 7 with a seeded random shift.
pub fn seed_configs(shape: &DomainShape, count: usize, seed: u64, eta: f64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
    let bb = shape.bounding_box();
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count && i < 1000 * (count as u64 + 1) {
        let u: [f64; 4] = std::array::from_fn(|k| (radical_inverse(i, [2, 3, 5, 7][k]) + shift[k]).fract());
        i += 1;
        let z = [
            bb[0] + u[0] * (bb[1] - bb[0]),
            bb[2] + u[1] * (bb[3] - bb[2]),
            bb[0] + u[2] * (bb[1] - bb[0]),
            bb[2] + u[3] * (bb[3] - bb[2]),
        ];
        let cfg = VortexConfig::new([z[0], z[1]], [z[2], z[3]], 1.0, 1.0);
        if shape.contains(cfg.xi1) && shape.contains(cfg.xi2) && cfg.margin(shape) > 2.0 * eta {
            out.push(z);
        }
    }
    out
}

/// Outcome of a multistart search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub starts: usize,
    pub eta: f64,
    /// Distinct critical points, ordered by seed index.
    pub points: Vec<CriticalPoint>,
    /// Seeds that did not converge, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl CriticalSearch {
    /// The points, or `NoneFound` when there are none.
    pub fn require_any(self) -> HamiltonianResult<Vec<CriticalPoint>> {
        if self.points.is_empty() {
            Err(HamiltonianError::NoneFound { starts: self.starts })
        } else {
            Ok(self.points)
        }
    }
}

/// Barrier weights applied in turn before the unconstrained polish.
const BARRIER_SCHEDULE: [f64; 2] = [1e-2, 1e-4];

/// Multistart search for critical points of 𝓗_γ admissible with margin η.
/// Seeds run independently (in parallel when enabled); the output is
/// deduplicated and ordered by seed index.
pub fn find_critical_points<E: GreenFunction + ?Sized>(
    e: &E,
    gamma: f64,
    tau: f64,
    opts: &SearchOptions,
) -> HamiltonianResult<CriticalSearch> {
    let shape = e.shape();
    check_intensities(gamma, tau)?;
    let eta = opts.eta.unwrap_or(0.05 * shape.inradius());
    if eta.is_nan() || eta <= 0.0 {
        return Err(HamiltonianError::InvalidConfig(format!("eta must be positive, got {eta}")));
    }
    let gauge = gauge_center(shape, opts.gauge);
    let seeds = seed_configs(shape, opts.starts, opts.seed, eta);
    let run = |k: usize| -> Result<CriticalPoint, String> {
        let mut p = Problem::new(e, gamma, tau, gauge);
        let cfg0 = VortexConfig::new([seeds[k][0], seeds[k][1]], [seeds[k][2], seeds[k][3]], gamma, tau);
        let mut z = p.coords(&cfg0);
        let mut iterations = 0;
        for mu in BARRIER_SCHEDULE {
            p.mu = mu;
            let c =
                p.newton(&z, |v| 1e-6 * (1.0 + v.abs()), opts.max_iter).map_err(|r| format!("barrier {mu:e}: {r}"))?;
            z = c.z;
            iterations += c.iterations;
        }
        p.mu = 0.0;
        let c = p.newton(&z, crit_tol, opts.max_iter).map_err(|r| format!("polish: {r}"))?;
        iterations += c.iterations;
        let cp = critical_point(e, &p, &c.z, k, iterations).map_err(|r| r.to_string())?;
        if !cp.converged() {
            return Err(format!("full gradient norm {:e} off the gauge slice", cp.grad_norm));
        }
        if cp.margin < eta {
            return Err(format!("margin {:e} below eta", cp.margin));
        }
        Ok(cp)
    };
    let found = par::map_indices_with(opts.exec, seeds.len(), run);
    let tol = 1e-6 * shape.diameter();
    let mut search = CriticalSearch { starts: seeds.len(), eta, points: Vec::new(), failures: Vec::new() };
    for (k, r) in found.into_iter().enumerate() {
        let cp = match r {
            Ok(cp) => cp,
            Err(reason) => {
                search.failures.push((k, reason));
                continue;
            }
        };
        let z = cp.config.to_vec();
        let dup = search.points.iter().any(|q| {
            let w = q.config.to_vec();
            (0..4).all(|i| (z[i] - w[i]).abs() < tol)
        });
        if !dup {
            search.points.push(cp);
        }
    }
    Ok(search)
}

fn critical_point<E: GreenFunction + ?Sized>(
    e: &E,
    p: &Problem<'_, E>,
    z: &[f64],
    seed: usize,
    iterations: usize,
) -> HamiltonianResult<CriticalPoint> {
    let cfg = p.config(z);
    let value = hamiltonian(e, &cfg)?;
    let gradient = grad_hamiltonian(e, &cfg)?;
    let full = Problem::new(e, p.gamma, p.tau, None);
    let h = full.hessian(&cfg.to_vec())?;
    let (eigenvalues, full_class) = classify_hessian(&h);
    let (gauge_eigenvalues, classification) = match p.gauge {
        Some(_) => {
            let idx = [0, 2, 3];
            let r = DMatrix::from_fn(3, 3, |i, j| h[(idx[i], idx[j])]);
            let (eigs, c) = classify_hessian(&r);
            (Some(eigs), c)
        }
        None => (None, full_class),
    };
    Ok(CriticalPoint {
        config: cfg,
        value,
        gradient,
        grad_norm: norm(&gradient),
        hessian: h.transpose().iter().copied().collect(),
        eigenvalues,
        gauge_eigenvalues,
        classification,
        margin: cfg.margin(e.shape()),
        seed,
        iterations,
    })
}

/// Newton polish of a single configuration (no barrier), in the gauge slice
/// on disks when `gauge` allows it.
pub fn refine_critical_point<E: GreenFunction + ?Sized>(
    e: &E,
    cfg: &VortexConfig,
    gauge: Option<bool>,
    max_iter: usize,
) -> HamiltonianResult<CriticalPoint> {
    cfg.check(e.shape())?;
    let p = Problem::new(e, cfg.gamma, cfg.tau, gauge_center(e.shape(), gauge));
    let z = p.coords(cfg);
    let c =
        p.newton(&z, crit_tol, max_iter).map_err(|reason| HamiltonianError::BranchLost { gamma: cfg.gamma, reason })?;
    critical_point(e, &p, &c.z, 0, c.iterations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub max_iter: usize,
    /// Largest number of step halvings between two scheduled γ values.
    pub max_halvings: usize,
    pub flux_samples: usize,
    pub robin_candidates: usize,
    pub gauge: Option<bool>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            max_iter: 40,
            max_halvings: 8,
            flux_samples: 1024,
            robin_candidates: 257,
            gauge: None,
            exec: Exec::default(),
        }
    }
}

/// One scheduled γ of a branch. The escaping vortex is ξ₂ for increasing
/// schedules and ξ₁ for mirrored (decreasing) ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub gamma: f64,
    pub config: VortexConfig,
    pub value: f64,
    pub grad_norm: f64,
    pub classification: Classification,
    /// Distance of the escaping vortex to ∂Ω.
    pub dist_boundary: f64,
    /// Distance of the concentrating vortex to argmax h.
    pub dist_argmax: f64,
    /// Boundary parameter of the projection of the escaping vortex.
    pub boundary_theta: f64,
    /// |∂νG(c, p(e))| − min over ∂Ω of |∂νG(c, ·)|, with c the concentrating
    /// and e the escaping vortex.
    pub nu_gap: f64,
    /// Continuation steps taken to reach this γ from the previous record.
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mirrored: bool,
    pub tau: f64,
    pub argmax_h: Point,
    pub records: Vec<SweepRecord>,
    /// Set when continuation failed; records stop before this γ.
    pub lost: Option<(f64, String)>,
}

impl SweepReport {
    /// Escaping and concentrating vortex of a record.
    pub fn roles(&self, cfg: &VortexConfig) -> (Point, Point) {
        if self.mirrored {
            (cfg.xi1, cfg.xi2)
        } else {
            (cfg.xi2, cfg.xi1)
        }
    }
}

/// Continuation of a critical branch along a strictly monotone γ schedule.
/// Decreasing schedules run as the mirrored problem (roles exchanged, γ
/// inverted). Each step is warm-started by secant extrapolation in log γ and
/// halved on failure.
pub fn sweep_gamma<E: GreenFunction + ?Sized>(
    e: &E,
    gammas: &[f64],
    tau: f64,
    seed: (Point, Point),
    opts: &SweepOptions,
) -> HamiltonianResult<SweepReport> {
    let shape = e.shape();
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(HamiltonianError::InvalidConfig("gamma schedule must be non-empty and positive".into()));
    }
    let increasing = gammas.windows(2).all(|w| w[1] > w[0]);
    let decreasing = gammas.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) || (gammas.len() > 1 && increasing == decreasing) {
        return Err(HamiltonianError::InvalidConfig("gamma schedule must be strictly monotone".into()));
    }
    let mirrored = gammas.len() > 1 && decreasing;
    // internal labels: the escaping vortex is always the second point
    let (a0, b0) = if mirrored { (seed.1, seed.0) } else { seed };
    let internal: Vec<f64> = gammas.iter().map(|g| if mirrored { 1.0 / g } else { *g }).collect();
    VortexConfig::new(a0, b0, internal[0], tau).check(shape)?;
    let gauge = gauge_center(shape, opts.gauge);
    let argmax_h = robin_argmax(e, opts.robin_candidates, opts.exec)?;
    let mut report = SweepReport { mirrored, tau, argmax_h, records: Vec::new(), lost: None };

    let solve = |g: f64, z: &[f64]| -> Result<Converged, String> {
        Problem::new(e, g, tau, gauge).newton(z, crit_tol, opts.max_iter)
    };
    let p0 = Problem::new(e, internal[0], tau, gauge);
    let mut z = p0.coords(&VortexConfig::new(a0, b0, internal[0], tau));
    let mut t = internal[0].ln();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    for (k, &target) in internal.iter().enumerate() {
        let big_t = target.ln();
        let full = big_t - t;
        let mut h = full;
        let mut halvings = 0;
        let mut substeps = 0;
        let mut last_err = String::new();
        let mut reached = k > 0 && full <= 0.0;
        if k == 0 {
            match solve(target, &z) {
                Ok(c) => {
                    z = c.z;
                    reached = true;
                }
                Err(err) => last_err = err,
            }
        }
        while !reached && halvings <= opts.max_halvings {
            let hs = h.min(big_t - t);
            let p = Problem::new(e, (t + hs).exp(), tau, gauge);
            let guess = match &prev {
                Some((tp, zp)) if t > *tp => {
                    let w: Vec<f64> = z.iter().zip(zp).map(|(a, b)| a + (a - b) * hs / (t - tp)).collect();
                    if p.feasible(&w) {
                        w
                    } else {
                        z.clone()
                    }
                }
                _ => z.clone(),
            };
            match solve((t + hs).exp(), &guess) {
                Ok(c) => {
                    prev = Some((t, z.clone()));
                    z = c.z;
                    t += hs;
                    substeps += 1;
                    if big_t - t <= 1e-12 * (1.0 + big_t.abs()) {
                        t = big_t;
                        reached = true;
                    }
                }
                Err(err) => {
                    last_err = err;
                    h *= 0.5;
                    halvings += 1;
                }
            }
        }
        if !reached {
            report.lost = Some((gammas[k], last_err));
            return Ok(report);
        }
        t = big_t;
        let p = Problem::new(e, target, tau, gauge);
        let cp = critical_point(e, &p, &z, 0, 0)?;
        let cfg_int = cp.config;
        let (c, esc) = (cfg_int.xi1, cfg_int.xi2);
        let theta = shape.project(esc).map_err(GreenError::from)?;
        let profile: FluxProfile = flux_profile(e, c, opts.flux_samples, opts.exec)?;
        let at = e.normal_derivative_green(c, theta)?.abs();
        let config = if mirrored { cfg_int.mirrored() } else { cfg_int };
        report.records.push(SweepRecord {
            gamma: gammas[k],
            config: VortexConfig { tau, ..config },
            value: hamiltonian(e, &config)?,
            grad_norm: norm(&grad_hamiltonian(e, &config)?),
            classification: cp.classification,
            dist_boundary: shape.distance_to_boundary(esc),
            dist_argmax: dist(c, argmax_h),
            boundary_theta: theta,
            nu_gap: at - profile.min_value,
            substeps,
        });
    }
    Ok(report)
}
