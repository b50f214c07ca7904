//! Liouville bubbles, their projections, the two-bubble ansatz
//! W = Pw₁ − Pw₂/γ, the nonlinearity f_ρ, residuals and energies.
//!
//! Fields are stored in hybrid form u = b + v: b = Σ s_k w_k is a sum of
//! analytic bubbles and v a grid field. Bubble cores are then never
//! differenced on the grid; −Δb = Σ s_k e^{w_k} is used exactly.

use crate::geometry::{dist, DomainShape, Point};
use crate::green::{GreenError, GreenFunction};
use crate::grid::{Cluster, Grid, GridField};
use crate::hamiltonian::{hamiltonian, HamiltonianError, VortexConfig};
use crate::linalg::{DiscreteOperator, SolverError, SparseCholesky};
use crate::par;
use crate::quad::{polar_integral, PolarRule};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const EIGHT_PI: f64 = 8.0 * PI;

/// Smallest admissible ratio δ/h at a bubble centre.
pub const MIN_CORE_RATIO: f64 = 8.0;

/// Exponents are clamped to ±this before exponentiation.
pub const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AnsatzError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid too coarse at bubble {index}: δ/h = {ratio:.2} < {required}; use a graded bubble grid")]
    GridTooCoarse { index: usize, ratio: f64, required: f64 },
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error("projection solve failed: {0}")]
    Solver(#[from] SolverError),
}

pub type AnsatzResult<T> = Result<T, AnsatzError>;

/// w_{δ,ξ}(x) = log(8δ² / (δ² + |x − ξ|²)²), with δ stored as log δ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub center: Point,
    pub log_delta_sq: f64,
}

impl BubbleParams {
    pub fn new(delta: f64, center: Point) -> Self {
        BubbleParams { center, log_delta_sq: 2.0 * delta.ln() }
    }

    pub fn delta(&self) -> f64 {
        (0.5 * self.log_delta_sq).exp()
    }

    pub fn delta_sq(&self) -> f64 {
        self.log_delta_sq.exp()
    }

    fn r2(&self, x: Point) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        d[0] * d[0] + d[1] * d[1]
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

pub fn bubble(b: &BubbleParams, x: Point) -> f64 {
    8f64.ln() + b.log_delta_sq - 2.0 * log_add_exp(b.log_delta_sq, b.r2(x).ln())
}

/// e^{w} = −Δw.
pub fn bubble_exp(b: &BubbleParams, x: Point) -> f64 {
    bubble(b, x).exp()
}

pub fn bubble_grad(b: &BubbleParams, x: Point) -> Point {
    let s = -4.0 / (b.delta_sq() + b.r2(x));
    [s * (x[0] - b.center[0]), s * (x[1] - b.center[1])]
}

/// Bounded kernel functions of the linearized Liouville operator:
/// ψ⁰ = (δ² − r²)/(δ² + r²), ψʲ = (x_j − ξ_j)/(δ² + r²).
pub fn kernel_psi(j: usize, b: &BubbleParams, x: Point) -> f64 {
    let d2 = b.delta_sq();
    let r2 = b.r2(x);
    match j {
        0 => (d2 - r2) / (d2 + r2),
        1 | 2 => (x[j - 1] - b.center[j - 1]) / (d2 + r2),
        _ => panic!("kernel index must be 0, 1 or 2"),
    }
}

/// ρ, τ, γ of f_ρ(t) = ρ²(e^t − τe^{−γt}).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityParams {
    pub rho: f64,
    pub tau: f64,
    pub gamma: f64,
}

impl NonlinearityParams {
    pub fn new(rho: f64, tau: f64, gamma: f64) -> AnsatzResult<Self> {
        for (name, v) in [("rho", rho), ("tau", tau), ("gamma", gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AnsatzError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(NonlinearityParams { rho, tau, gamma })
    }

    pub fn for_config(cfg: &VortexConfig, rho: f64) -> AnsatzResult<Self> {
        Self::new(rho, cfg.tau, cfg.gamma)
    }
}

/// f_ρ(t), f_ρ′(t) and the primitive F_ρ(t) = ρ²(e^t + (τ/γ)e^{−γt}).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity {
    pub f: f64,
    pub df: f64,
    pub big_f: f64,
    /// An exponent was clamped to ±[`EXP_CLAMP`].
    pub saturated: bool,
}

pub fn nonlinearity(t: f64, p: &NonlinearityParams) -> Nonlinearity {
    let a = t.clamp(-EXP_CLAMP, EXP_CLAMP);
    let b = (-p.gamma * t).clamp(-EXP_CLAMP, EXP_CLAMP);
    let (ea, eb) = (a.exp(), b.exp());
    let r2 = p.rho * p.rho;
    Nonlinearity {
        f: r2 * (ea - p.tau * eb),
        df: r2 * (ea + p.gamma * p.tau * eb),
        big_f: r2 * (ea + p.tau / p.gamma * eb),
        saturated: a != t || b != -p.gamma * t,
    }
}

/// Concentration parameters stored as log δ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub log_delta1_sq: f64,
    pub log_delta2_sq: f64,
}

impl Deltas {
    pub fn delta1(&self) -> f64 {
        (0.5 * self.log_delta1_sq).exp()
    }

    pub fn delta2(&self) -> f64 {
        (0.5 * self.log_delta2_sq).exp()
    }

    pub fn bubbles(&self, cfg: &VortexConfig) -> [BubbleParams; 2] {
        [
            BubbleParams { center: cfg.xi1, log_delta_sq: self.log_delta1_sq },
            BubbleParams { center: cfg.xi2, log_delta_sq: self.log_delta2_sq },
        ]
    }
}

/// δ₁² = (ρ²/8) exp(8πh(ξ₁) − (8π/γ)G(ξ₁,ξ₂)),
/// δ₂² = (ρ²τγ/8) exp(8πh(ξ₂) − 8πγG(ξ₁,ξ₂)).
pub fn compute_deltas<E: GreenFunction + ?Sized>(e: &E, cfg: &VortexConfig, rho: f64) -> AnsatzResult<Deltas> {
    let p = NonlinearityParams::for_config(cfg, rho)?;
    cfg.check(e.shape())?;
    let g = e.green(cfg.xi1, cfg.xi2)?;
    let lr = 2.0 * rho.ln() - 8f64.ln();
    Ok(Deltas {
        log_delta1_sq: lr + EIGHT_PI * e.robin(cfg.xi1)? - EIGHT_PI / p.gamma * g,
        log_delta2_sq: lr + (p.tau * p.gamma).ln() + EIGHT_PI * e.robin(cfg.xi2)? - EIGHT_PI * p.gamma * g,
    })
}

/// A bubble with its sign/intensity weight s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedBubble {
    pub bubble: BubbleParams,
    pub weight: f64,
}

/// b = Σ s_k w_k.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Background(pub Vec<WeightedBubble>);

impl Background {
    pub fn two_bubble(bubbles: [BubbleParams; 2], gamma: f64) -> Self {
        Background(vec![
            WeightedBubble { bubble: bubbles[0], weight: 1.0 },
            WeightedBubble { bubble: bubbles[1], weight: -1.0 / gamma },
        ])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self, x: Point) -> f64 {
        self.0.iter().map(|b| b.weight * bubble(&b.bubble, x)).sum()
    }

    /// −Δb = Σ s_k e^{w_k}.
    pub fn source(&self, x: Point) -> f64 {
        self.0.iter().map(|b| b.weight * bubble_exp(&b.bubble, x)).sum()
    }

    pub fn grad(&self, x: Point) -> Point {
        self.0.iter().fold([0.0, 0.0], |acc, b| {
            let g = bubble_grad(&b.bubble, x);
            [acc[0] + b.weight * g[0], acc[1] + b.weight * g[1]]
        })
    }
}

/// u = b + v with b analytic and v sampled on the grid.
#[derive(Debug, Clone)]
pub struct HybridField {
    pub background: Background,
    pub smooth: GridField,
}

impl HybridField {
    pub fn plain(field: GridField) -> Self {
        HybridField { background: Background::default(), smooth: field }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.smooth.grid
    }

    /// u at interior slots.
    pub fn interior_values(&self) -> Vec<f64> {
        let g = self.grid();
        par::map_indices(g.n_interior(), |s| {
            let k = g.interior()[s] as usize;
            self.background.value(g.point(k)) + self.smooth.values[k]
        })
    }

    /// u on all nodes (exterior nodes hold 0).
    pub fn node_field(&self) -> GridField {
        GridField::from_interior(self.grid().clone(), &self.interior_values())
    }

    /// u at an arbitrary point, with v interpolated bilinearly.
    pub fn eval(&self, x: Point) -> f64 {
        self.background.value(x) + self.smooth.interpolate(x)
    }

    pub fn neg(&self) -> Self {
        let bg = self.background.0.iter().map(|b| WeightedBubble { weight: -b.weight, ..*b }).collect();
        HybridField { background: Background(bg), smooth: self.smooth.neg() }
    }
}

/// Integration over Ω: polar rules on discs around the background bubbles,
/// dual-cell node quadrature on the rest.
#[derive(Debug, Clone)]
pub struct Quadrature {
    discs: Vec<(Point, f64, f64)>,
    rule: PolarRule,
}

impl Quadrature {
    /// Discs of radius min(0.3 × separation, 0.5 × boundary distance).
    pub fn for_field(u: &HybridField) -> Self {
        let grid = u.grid();
        let bs = &u.background.0;
        let mut discs = Vec::new();
        for (i, b) in bs.iter().enumerate() {
            let c = b.bubble.center;
            let sep = bs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| dist(c, o.bubble.center))
                .fold(f64::INFINITY, f64::min);
            let bd = grid.shape.as_ref().map_or(f64::INFINITY, |s| s.distance_to_boundary(c));
            let r = (0.3 * sep).min(0.5 * bd);
            if r.is_finite() && r > 0.0 {
                discs.push((c, r, b.bubble.delta().min(r)));
            }
        }
        Quadrature { discs, rule: PolarRule::default() }
    }

    /// Node quadrature only.
    pub fn nodes() -> Self {
        Quadrature { discs: Vec::new(), rule: PolarRule::default() }
    }

    /// ∫_Ω g(x, u(x)) dx.
    pub fn integrate(&self, u: &HybridField, g: impl Fn(Point, f64) -> f64 + Sync + Send) -> f64 {
        let grid = u.grid();
        let vals = u.interior_values();
        let inside = |p: Point| self.discs.iter().any(|d| dist(p, d.0) < d.1);
        let nodes = par::sum_indices(grid.n_interior(), |s| {
            let p = grid.point(grid.interior()[s] as usize);
            if inside(p) {
                0.0
            } else {
                grid.weight(s) * g(p, vals[s])
            }
        });
        let polar: f64 =
            self.discs.iter().map(|&(c, r, scale)| polar_integral(c, r, scale, self.rule, |x| g(x, u.eval(x)))).sum();
        nodes + polar
    }
}

/// How Pw is obtained from w.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    /// Pw = w − ψ with ψ the discrete harmonic extension of w|∂Ω.
    #[default]
    Exact,
    /// Pw = w − log(8δ²) + 8πH(·, ξ).
    Expansion,
}

/// Discrete −Δ and its Cholesky factor on one grid, for harmonic extensions.
pub struct Projector {
    pub op: DiscreteOperator,
    chol: SparseCholesky,
}

impl Projector {
    pub fn new(grid: Arc<Grid>) -> AnsatzResult<Self> {
        let op = DiscreteOperator::assemble(grid);
        let chol = SparseCholesky::factor(&op, None)?;
        Ok(Projector { op, chol })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.op.grid
    }

    /// Interior values of the discrete harmonic function equal to g on ∂Ω.
    pub fn harmonic(&self, g: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        let mut v = self.op.boundary_load(g);
        self.chol.solve(&mut v);
        v
    }
}

/// Smooth part v = W − b of the projected background.
fn projected_smooth<E: GreenFunction + ?Sized>(
    e: &E,
    proj: &Projector,
    bg: &Background,
    mode: ProjectionMode,
) -> AnsatzResult<GridField> {
    let grid = proj.grid().clone();
    let v = match mode {
        ProjectionMode::Exact => proj.harmonic(|p| -bg.value(p)),
        ProjectionMode::Expansion => {
            let vals = par::map_indices(grid.n_interior(), |s| {
                let p = grid.point(grid.interior()[s] as usize);
                let mut acc = 0.0;
                for b in &bg.0 {
                    let h = e.regular_part_from_source(p, b.bubble.center)?;
                    acc += b.weight * (-(8f64.ln() + b.bubble.log_delta_sq) + EIGHT_PI * h);
                }
                Ok(acc)
            });
            vals.into_iter().collect::<Result<Vec<f64>, GreenError>>()?
        }
    };
    Ok(GridField::from_interior(grid, &v))
}

/// Pw_{δ,ξ} at interior nodes.
pub fn project_bubble<E: GreenFunction + ?Sized>(
    e: &E,
    proj: &Projector,
    b: &BubbleParams,
    mode: ProjectionMode,
) -> AnsatzResult<HybridField> {
    let bg = Background(vec![WeightedBubble { bubble: *b, weight: 1.0 }]);
    let smooth = projected_smooth(e, proj, &bg, mode)?;
    Ok(HybridField { background: bg, smooth })
}

/// The two-bubble ansatz with its construction data.
#[derive(Debug, Clone)]
pub struct AnsatzField {
    pub field: HybridField,
    pub deltas: Deltas,
    pub mode: ProjectionMode,
    pub cfg: VortexConfig,
    pub params: NonlinearityParams,
}

/// Fails with `GridTooCoarse` unless δ/h ≥ [`MIN_CORE_RATIO`] at both centres.
pub fn check_core_resolution(grid: &Grid, bubbles: &[BubbleParams]) -> AnsatzResult<()> {
    for (index, b) in bubbles.iter().enumerate() {
        let ratio = b.delta() / grid.local_spacing(b.center);
        if ratio < MIN_CORE_RATIO {
            return Err(AnsatzError::GridTooCoarse { index, ratio, required: MIN_CORE_RATIO });
        }
    }
    Ok(())
}

/// Grid on `shape` with base resolution `n`, graded so that every bubble
/// core has spacing δ/[`MIN_CORE_RATIO`] and spacing grows like
/// √(δ² + r²)/[`MIN_CORE_RATIO`] away from it.
pub fn bubble_grid(shape: &DomainShape, n: usize, bubbles: &[BubbleParams]) -> Grid {
    let core = |b: &BubbleParams| 0.95 * b.delta() / MIN_CORE_RATIO;
    let cx: Vec<Cluster> = bubbles.iter().map(|b| Cluster { center: b.center[0], core: core(b) }).collect();
    let cy: Vec<Cluster> = bubbles.iter().map(|b| Cluster { center: b.center[1], core: core(b) }).collect();
    Grid::graded(shape, n, &cx, &cy, MIN_CORE_RATIO)
}

/// W = Pw₁ − Pw₂/γ on the projector's grid.
pub fn build_ansatz<E: GreenFunction + ?Sized>(
    e: &E,
    proj: &Projector,
    cfg: &VortexConfig,
    rho: f64,
    mode: ProjectionMode,
) -> AnsatzResult<AnsatzField> {
    let params = NonlinearityParams::for_config(cfg, rho)?;
    let deltas = compute_deltas(e, cfg, rho)?;
    let bubbles = deltas.bubbles(cfg);
    check_core_resolution(proj.grid(), &bubbles)?;
    let background = Background::two_bubble(bubbles, cfg.gamma);
    let smooth = projected_smooth(e, proj, &background, mode)?;
    Ok(AnsatzField { field: HybridField { background, smooth }, deltas, mode, cfg: *cfg, params })
}

/// Pointwise R = ΔW + f_ρ(W) = f_ρ(W) − Σ s_k e^{w_k}; the smooth part of W
/// is harmonic and contributes nothing.
pub fn residual_at(u: &HybridField, p: &NonlinearityParams, x: Point, value: f64) -> f64 {
    nonlinearity(value, p).f - u.background.source(x)
}

impl AnsatzField {
    pub fn bubbles(&self) -> [BubbleParams; 2] {
        self.deltas.bubbles(&self.cfg)
    }

    /// R at interior nodes.
    pub fn residual_field(&self) -> GridField {
        let u = &self.field;
        let g = u.grid();
        let vals = u.interior_values();
        let r = par::map_indices(g.n_interior(), |s| {
            residual_at(u, &self.params, g.point(g.interior()[s] as usize), vals[s])
        });
        GridField::from_interior(g.clone(), &r)
    }

    /// ‖R‖_{L^p(Ω)}.
    pub fn residual_norm(&self, p: f64) -> f64 {
        let u = &self.field;
        Quadrature::for_field(u).integrate(u, |x, v| residual_at(u, &self.params, x, v).abs().powf(p)).powf(1.0 / p)
    }

    /// Energy terms of W; ∫|∇W|² is evaluated as ∫(−ΔW)W with the analytic
    /// bubble Laplacian.
    pub fn energy(&self) -> Energy {
        let u = &self.field;
        let q = Quadrature::for_field(u);
        let p = &self.params;
        let dirichlet = 0.5 * q.integrate(u, |x, v| u.background.source(x) * v);
        let (positive, negative) = exp_integrals(&q, u, p);
        Energy::new(dirichlet, positive, negative, p.tau)
    }

    /// (ρ²∫e^W, τρ²∫e^{−γW}).
    pub fn masses(&self) -> (f64, f64) {
        let q = Quadrature::for_field(&self.field);
        let (a, b) = exp_integrals(&q, &self.field, &self.params);
        (a, self.params.tau * b)
    }
}

/// (ρ²∫e^u, ρ²∫e^{−γu}), with exponents clamped.
pub fn exp_integrals(q: &Quadrature, u: &HybridField, p: &NonlinearityParams) -> (f64, f64) {
    let r2 = p.rho * p.rho;
    let pos = q.integrate(u, |_, v| v.clamp(-EXP_CLAMP, EXP_CLAMP).exp());
    let neg = q.integrate(u, |_, v| (-p.gamma * v).clamp(-EXP_CLAMP, EXP_CLAMP).exp());
    (r2 * pos, r2 * neg)
}

/// J_ρ(u) = ½∫|∇u|² − ρ²∫e^u − ρ²τ∫e^{−γu}, split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    /// ½∫|∇u|².
    pub dirichlet: f64,
    /// ρ²∫e^u.
    pub positive: f64,
    /// ρ²∫e^{−γu}.
    pub negative: f64,
    pub tau: f64,
    pub total: f64,
}

impl Energy {
    fn new(dirichlet: f64, positive: f64, negative: f64, tau: f64) -> Self {
        Energy { dirichlet, positive, negative, tau, total: dirichlet - positive - tau * negative }
    }
}

/// Discrete J_ρ of a grid field vanishing on ∂Ω: ½uᵀAu with the finite-volume
/// −Δ (a weighted sum of squared forward differences) and dual-cell quadrature
/// for the exponential terms.
pub fn energy(op: &DiscreteOperator, u: &GridField, p: &NonlinearityParams) -> Energy {
    let v = u.interior_values();
    let au = op.apply(&v);
    let dirichlet = 0.5 * par::dot(&v, &au);
    let u = HybridField::plain(u.clone());
    let (positive, negative) = exp_integrals(&Quadrature::nodes(), &u, p);
    Energy::new(dirichlet, positive, negative, p.tau)
}

/// The constants c₁ = −2(log(1/8) + 1), c₂ = −2(log(τγ/8) + 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConstants {
    pub c1: f64,
    pub c2: f64,
}

impl ExpansionConstants {
    pub fn new(tau: f64, gamma: f64) -> Self {
        ExpansionConstants { c1: -2.0 * ((1.0f64 / 8.0).ln() + 1.0), c2: -2.0 * ((tau * gamma / 8.0).ln() + 1.0) }
    }
}

/// Leading-order value of J_ρ(W):
/// −8π[(1 + γ⁻²)log ρ² + (log(1/8) + 1) + γ⁻²(log(τγ/8) + 1) + 1 + γ⁻¹] − (8π)²𝓗_γ/2.
pub fn expansion_rhs<E: GreenFunction + ?Sized>(e: &E, cfg: &VortexConfig, rho: f64) -> AnsatzResult<f64> {
    let p = NonlinearityParams::for_config(cfg, rho)?;
    let g = p.gamma;
    let lr = (rho * rho).ln();
    let constant = (1.0 + 1.0 / (g * g)) * lr
        + ((1.0f64 / 8.0).ln() + 1.0)
        + ((p.tau * g / 8.0).ln() + 1.0) / (g * g)
        + 1.0
        + 1.0 / g;
    Ok(-EIGHT_PI * constant - 0.5 * EIGHT_PI * EIGHT_PI * hamiltonian(e, cfg)?)
}

/// Leading-order value of ∫|∇W|²:
/// 8π[−2(1 + γ⁻²)log ρ² + c₁ + c₂/γ²] − (8π)²𝓗_γ.
pub fn dirichlet_expansion<E: GreenFunction + ?Sized>(e: &E, cfg: &VortexConfig, rho: f64) -> AnsatzResult<f64> {
    let p = NonlinearityParams::for_config(cfg, rho)?;
    let g2 = p.gamma * p.gamma;
    let c = ExpansionConstants::new(p.tau, p.gamma);
    let lr = (rho * rho).ln();
    Ok(EIGHT_PI * (-2.0 * (1.0 + 1.0 / g2) * lr + c.c1 + c.c2 / g2) - EIGHT_PI * EIGHT_PI * hamiltonian(e, cfg)?)
}
