//! Damped Newton for −Δu = f_ρ(u), u = 0 on ∂Ω, and continuation in ρ.
//!
//! Unknowns are the grid part v of u = b + v (see [`crate::ansatz`]), so the
//! discrete equations read A v − M(f_ρ(b + v) − Σ s_k e^{w_k}) = load(−b).
//! The Jacobian A − M f_ρ′(u) is symmetric but indefinite near the bubbles
//! and is factored by sparse LU.

use crate::ansatz::{
    build_ansatz, nonlinearity, AnsatzError, AnsatzField, HybridField, NonlinearityParams, ProjectionMode, Projector,
};
use crate::green::GreenFunction;
use crate::grid::GridField;
use crate::hamiltonian::VortexConfig;
use crate::linalg::{DiscreteOperator, SolverError, SparseLu};
use crate::par::{self, Exec};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PdeError {
    #[error("Newton diverged: {reason} (best residual {:e})", best.residual())]
    Diverged { reason: String, best: Box<SolveResult> },
    #[error("branch lost at rho = {rho}: {reason}")]
    BranchLost { rho: f64, reason: String, completed: Vec<ContinuationStep> },
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error("linear solve failed: {0}")]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    /// tol_N = tol_factor · (1 + sup|f_ρ(u)|).
    pub tol_factor: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol_factor: 1e-10, max_iter: 50, max_halvings: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialGuess {
    Zero,
    Ansatz,
    Continuation,
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    /// Sup-norm residual after the step.
    pub residual: f64,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: HybridField,
    pub converged: bool,
    /// Sup-norm residuals, starting with the initial guess.
    pub residuals: Vec<f64>,
    pub steps: Vec<NewtonStep>,
    pub tol: f64,
    pub factorizations: usize,
    pub provenance: InitialGuess,
    pub params: NonlinearityParams,
    /// Some exponent hit the clamp at the final iterate.
    pub saturated: bool,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }
}

/// Operator and LU workspace for repeated solves on one grid.
pub struct NewtonSolver {
    op: DiscreteOperator,
    lu: SparseLu,
    pub exec: Exec,
}

struct Eval {
    residual: Vec<f64>,
    sup: f64,
    fmax: f64,
    saturated: bool,
}

impl NewtonSolver {
    pub fn new(op: DiscreteOperator) -> Result<Self, PdeError> {
        let lu = SparseLu::new(&op)?;
        Ok(NewtonSolver { op, lu, exec: Exec::default() })
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    /// Pointwise residual (A v − load)/M − f_ρ(b + v) + Σ s_k e^{w_k}.
    fn eval(&self, bg_vals: &[f64], src: &[f64], load: &[f64], v: &[f64], p: &NonlinearityParams) -> Eval {
        let n = v.len();
        let mut av = vec![0.0; n];
        self.op.apply_shifted(self.exec, v, None, &mut av);
        let m = self.op.mass();
        let parts = par::map_indices_with(self.exec, n, |s| {
            let nl = nonlinearity(bg_vals[s] + v[s], p);
            ((av[s] - load[s]) / m[s] - nl.f + src[s], nl.f.abs(), nl.saturated)
        });
        let residual: Vec<f64> = parts.iter().map(|q| q.0).collect();
        Eval {
            sup: residual.iter().fold(0.0, |a, r| a.max(r.abs())),
            fmax: parts.iter().fold(0.0, |a, q| a.max(q.1)),
            saturated: parts.iter().any(|q| q.2),
            residual,
        }
    }

    /// Damped Newton from u0; background bubbles of u0 stay fixed.
    pub fn solve(
        &mut self,
        u0: &HybridField,
        p: &NonlinearityParams,
        opts: &NewtonOptions,
        provenance: InitialGuess,
    ) -> Result<SolveResult, PdeError> {
        let grid = self.op.grid.clone();
        assert_eq!(grid.n_interior(), u0.grid().n_interior(), "seed lives on another grid");
        let bg = &u0.background;
        let pts: Vec<_> = grid.interior().iter().map(|&k| grid.point(k as usize)).collect();
        let bg_vals: Vec<f64> = par::map_slice(&pts, |x| bg.value(*x));
        let src: Vec<f64> = par::map_slice(&pts, |x| bg.source(*x));
        let load = self.op.boundary_load(|x| -bg.value(x));
        let mut v = u0.smooth.interior_values();
        let mut ev = self.eval(&bg_vals, &src, &load, &v, p);
        let mut result = SolveResult {
            u: u0.clone(),
            converged: false,
            residuals: vec![ev.sup],
            steps: Vec::new(),
            tol: opts.tol_factor * (1.0 + ev.fmax),
            factorizations: 0,
            provenance,
            params: *p,
            saturated: ev.saturated,
        };
        let finish = |result: &mut SolveResult, v: &[f64], ev: &Eval| {
            result.u = HybridField { background: bg.clone(), smooth: GridField::from_interior(grid.clone(), v) };
            result.saturated = ev.saturated;
        };
        for _ in 0..opts.max_iter {
            result.tol = opts.tol_factor * (1.0 + ev.fmax);
            if ev.sup <= result.tol && ev.sup.is_finite() {
                result.converged = true;
                break;
            }
            let m = self.op.mass();
            let shift: Vec<f64> =
                par::map_indices_with(self.exec, v.len(), |s| -m[s] * nonlinearity(bg_vals[s] + v[s], p).df);
            self.lu.factor(Some(&shift))?;
            result.factorizations += 1;
            let mut delta: Vec<f64> = ev.residual.iter().zip(m).map(|(r, m)| -r * m).collect();
            self.lu.solve(&mut delta)?;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
                let et = self.eval(&bg_vals, &src, &load, &trial, p);
                if et.sup.is_finite() && et.sup < ev.sup {
                    accepted = Some((trial, et));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, et)) => {
                    v = trial;
                    ev = et;
                    result.residuals.push(ev.sup);
                    result.steps.push(NewtonStep { residual: ev.sup, damping: t });
                }
                None => {
                    finish(&mut result, &v, &ev);
                    return Err(PdeError::Diverged {
                        reason: format!("line search failed after {} halvings", opts.max_halvings),
                        best: Box::new(result),
                    });
                }
            }
        }
        result.tol = opts.tol_factor * (1.0 + ev.fmax);
        if !result.converged && ev.sup <= result.tol {
            result.converged = true;
        }
        finish(&mut result, &v, &ev);
        if result.converged {
            Ok(result)
        } else {
            Err(PdeError::Diverged {
                reason: format!("no convergence in {} iterations", opts.max_iter),
                best: Box::new(result),
            })
        }
    }
}

/// Newton from a plain grid field (no analytic bubbles).
pub fn newton_solve(
    solver: &mut NewtonSolver,
    p: &NonlinearityParams,
    u0: &GridField,
    opts: &NewtonOptions,
) -> Result<SolveResult, PdeError> {
    let provenance = if u0.values.iter().all(|v| *v == 0.0) { InitialGuess::Zero } else { InitialGuess::Given };
    solver.solve(&HybridField::plain(u0.clone()), p, opts, provenance)
}

/// One converged ρ step of a continuation.
#[derive(Debug, Clone)]
pub struct ContinuationStep {
    pub rho: f64,
    pub ansatz: AnsatzField,
    pub solve: SolveResult,
    /// ‖u − W‖∞ over interior nodes.
    pub phi_sup: f64,
}

/// φ = u − W at interior nodes.
pub fn correction(u: &HybridField, w: &AnsatzField) -> Vec<f64> {
    let a = u.interior_values();
    let b = w.field.interior_values();
    a.iter().zip(&b).map(|(a, b)| a - b).collect()
}

/// Traces the branch over a strictly decreasing ρ schedule on the projector's
/// grid. Each step is seeded with W_ρ + φ, φ = u − W from the previous step.
pub fn continuation<E: GreenFunction + ?Sized>(
    e: &E,
    proj: &Projector,
    solver: &mut NewtonSolver,
    cfg: &VortexConfig,
    rhos: &[f64],
    mode: ProjectionMode,
    opts: &NewtonOptions,
) -> Result<Vec<ContinuationStep>, PdeError> {
    if rhos.is_empty() || rhos.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less)) {
        return Err(AnsatzError::InvalidParams("rho schedule must be non-empty and strictly decreasing".into()).into());
    }
    let mut steps: Vec<ContinuationStep> = Vec::new();
    for &rho in rhos {
        let lost =
            |steps: Vec<ContinuationStep>, reason: String| PdeError::BranchLost { rho, reason, completed: steps };
        let w = match build_ansatz(e, proj, cfg, rho, mode) {
            Ok(w) => w,
            Err(err) => return Err(lost(steps, err.to_string())),
        };
        let (seed, provenance) = match steps.last() {
            None => (w.field.clone(), InitialGuess::Ansatz),
            Some(prev) => {
                let phi = correction(&prev.solve.u, &prev.ansatz);
                let mut smooth = w.field.smooth.interior_values();
                smooth.iter_mut().zip(&phi).for_each(|(v, f)| *v += f);
                let smooth = GridField::from_interior(w.field.grid().clone(), &smooth);
                (HybridField { background: w.field.background.clone(), smooth }, InitialGuess::Continuation)
            }
        };
        let params = w.params;
        match solver.solve(&seed, &params, opts, provenance) {
            Ok(solve) => {
                let phi_sup = correction(&solve.u, &w).iter().fold(0.0f64, |a, v| a.max(v.abs()));
                steps.push(ContinuationStep { rho, ansatz: w, solve, phi_sup });
            }
            Err(err) => return Err(lost(steps, err.to_string())),
        }
    }
    Ok(steps)
}

/// Solves from the ansatz at a single ρ.
pub fn solve_from_ansatz(
    w: &AnsatzField,
    solver: &mut NewtonSolver,
    opts: &NewtonOptions,
) -> Result<SolveResult, PdeError> {
    solver.solve(&w.field, &w.params, opts, InitialGuess::Ansatz)
}
