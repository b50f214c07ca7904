//! Discrete −Δ on masked rectilinear grids, preconditioned conjugate
//! gradients, and sparse Cholesky and LU factorizations for repeated solves.

use crate::geometry::Point;
use crate::grid::{Grid, NONE};
use crate::par::{self, Exec};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("conjugate gradients broke down (non-positive curvature {curvature:e}) at iteration {iteration}")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("matrix is not positive definite (non-positive pivot at row {row})")]
    NotPositiveDefinite { row: usize },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
}

/// Finite-volume form of the 5-point −Δ, scaled by dual-cell areas so that it
/// is symmetric: (A u)_s ≈ M_s (−Δu)(x_s). Boundary-cut arms use the distance
/// to the boundary crossing (second-order ghost extrapolation), which keeps
/// the matrix symmetric positive definite.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: Arc<Grid>,
    coef: Vec<[f64; 4]>,
    nbr: Vec<[u32; 4]>,
    diag: Vec<f64>,
    mass: Vec<f64>,
}

impl DiscreteOperator {
    pub fn assemble(grid: Arc<Grid>) -> Self {
        let n = grid.n_interior();
        let (wx, wy) = grid.dual_widths();
        let mut coef = Vec::with_capacity(n);
        let mut nbr = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        let mut mass = Vec::with_capacity(n);
        for s in 0..n {
            let (i, j) = grid.ij(grid.interior()[s] as usize);
            let a = grid.arms(s);
            let c = [wy[j] / a[0], wy[j] / a[1], wx[i] / a[2], wx[i] / a[3]];
            coef.push(c);
            nbr.push(grid.neighbors(s));
            diag.push(c.iter().sum());
            mass.push(wx[i] * wy[j]);
        }
        DiscreteOperator { grid, coef, nbr, diag, mass }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Dual-cell areas (lumped mass matrix).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn coefficients(&self, s: usize) -> ([f64; 4], [u32; 4]) {
        (self.coef[s], self.nbr[s])
    }

    /// y = (A + diag(shift)) v.
    pub fn apply_shifted(&self, exec: Exec, v: &[f64], shift: Option<&[f64]>, y: &mut [f64]) {
        par::for_each_mut(exec, y, |s, out| {
            let c = &self.coef[s];
            let nb = &self.nbr[s];
            let mut acc = (self.diag[s] + shift.map_or(0.0, |d| d[s])) * v[s];
            for d in 0..4 {
                if nb[d] != NONE {
                    acc -= c[d] * v[nb[d] as usize];
                }
            }
            *out = acc;
        });
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; v.len()];
        self.apply_shifted(Exec::default(), v, None, &mut y);
        y
    }

    /// Contribution of Dirichlet data `g` on the boundary: A_full u = A u − b(g),
    /// so solving A u = rhs + b(g) imposes u = g on ∂Ω.
    pub fn boundary_load(&self, g: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        let grid = &self.grid;
        par::map_indices(self.len(), |s| {
            let mut acc = 0.0;
            for d in 0..4 {
                if self.nbr[s][d] == NONE {
                    acc += self.coef[s][d] * g(grid.arm_end(s, d));
                }
            }
            acc
        })
    }

    /// Pointwise discrete Laplacian Δ_h u (= −(A u)/M) including boundary data g.
    pub fn laplacian(&self, u: &[f64], g: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        let au = self.apply(u);
        let b = self.boundary_load(g);
        (0..u.len()).map(|s| (b[s] - au[s]) / self.mass[s]).collect()
    }
}

pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Jacobi {
    inv: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        Jacobi { inv: diag.iter().map(|d| 1.0 / d).collect() }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv) {
            *z = r * d;
        }
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned CG for an SPD operator given as a closure. `x` holds the
/// initial guess on entry. Stops when ‖b − Ax‖ ≤ tol·‖b‖.
pub fn pcg(
    exec: Exec,
    apply: impl Fn(&[f64], &mut [f64]),
    precond: &dyn Preconditioner,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats, SolverError> {
    let n = b.len();
    let bnorm = par::dot_with(exec, b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    par::for_each_mut(exec, &mut r, |i, v| *v = b[i] - *v);
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = par::dot_with(exec, &r, &z);
    let mut q = vec![0.0; n];
    let mut rel = par::dot_with(exec, &r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return Ok(CgStats { iterations: it, relative_residual: rel });
        }
        apply(&p, &mut q);
        let pq = par::dot_with(exec, &p, &q);
        if pq.is_nan() || pq <= 0.0 || !rz.is_finite() {
            return Err(SolverError::Breakdown { iteration: it, curvature: pq });
        }
        let alpha = rz / pq;
        par::for_each_mut(exec, x, |i, v| *v += alpha * p[i]);
        par::for_each_mut(exec, &mut r, |i, v| *v -= alpha * q[i]);
        // periodically replace the recursive residual by the true one
        if (it + 1) % 500 == 0 {
            apply(x, &mut q);
            par::for_each_mut(exec, &mut r, |i, v| *v = b[i] - q[i]);
        }
        precond.apply(&r, &mut z);
        let rz_new = par::dot_with(exec, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        par::for_each_mut(exec, &mut p, |i, v| *v = z[i] + beta * *v);
        rel = par::dot_with(exec, &r, &r).sqrt() / bnorm;
    }
    if rel <= tol {
        return Ok(CgStats { iterations: max_iter, relative_residual: rel });
    }
    Err(SolverError::MaxIterations { iterations: max_iter, residual: rel })
}

/// Solves (A + diag(shift)) x = b with Jacobi-preconditioned CG.
pub fn linear_solve(
    op: &DiscreteOperator,
    shift: Option<&[f64]>,
    b: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, CgStats), SolverError> {
    let diag: Vec<f64> = match shift {
        Some(d) => op.diag().iter().zip(d).map(|(a, b)| a + b).collect(),
        None => op.diag().to_vec(),
    };
    let pre = Jacobi::new(&diag);
    let mut x = vec![0.0; b.len()];
    let stats = pcg(
        Exec::default(),
        |v, y| op.apply_shifted(Exec::default(), v, shift, y),
        &pre,
        b,
        &mut x,
        tol,
        20 * b.len().max(100),
    )?;
    Ok((x, stats))
}

/// Sparse Cholesky factor of A + diag(shift). The symbolic analysis is kept,
/// so refactoring with a new shift only redoes the numeric phase.
pub struct SparseCholesky {
    mat: SparseColMat<usize, f64>,
    base: Vec<f64>,
    diag_pos: Vec<usize>,
    symbolic: SymbolicLlt<usize>,
    llt: Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn factor(op: &DiscreteOperator, shift: Option<&[f64]>) -> Result<Self, SolverError> {
        let n = op.len();
        let mut trip = Vec::with_capacity(3 * n);
        for s in 0..n {
            trip.push(Triplet::new(s, s, op.diag[s]));
            for d in 0..4 {
                let t = op.nbr[s][d];
                if t != NONE && (t as usize) > s {
                    trip.push(Triplet::new(t as usize, s, -op.coef[s][d]));
                }
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let diag_pos = diagonal_positions(&mat);
        let symbolic = SymbolicLlt::try_new(mat.symbolic(), Side::Lower)
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let llt = Self::numeric(&symbolic, &mat)?;
        let mut out = SparseCholesky { base: op.diag.clone(), mat, diag_pos, symbolic, llt };
        if shift.is_some() {
            out.refactor(shift)?;
        }
        Ok(out)
    }

    fn numeric(symbolic: &SymbolicLlt<usize>, mat: &SparseColMat<usize, f64>) -> Result<Llt<usize, f64>, SolverError> {
        Llt::try_new_with_symbolic(symbolic.clone(), mat.as_ref(), Side::Lower).map_err(|e| match e {
            LltError::Numeric(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => {
                SolverError::NotPositiveDefinite { row: index }
            }
            other => SolverError::Factorization(format!("{other:?}")),
        })
    }

    /// Replaces the diagonal shift and recomputes the numeric factor.
    pub fn refactor(&mut self, shift: Option<&[f64]>) -> Result<(), SolverError> {
        let val = self.mat.val_mut();
        for (s, &p) in self.diag_pos.iter().enumerate() {
            val[p] = self.base[s] + shift.map_or(0.0, |d| d[s]);
        }
        self.llt = Self::numeric(&self.symbolic, &self.mat)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Solves for `k` right-hand sides stored column-major (`b[c*n + i]`), in place.
    pub fn solve_many(&self, b: &mut [f64], k: usize) {
        let n = self.len();
        assert_eq!(b.len(), n * k);
        self.llt.solve_in_place(MatMut::from_column_major_slice_mut(b, n, k));
    }

    pub fn solve(&self, b: &mut [f64]) {
        self.solve_many(b, 1)
    }
}

impl Preconditioner for SparseCholesky {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve(z);
    }
}

/// Sparse LU factor of A + diag(shift) for shifts that may make the matrix
/// indefinite. The symbolic analysis is kept across refactorizations.
pub struct SparseLu {
    mat: SparseColMat<usize, f64>,
    base: Vec<f64>,
    diag_pos: Vec<usize>,
    symbolic: SymbolicLu<usize>,
    lu: Option<Lu<usize, f64>>,
}

impl SparseLu {
    pub fn new(op: &DiscreteOperator) -> Result<Self, SolverError> {
        let n = op.len();
        let mut trip = Vec::with_capacity(5 * n);
        for s in 0..n {
            trip.push(Triplet::new(s, s, op.diag[s]));
            for d in 0..4 {
                let t = op.nbr[s][d];
                if t != NONE {
                    trip.push(Triplet::new(t as usize, s, -op.coef[s][d]));
                }
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let diag_pos = diagonal_positions(&mat);
        let symbolic = SymbolicLu::try_new(mat.symbolic()).map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        Ok(SparseLu { base: op.diag.clone(), mat, diag_pos, symbolic, lu: None })
    }

    /// Numeric factorization of A + diag(shift).
    pub fn factor(&mut self, shift: Option<&[f64]>) -> Result<(), SolverError> {
        let val = self.mat.val_mut();
        for (s, &p) in self.diag_pos.iter().enumerate() {
            val[p] = self.base[s] + shift.map_or(0.0, |d| d[s]);
        }
        self.lu = None;
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), self.mat.as_ref())
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        self.lu = Some(lu);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Solves in place with the current factor; non-finite output means the
    /// matrix was numerically singular.
    pub fn solve(&self, b: &mut [f64]) -> Result<(), SolverError> {
        let lu = self.lu.as_ref().ok_or_else(|| SolverError::Factorization("no numeric factor".into()))?;
        let n = self.len();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(b, n, 1));
        if b.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SolverError::Factorization("singular matrix".into()))
        }
    }
}

fn diagonal_positions(mat: &SparseColMat<usize, f64>) -> Vec<usize> {
    let sym = mat.symbolic();
    (0..mat.ncols())
        .map(|c| {
            let lo = sym.col_ptr()[c];
            lo + sym.row_idx()[lo..sym.col_ptr()[c + 1]].iter().position(|&r| r == c).unwrap()
        })
        .collect()
}
