mod common;

use common::ellipse65;
use proptest::prelude::*;
use std::sync::Arc;
use vortexlab::ansatz::*;
use vortexlab::geometry::DomainShape;
use vortexlab::grid::{Cluster, Grid, GridField};
use vortexlab::hamiltonian::{find_critical_points, Classification, SearchOptions, VortexConfig};
use vortexlab::linalg::{linear_solve, DiscreteOperator, SolverError, SparseCholesky};
use vortexlab::par::Exec;
use vortexlab::pde::*;

fn disk_op(n: usize) -> DiscreteOperator {
    DiscreteOperator::assemble(Arc::new(Grid::uniform(&DomainShape::unit_disk(), n)))
}

fn graded_ellipse_op() -> DiscreteOperator {
    let shape = DomainShape::ellipse(1.5, 1.0);
    let cx = [Cluster { center: 0.4, core: 0.004 }];
    let cy = [Cluster { center: -0.1, core: 0.004 }];
    DiscreteOperator::assemble(Arc::new(Grid::graded(&shape, 33, &cx, &cy, 8.0)))
}

/// Slots whose four neighbours are interior grid nodes.
fn full_stencil(op: &DiscreteOperator) -> Vec<usize> {
    (0..op.len()).filter(|&s| op.coefficients(s).1.iter().all(|&k| k != vortexlab::grid::NONE)).collect()
}

/// u = φ e^x with φ = 1 − x²/a² − y²/b², and −Δu.
fn manufactured(a: f64, b: f64) -> (impl Fn([f64; 2]) -> f64, impl Fn([f64; 2]) -> f64) {
    let phi = move |p: [f64; 2]| 1.0 - p[0] * p[0] / (a * a) - p[1] * p[1] / (b * b);
    let u = move |p: [f64; 2]| phi(p) * p[0].exp();
    let f = move |p: [f64; 2]| {
        let lap_phi = -2.0 / (a * a) - 2.0 / (b * b);
        let dphi_x = -2.0 * p[0] / (a * a);
        -p[0].exp() * (lap_phi + 2.0 * dphi_x + phi(p))
    };
    (u, f)
}

fn manufactured_error(shape: &DomainShape, a: f64, b: f64, n: usize) -> f64 {
    let (u, f) = manufactured(a, b);
    let op = DiscreteOperator::assemble(Arc::new(Grid::uniform(shape, n)));
    let g = &op.grid;
    let rhs: Vec<f64> = (0..op.len()).map(|s| op.mass()[s] * f(g.point(g.interior()[s] as usize))).collect();
    let mut x = rhs;
    SparseCholesky::factor(&op, None).unwrap().solve(&mut x);
    (0..op.len()).fold(0.0f64, |m, s| m.max((x[s] - u(g.point(g.interior()[s] as usize))).abs()))
}

#[test]
fn operator_is_exact_on_quadratics_away_from_the_boundary() {
    for op in [disk_op(33), graded_ellipse_op()] {
        let q = |p: [f64; 2]| 3.0 * p[0] * p[0] - 2.0 * p[1] * p[1] + p[0] * p[1] + 0.5 * p[0] - 1.0;
        let g = op.grid.clone();
        let u: Vec<f64> = g.interior().iter().map(|&k| q(g.point(k as usize))).collect();
        let lap = op.laplacian(&u, q);
        for s in full_stencil(&op) {
            assert!((lap[s] - 2.0).abs() < 1e-8, "slot {s}: {}", lap[s]);
        }
    }
}

#[test]
fn operator_reproduces_affine_functions_everywhere() {
    for op in [disk_op(33), graded_ellipse_op()] {
        let l = |p: [f64; 2]| 0.7 * p[0] - 1.3 * p[1] + 0.2;
        let g = op.grid.clone();
        let u: Vec<f64> = g.interior().iter().map(|&k| l(g.point(k as usize))).collect();
        let lap = op.laplacian(&u, l);
        let worst = lap.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-8, "{worst}");
    }
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    for (shape, a, b) in [(DomainShape::unit_disk(), 1.0, 1.0), (DomainShape::ellipse(1.5, 1.0), 1.5, 1.0)] {
        let errs: Vec<f64> = [65, 129, 257].iter().map(|&n| manufactured_error(&shape, a, b, n)).collect();
        // boundary cut lengths vary with n, so the fit spans two refinements
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order >= 1.8, "{shape:?}: errors {errs:?}");
        assert!(errs.windows(2).all(|w| w[0] / w[1] > 3.0), "{errs:?}");
        assert!(errs[2] < 5e-4, "{errs:?}");
    }
}

#[test]
fn indefinite_shifts_are_detected() {
    let op = disk_op(33);
    let shift: Vec<f64> = op.mass().iter().map(|m| -200.0 * m).collect();
    let b = vec![1.0; op.len()];
    match linear_solve(&op, Some(&shift), &b, 1e-10) {
        Err(SolverError::Breakdown { .. }) | Err(SolverError::MaxIterations { .. }) => {}
        other => panic!("expected a CG failure, got {other:?}"),
    }
    assert!(matches!(SparseCholesky::factor(&op, Some(&shift)), Err(SolverError::NotPositiveDefinite { .. })));
}

#[test]
fn cholesky_and_cg_agree() {
    let op = graded_ellipse_op();
    let b: Vec<f64> = (0..op.len()).map(|s| ((s * 7919) % 13) as f64 - 6.0).collect();
    let (x, _) = linear_solve(&op, None, &b, 1e-13).unwrap();
    let chol = SparseCholesky::factor(&op, None).unwrap();
    let mut y = b.clone();
    chol.solve(&mut y);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9 * scale));
}

/// Picard iteration u ← A⁻¹ M f_ρ(u) from zero; a contraction for small ρ.
fn picard(op: &DiscreteOperator, p: &NonlinearityParams) -> Vec<f64> {
    let mut u = vec![0.0; op.len()];
    for _ in 0..60 {
        let rhs: Vec<f64> = u.iter().zip(op.mass()).map(|(v, m)| m * nonlinearity(*v, p).f).collect();
        u = linear_solve(op, None, &rhs, 1e-14).unwrap().0;
    }
    u
}

#[test]
fn zero_seed_matches_a_fixed_point_oracle() {
    let op = disk_op(33);
    let p = NonlinearityParams::new(1e-3, 3.0, 2.0).unwrap();
    let oracle = picard(&op, &p);
    let mut solver = NewtonSolver::new(op.clone()).unwrap();
    let r = newton_solve(&mut solver, &p, &GridField::zeros(op.grid.clone()), &NewtonOptions::default()).unwrap();
    assert_eq!(r.provenance, InitialGuess::Zero);
    let v = r.u.smooth.interior_values();
    let scale = oracle.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(scale > 0.0);
    let gap = v.iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap < 1e-8 * scale, "gap {gap} scale {scale}");
}

#[test]
fn large_rho_fails_cleanly() {
    let op = disk_op(17);
    let p = NonlinearityParams::new(10.0, 2.0, 1.5).unwrap();
    let mut solver = NewtonSolver::new(op.clone()).unwrap();
    let opts = NewtonOptions { max_iter: 30, ..Default::default() };
    if let Err(err) = newton_solve(&mut solver, &p, &GridField::zeros(op.grid.clone()), &opts) {
        assert!(!err.to_string().is_empty());
    }
}

struct Branch {
    ansatz: AnsatzField,
    result: SolveResult,
}

fn ellipse_branch(exec: Exec) -> Branch {
    let e = ellipse65();
    let shape = DomainShape::ellipse(1.5, 1.0);
    let opts = SearchOptions { starts: 8, seed: 3, ..Default::default() };
    let crit = find_critical_points(e, 1.0, 1.0, &opts).unwrap();
    let cp = crit.points.iter().find(|p| p.classification == Classification::Maximum).expect("a maximum");
    let cfg: VortexConfig = cp.config;
    let rho = 0.01;
    let d = compute_deltas(e, &cfg, rho).unwrap();
    let proj = Projector::new(Arc::new(bubble_grid(&shape, 65, &d.bubbles(&cfg)))).unwrap();
    let w = build_ansatz(e, &proj, &cfg, rho, ProjectionMode::Exact).unwrap();
    let mut solver = NewtonSolver::new(proj.op.clone()).unwrap();
    solver.exec = exec;
    let result = solve_from_ansatz(&w, &mut solver, &NewtonOptions::default()).unwrap();
    Branch { ansatz: w, result }
}

#[test]
fn newton_from_the_ansatz_converges_near_it() {
    let b = ellipse_branch(Exec::Parallel);
    let r = &b.result;
    assert!(r.converged);
    assert!(r.iterations() <= 10, "{:?}", r.residuals);
    let phi = correction(&r.u, &b.ansatz);
    let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(sup <= 0.5, "‖u − W‖ = {sup}");
    let [b1, b2] = b.ansatz.bubbles();
    assert!(r.u.eval(b1.center) > 0.0 && r.u.eval(b2.center) < 0.0);
    // below unit residual the iteration contracts quadratically
    let res = &r.residuals;
    let tail: Vec<_> = res.windows(2).filter(|w| w[0] < 1.0).collect();
    assert!(!tail.is_empty(), "{res:?}");
    assert!(tail.iter().all(|w| w[1] <= w[0].powf(1.8)), "{res:?}");
}

#[test]
fn newton_is_deterministic_across_execution_modes() {
    let a = ellipse_branch(Exec::Parallel).result;
    let b = ellipse_branch(Exec::Sequential).result;
    assert_eq!(a.residuals, b.residuals);
    assert_eq!(a.u.smooth.values, b.u.smooth.values);
}

#[test]
fn continuation_rejects_non_decreasing_schedules() {
    let shape = DomainShape::unit_disk();
    let e = vortexlab::green::DiskGreen::new(shape.clone()).unwrap();
    let cfg = VortexConfig::new([0.3, 0.1], [-0.4, -0.2], 2.0, 1.0);
    let proj = Projector::new(Arc::new(Grid::uniform(&shape, 17))).unwrap();
    let mut solver = NewtonSolver::new(proj.op.clone()).unwrap();
    let r = continuation(&e, &proj, &mut solver, &cfg, &[0.01, 0.02], ProjectionMode::Exact, &NewtonOptions::default());
    assert!(matches!(r, Err(PdeError::Ansatz(AnsatzError::InvalidParams(_)))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operator_is_symmetric_positive(seed in any::<u64>()) {
        let op = graded_ellipse_op();
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let v: Vec<f64> = (0..op.len()).map(|_| next()).collect();
        let w: Vec<f64> = (0..op.len()).map(|_| next()).collect();
        let (av, aw) = (op.apply(&v), op.apply(&w));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (x, y) = (dot(&w, &av), dot(&v, &aw));
        prop_assert!((x - y).abs() <= 1e-10 * (x.abs() + y.abs()));
        prop_assert!(dot(&v, &av) > 0.0);
    }
}
