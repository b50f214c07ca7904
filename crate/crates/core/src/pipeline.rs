//! Stages of a run (Green function, critical points, ansatz, solve, sweep,
//! verification), each recording its results, verdicts and failures in a
//! [`Report`].

use crate::ansatz::{
    bubble_grid, check_core_resolution, compute_deltas, expansion_rhs, AnsatzError, Deltas, Energy, HybridField,
    NonlinearityParams, ProjectionMode, Projector,
};
use crate::diagnostics::{
    asymptotics_report, blowup_masses, location_conditions, nodal_domains, AsymptoticsReport, BlowupMasses, Verdict,
};
use crate::geometry::{DomainShape, Point};
use crate::green::{evaluator_with_store, robin_argmax, DiskGreen, GreenFunction, NumericGreen};
use crate::grid::{Grid, GridField};
use crate::hamiltonian::{find_critical_points, sweep_gamma, Classification, CriticalPoint, VortexConfig};
use crate::io::{self, sweep_rows, write_field, write_sweep_csv, GridKind, Pick, RefinePolicy, Report, RunConfig};
use crate::pde::{continuation, newton_solve, InitialGuess, NewtonSolver, PdeError, SolveResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

/// Exit code of a finished report: 3 if a stage failed, 1 if a verdict
/// failed, 0 otherwise.
pub fn exit_code(report: &Report) -> i32 {
    if report.stages.iter().any(|s| s.status == io::StageStatus::Failed) {
        exit::NUMERICAL
    } else if !report.passed {
        exit::CHECK_FAILED
    } else {
        exit::PASS
    }
}

/// A run in progress: the validated configuration, its Green evaluator and
/// the report being filled.
pub struct Run {
    pub cfg: RunConfig,
    pub green: Box<dyn GreenFunction>,
    pub report: Report,
    started: Instant,
}

type StageResult<T> = Result<T, String>;

impl Run {
    /// Builds the Green evaluator; on failure the report records the stage.
    pub fn new(command: &str, cfg: &RunConfig) -> Result<Self, Box<Report>> {
        let started = Instant::now();
        let store = io::cache_dir();
        match evaluator_with_store(&cfg.shape, cfg.n, store.as_deref()) {
            Ok(green) => Ok(Run { cfg: cfg.clone(), green, report: Report::new(command, cfg), started }),
            Err(err) => {
                let mut report = Report::new(command, cfg);
                report.fail_stage("green", err.to_string(), (), started.elapsed().as_secs_f64());
                report.wall_clock_s = started.elapsed().as_secs_f64();
                Err(Box::new(report))
            }
        }
    }

    /// Records a stage; errors are stored under the stage name.
    fn stage<T: Serialize>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> StageResult<T>) -> Option<T> {
        let t0 = Instant::now();
        match f(self) {
            Ok(data) => {
                self.report.push_stage(name, &data, t0.elapsed().as_secs_f64());
                Some(data)
            }
            Err(err) => {
                self.report.fail_stage(name, err, (), t0.elapsed().as_secs_f64());
                None
            }
        }
    }

    pub fn finish(mut self) -> Report {
        self.report.wall_clock_s = self.started.elapsed().as_secs_f64();
        self.report
    }

    fn comments(&self, extra: &str) -> Vec<String> {
        vec![format!("config {}", self.report.config_hash), extra.to_string()]
    }

    fn write_field(&mut self, f: &GridField, path: PathBuf, note: &str) -> StageResult<()> {
        write_field(f, &path, &self.comments(note)).map_err(|e| e.to_string())?;
        self.report.outputs.push(path);
        Ok(())
    }
}

/// Grid size of the sampled Robin function written by [`green_stage`]; each
/// sample costs one correction solve on numeric evaluators.
pub const ROBIN_SAMPLES: usize = 41;

#[derive(Debug, Clone, Serialize)]
pub struct GreenStage {
    pub evaluator: String,
    pub argmax_h: Point,
    pub max_h: f64,
    /// Sup error of numeric H against the closed form (disks only).
    pub closed_form_error: Option<f64>,
}

/// Sup error of [`NumericGreen`] at grid size `n` against the disk formula
/// over `pairs` random pairs with |x|, |y| ≤ 0.8R and |x − y| ≥ 0.1R.
pub fn disk_fidelity(shape: &DomainShape, n: usize, pairs: usize, seed: u64) -> StageResult<f64> {
    let DomainShape::Disk { center, radius } = shape else {
        return Err("closed-form comparison needs a disk".into());
    };
    let exact = DiskGreen::new(shape.clone()).map_err(|e| e.to_string())?;
    let numeric = NumericGreen::new(shape.clone(), n).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| {
        let r = 0.8 * radius * rng.random::<f64>().sqrt();
        let t = std::f64::consts::TAU * rng.random::<f64>();
        [center[0] + r * t.cos(), center[1] + r * t.sin()]
    };
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < pairs {
        let (x, y) = (point(&mut rng), point(&mut rng));
        if crate::geometry::dist(x, y) < 0.1 * radius {
            continue;
        }
        let a = numeric.regular_part(x, y).map_err(|e| e.to_string())?;
        let b = exact.regular_part(x, y).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
        done += 1;
    }
    Ok(worst)
}

/// Robin function on a [`ROBIN_SAMPLES`]-node grid, its maximizer and, on disks, the
/// closed-form fidelity of the numeric evaluator.
pub fn green_stage(run: &mut Run) {
    let Some(stage) = run.stage("green", |run| {
        let e = run.green.as_ref();
        let argmax = robin_argmax(e, run.cfg.sweep.robin_candidates, run.cfg.sweep.exec).map_err(|e| e.to_string())?;
        let max_h = e.robin(argmax).map_err(|e| e.to_string())?;
        let closed_form_error = match run.cfg.shape {
            DomainShape::Disk { .. } => Some(disk_fidelity(&run.cfg.shape, run.cfg.n, 20, run.cfg.seed)?),
            _ => None,
        };
        let grid = Arc::new(Grid::uniform(&run.cfg.shape, ROBIN_SAMPLES.min(run.cfg.n)));
        let h = GridField::from_fn(grid, |x| e.robin(x).unwrap_or(f64::NAN));
        let path = run.cfg.output_path(&run.cfg.output.field, "robin.fld");
        run.write_field(&h, path, "robin function h(x) = H(x, x)")?;
        let evaluator = match run.cfg.shape {
            DomainShape::Disk { .. } => "closed form".to_string(),
            _ => format!("numeric, n = {}", run.cfg.n),
        };
        Ok(GreenStage { evaluator, argmax_h: argmax, max_h, closed_form_error })
    }) else {
        return;
    };
    if let Some(err) = stage.closed_form_error {
        run.report.push_verdicts([Verdict::at_most("numeric H vs closed form, sup over 20 pairs", err, 5e-3)]);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalEntry {
    pub config: VortexConfig,
    pub value: f64,
    pub grad_norm: f64,
    pub classification: Classification,
    pub eigenvalues: Vec<f64>,
    pub location: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalStage {
    pub gamma: f64,
    pub starts: usize,
    pub points: Vec<CriticalEntry>,
    pub failures: usize,
    pub chosen: Option<usize>,
}

fn choose(points: &[CriticalPoint], pick: Pick) -> Option<usize> {
    match pick {
        Pick::First => (!points.is_empty()).then_some(0),
        Pick::Maximum => points
            .iter()
            .position(|p| p.classification == Classification::Maximum)
            .or_else(|| (0..points.len()).max_by(|&a, &b| points[a].value.total_cmp(&points[b].value))),
    }
}

/// Multistart critical-point search at the first γ, with location residuals.
pub fn critical_stage(run: &mut Run) -> Option<VortexConfig> {
    let stage = run.stage("critical", |run| {
        let e = run.green.as_ref();
        let gamma = run.cfg.gamma.first();
        let opts = run.cfg.search.options(run.cfg.seed);
        let search = find_critical_points(e, gamma, run.cfg.tau, &opts).map_err(|e| e.to_string())?;
        let points = search
            .points
            .iter()
            .map(|p| {
                let location = location_conditions(e, &p.config).map_err(|e| e.to_string())?;
                Ok(CriticalEntry {
                    config: p.config,
                    value: p.value,
                    grad_norm: p.grad_norm,
                    classification: p.classification,
                    eigenvalues: p.eigenvalues.clone(),
                    location,
                })
            })
            .collect::<StageResult<Vec<_>>>()?;
        Ok(CriticalStage {
            gamma,
            starts: search.starts,
            chosen: choose(&search.points, run.cfg.search.pick),
            points,
            failures: search.failures.len(),
        })
    })?;
    let tol = run.cfg.tolerances.location;
    let mut verdicts = vec![Verdict::at_least("critical points found", stage.points.len() as f64, 1.0)];
    for (i, p) in stage.points.iter().enumerate() {
        verdicts.push(Verdict::at_most(
            &format!("location residual max(r1, r2), point {i}"),
            p.location.0.max(p.location.1),
            tol,
        ));
    }
    run.report.push_verdicts(verdicts);
    stage.chosen.map(|i| stage.points[i].config)
}

/// The configuration of the ansatz, solve and sweep stages: explicit
/// positions, else the chosen critical point.
pub fn vortex_config(run: &mut Run) -> Option<VortexConfig> {
    match run.cfg.positions {
        Some(p) => Some(VortexConfig::new(p.xi1, p.xi2, run.cfg.gamma.first(), run.cfg.tau)),
        None => critical_stage(run),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub kind: GridKind,
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    pub interior: usize,
    pub refinements: usize,
}

/// Grid resolving the bubble cores at the smallest ρ, following the
/// configured grid family and refinement policy.
pub fn build_grid(run: &Run, vc: &VortexConfig, rho_min: f64) -> StageResult<(Arc<Grid>, GridInfo)> {
    let e = run.green.as_ref();
    let bubbles = compute_deltas(e, vc, rho_min).map_err(|e| e.to_string())?.bubbles(vc);
    let mut n = run.cfg.n;
    let mut refinements = 0;
    loop {
        let grid = match run.cfg.grid {
            GridKind::Graded => bubble_grid(&run.cfg.shape, n, &bubbles),
            GridKind::Uniform => Grid::uniform(&run.cfg.shape, n),
        };
        match check_core_resolution(&grid, &bubbles) {
            Ok(()) => {
                let info = GridInfo {
                    kind: run.cfg.grid,
                    n,
                    nx: grid.nx(),
                    ny: grid.ny(),
                    interior: grid.n_interior(),
                    refinements,
                };
                return Ok((Arc::new(grid), info));
            }
            Err(err @ AnsatzError::GridTooCoarse { .. }) => {
                if run.cfg.refine == RefinePolicy::Auto && refinements < run.cfg.max_refinements {
                    n = 2 * n - 1;
                    refinements += 1;
                    continue;
                }
                return Err(format!(
                    "{err} at rho = {rho_min}, n = {n} after {refinements} refinement(s); \
                     raise `n`, set `refine` to `auto` with more `max_refinements`, or use `grid` = `graded`"
                ));
            }
            Err(err) => return Err(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnsatzStage {
    pub config: VortexConfig,
    pub rho: f64,
    pub deltas: Deltas,
    pub delta: (f64, f64),
    pub mode: ProjectionMode,
    pub grid: GridInfo,
    /// ‖R‖ in L^{3/2}.
    pub residual_norm: f64,
    pub masses: (f64, f64),
    pub energy: Energy,
    /// Leading-order value of J_ρ(W).
    pub energy_expansion: f64,
}

/// Builds W at the last ρ of the schedule and writes it.
pub fn ansatz_stage(run: &mut Run) {
    let Some(vc) = vortex_config(run) else { return };
    run.stage("ansatz", |run| {
        let rho = run.cfg.rho.last();
        let (grid, info) = build_grid(run, &vc, rho)?;
        let e = run.green.as_ref();
        let proj = Projector::new(grid).map_err(|e| e.to_string())?;
        let w = crate::ansatz::build_ansatz(e, &proj, &vc, rho, run.cfg.projection).map_err(|e| e.to_string())?;
        let stage = AnsatzStage {
            config: vc,
            rho,
            deltas: w.deltas,
            delta: (w.deltas.delta1(), w.deltas.delta2()),
            mode: w.mode,
            grid: info,
            residual_norm: w.residual_norm(1.5),
            masses: w.masses(),
            energy: w.energy(),
            energy_expansion: expansion_rhs(e, &vc, rho).map_err(|e| e.to_string())?,
        };
        let path = run.cfg.output_path(&run.cfg.output.field, "ansatz.fld");
        run.write_field(&w.field.node_field(), path, &format!("ansatz W at rho = {rho}"))?;
        Ok(stage)
    });
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveStep {
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub tol: f64,
    pub factorizations: usize,
    pub provenance: InitialGuess,
    pub saturated: bool,
    pub masses: BlowupMasses,
    pub mass_errors: [f64; 3],
    pub nodal_count: usize,
    pub nodal_signs: (usize, usize),
    /// ‖u − W‖∞ when the solve was seeded by the ansatz.
    pub phi_sup: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveStage {
    pub config: VortexConfig,
    pub grid: GridInfo,
    pub steps: Vec<SolveStep>,
    /// Largest ρ of the schedule reached before a failure, if any.
    pub lost_at: Option<f64>,
}

fn solve_step(run: &Run, rho: f64, solve: &SolveResult, phi_sup: Option<f64>) -> SolveStep {
    let masses = blowup_masses(&solve.u, &solve.params);
    let nodal = nodal_domains(&solve.u.node_field(), run.cfg.tolerances.nodal_threshold);
    SolveStep {
        rho,
        converged: solve.converged,
        iterations: solve.iterations(),
        residuals: solve.residuals.clone(),
        tol: solve.tol,
        factorizations: solve.factorizations,
        provenance: solve.provenance,
        saturated: solve.saturated || masses.saturated,
        mass_errors: masses.relative_errors(),
        masses,
        nodal_count: nodal.count,
        nodal_signs: (nodal.positive(), nodal.negative()),
        phi_sup,
    }
}

/// Newton with continuation over the ρ schedule; writes the solution at the
/// last converged ρ.
pub fn solve_stage(run: &mut Run) {
    let Some(vc) = vortex_config(run) else { return };
    let mut failure = None;
    let stage = run.stage("solve", |run| {
        let rhos = run.cfg.rho.0.clone();
        let (grid, info) = build_grid(run, &vc, run.cfg.rho.last())?;
        let e = run.green.as_ref();
        let proj = Projector::new(grid.clone()).map_err(|e| e.to_string())?;
        let mut solver = NewtonSolver::new(proj.op.clone()).map_err(|e| e.to_string())?;
        let mut steps = Vec::new();
        let mut last_u: Option<HybridField> = None;
        let mut lost_at = None;
        match run.cfg.initial {
            InitialGuess::Zero => {
                for &rho in &rhos {
                    let p = NonlinearityParams::for_config(&vc, rho).map_err(|e| e.to_string())?;
                    let u0 = match &last_u {
                        Some(u) => u.node_field(),
                        None => GridField::zeros(grid.clone()),
                    };
                    match newton_solve(&mut solver, &p, &u0, &run.cfg.newton) {
                        Ok(s) => {
                            steps.push(solve_step(run, rho, &s, None));
                            last_u = Some(s.u);
                        }
                        Err(err) => {
                            failure = Some(err.to_string());
                            lost_at = Some(rho);
                            break;
                        }
                    }
                }
            }
            _ => {
                let res = continuation(e, &proj, &mut solver, &vc, &rhos, run.cfg.projection, &run.cfg.newton);
                let done = match res {
                    Ok(done) => done,
                    Err(PdeError::BranchLost { rho, reason, completed }) => {
                        failure = Some(format!("branch lost at rho = {rho}: {reason}"));
                        lost_at = Some(rho);
                        completed
                    }
                    Err(err) => return Err(err.to_string()),
                };
                for s in &done {
                    steps.push(solve_step(run, s.rho, &s.solve, Some(s.phi_sup)));
                }
                last_u = done.last().map(|s| s.solve.u.clone());
            }
        }
        if let (Some(u), Some(step)) = (&last_u, steps.last()) {
            let path = run.cfg.output_path(&run.cfg.output.field, "solution.fld");
            let rho = step.rho;
            run.write_field(&u.node_field(), path, &format!("solution u at rho = {rho}"))?;
        }
        Ok(SolveStage { config: vc, grid: info, steps, lost_at })
    });
    let Some(stage) = stage else { return };
    if let Some(reason) = failure {
        run.report.fail_stage("continuation", reason, stage.lost_at, 0.0);
    }
    run.report.push_verdicts(solve_verdicts(&stage, run.cfg.tolerances.mass));
}

/// Convergence, nodal count 2 at every step, masses at the last ρ within
/// `tol` and, over a schedule, smaller mass errors at the end than at the start.
pub fn solve_verdicts(stage: &SolveStage, tol: f64) -> Vec<Verdict> {
    let mut v = Vec::new();
    let all_converged = !stage.steps.is_empty() && stage.steps.iter().all(|s| s.converged) && stage.lost_at.is_none();
    v.push(Verdict::flag("Newton converged at every rho", all_converged));
    v.push(Verdict::flag("exactly 2 nodal domains at every rho", stage.steps.iter().all(|s| s.nodal_count == 2)));
    if let Some(last) = stage.steps.last() {
        for (name, err) in ["m+", "m-", "lambda"].iter().zip(last.mass_errors) {
            v.push(Verdict::at_most(&format!("relative error of {name} at rho = {}", last.rho), err, tol));
        }
        v.push(Verdict::flag("no exponent saturation", !last.saturated));
        if stage.steps.len() > 1 {
            let first = &stage.steps[0];
            let shrinking = (0..3).all(|k| last.mass_errors[k] < first.mass_errors[k]);
            v.push(Verdict::flag("mass errors decrease over the schedule", shrinking));
        }
    }
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepStage {
    pub seed: VortexConfig,
    pub gammas: Vec<f64>,
    pub lost: Option<(f64, String)>,
    pub asymptotics: AsymptoticsReport,
}

/// Continuation of the chosen critical point along the γ schedule, trend
/// verdicts and `sweep.csv`.
pub fn sweep_stage(run: &mut Run) {
    let Some(vc) = vortex_config(run) else { return };
    let stage = run.stage("sweep", |run| {
        let e = run.green.as_ref();
        let gammas = run.cfg.gamma.0.clone();
        let sweep =
            sweep_gamma(e, &gammas, run.cfg.tau, (vc.xi1, vc.xi2), &run.cfg.sweep).map_err(|e| e.to_string())?;
        let asym = asymptotics_report(&sweep, e, &run.cfg.tolerances.asymptotics).map_err(|e| e.to_string())?;
        let rows = sweep_rows(&sweep, Some(&asym), &run.report.config_hash);
        let path = run.cfg.output_path(&run.cfg.output.csv, "sweep.csv");
        write_sweep_csv(&path, &rows).map_err(|e| e.to_string())?;
        run.report.outputs.push(path);
        Ok(SweepStage { seed: vc, gammas, lost: sweep.lost.clone(), asymptotics: asym })
    });
    if let Some(stage) = stage {
        run.report.push_verdicts(stage.asymptotics.verdicts.clone());
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyStage {
    pub input: PathBuf,
    pub rho: f64,
    pub gamma: f64,
    pub masses: BlowupMasses,
    pub mass_errors: [f64; 3],
    pub nodal_count: usize,
    pub nodal_signs: (usize, usize),
    pub sup_norm: f64,
}

/// Diagnostics of a stored field at the last ρ and first γ of the config.
/// Masses use node quadrature, since the file holds nodal values only.
pub fn verify_stage(run: &mut Run, input: PathBuf) {
    let stage = run.stage("verify", |run| {
        let u = io::read_field(&input, Some(&run.cfg.shape)).map_err(|e| e.to_string())?;
        let rho = run.cfg.rho.last();
        let gamma = run.cfg.gamma.first();
        let p = NonlinearityParams::new(rho, run.cfg.tau, gamma).map_err(|e| e.to_string())?;
        let masses = blowup_masses(&HybridField::plain(u.clone()), &p);
        let nodal = nodal_domains(&u, run.cfg.tolerances.nodal_threshold);
        Ok(VerifyStage {
            input: input.clone(),
            rho,
            gamma,
            mass_errors: masses.relative_errors(),
            masses,
            nodal_count: nodal.count,
            nodal_signs: (nodal.positive(), nodal.negative()),
            sup_norm: u.sup_norm(),
        })
    });
    let Some(s) = stage else { return };
    let tol = run.cfg.tolerances.mass;
    let mut v = vec![Verdict::flag("exactly 2 nodal domains", s.nodal_count == 2)];
    for (name, err) in ["m+", "m-", "lambda"].iter().zip(s.mass_errors) {
        v.push(Verdict::at_most(&format!("relative error of {name}"), err, tol));
    }
    v.push(Verdict::flag("no exponent saturation", !s.masses.saturated));
    run.report.push_verdicts(v);
}
