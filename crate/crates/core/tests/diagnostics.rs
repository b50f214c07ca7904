mod common;

use common::{ellipse65, images_green, images_robin};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;
use vortexlab::ansatz::*;
use vortexlab::diagnostics::*;
use vortexlab::geometry::DomainShape;
use vortexlab::green::{DiskGreen, GreenFunction};
use vortexlab::grid::{Grid, GridField};
use vortexlab::hamiltonian::*;

fn disk() -> DiskGreen {
    DiskGreen::new(DomainShape::unit_disk()).unwrap()
}

fn maximum(e: &dyn GreenFunction, gamma: f64) -> VortexConfig {
    let opts = SearchOptions { starts: 8, seed: 5, ..Default::default() };
    let crit = find_critical_points(e, gamma, 1.0, &opts).unwrap();
    crit.points.iter().find(|p| p.classification == Classification::Maximum).expect("a maximum").config
}

fn disk_ansatz(rho: f64) -> AnsatzField {
    let shape = DomainShape::unit_disk();
    let e = disk();
    let cfg = VortexConfig::new([0.3, 0.1], [-0.4, -0.2], 2.0, 1.0);
    let d = compute_deltas(&e, &cfg, rho).unwrap();
    let proj = Projector::new(Arc::new(bubble_grid(&shape, 65, &d.bubbles(&cfg)))).unwrap();
    build_ansatz(&e, &proj, &cfg, rho, ProjectionMode::Exact).unwrap()
}

/// Images Hamiltonian on the unit disk.
fn images_h(z: [f64; 4], g: f64) -> f64 {
    let (x, y) = ([z[0], z[1]], [z[2], z[3]]);
    images_robin(x) + images_robin(y) / (g * g) - 2.0 * images_green(x, y) / g
}

fn images_grad(z: [f64; 4], g: f64) -> [f64; 4] {
    let h = 1e-6;
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let (mut p, mut m) = (z, z);
        p[k] += h;
        m[k] -= h;
        *o = (images_h(p, g) - images_h(m, g)) / (2.0 * h);
    }
    out
}

#[test]
fn masses_of_the_zero_field_are_the_domain_area() {
    let grid = Arc::new(Grid::uniform(&DomainShape::unit_disk(), 129));
    let u = HybridField::plain(GridField::zeros(grid));
    let p = NonlinearityParams::new(0.1, 2.0, 3.0).unwrap();
    let m = blowup_masses(&u, &p);
    assert!((m.m_plus / (0.01 * PI) - 1.0).abs() < 2e-2, "{}", m.m_plus);
    assert!((m.m_minus / m.m_plus - 2.0).abs() < 1e-12);
    assert!((m.lambda - (m.m_plus + m.m_minus / 3.0)).abs() <= 1e-12 * m.lambda);
    assert!((m.lambda_limit - 8.0 * PI * (1.0 + 1.0 / 9.0)).abs() < 1e-12);
    assert!(!m.saturated);
}

#[test]
fn ansatz_masses_are_close_to_the_quantized_values() {
    let w = disk_ansatz(0.005);
    let m = blowup_masses(&w.field, &w.params);
    for e in m.relative_errors() {
        assert!(e < 0.05, "{:?}", m.relative_errors());
    }
}

#[test]
fn a_single_bubble_has_one_positive_domain() {
    let w = disk_ansatz(0.01);
    let [b1, _] = w.bubbles();
    let e = disk();
    let proj = Projector::new(w.field.grid().clone()).unwrap();
    let pw = project_bubble(&e, &proj, &b1, ProjectionMode::Exact).unwrap();
    let r = nodal_domains(&pw.node_field(), NODAL_THRESHOLD);
    assert_eq!((r.count, r.positive()), (1, 1), "{:?}", r.components);
}

#[test]
fn the_two_bubble_ansatz_has_two_nodal_domains() {
    let w = disk_ansatz(0.01);
    let u = w.field.node_field();
    let r = nodal_domains(&u, NODAL_THRESHOLD);
    assert_eq!((r.count, r.positive(), r.negative()), (2, 1, 1), "{:?}", r.components);
    let g = &u.grid;
    let [b1, b2] = w.bubbles();
    let label_near = |p: [f64; 2]| {
        let k = (0..g.len()).filter(|&k| g.is_interior(k)).min_by(|&a, &b| {
            let (pa, pb) = (g.point(a), g.point(b));
            ((pa[0] - p[0]).hypot(pa[1] - p[1])).total_cmp(&(pb[0] - p[0]).hypot(pb[1] - p[1]))
        });
        r.labels[k.unwrap()]
    };
    let (l1, l2) = (label_near(b1.center), label_near(b2.center));
    assert!(l1 != 0 && l2 != 0 && l1 != l2);
    assert_eq!(r.components[l1 as usize - 1].sign, 1);
    assert_eq!(r.components[l2 as usize - 1].sign, -1);
}

#[test]
fn nodal_count_is_stable_under_refinement() {
    let w = disk_ansatz(0.01);
    let fine = Arc::new(w.field.grid().refined());
    let proj = Projector::new(fine).unwrap();
    let w2 = build_ansatz(&disk(), &proj, &w.cfg, 0.01, ProjectionMode::Exact).unwrap();
    let a = nodal_domains(&w.field.node_field(), NODAL_THRESHOLD);
    let b = nodal_domains(&w2.field.node_field(), NODAL_THRESHOLD);
    assert_eq!(a.count, b.count);
    assert_eq!((a.positive(), a.negative()), (b.positive(), b.negative()));
}

#[test]
fn critical_points_satisfy_the_location_conditions() {
    let e = disk();
    for gamma in [1.0, 2.0, 0.5] {
        let cfg = maximum(&e, gamma);
        let (r1, r2) = location_conditions(&e, &cfg).unwrap();
        assert!(r1 <= 1e-6 && r2 <= 1e-6, "γ={gamma}: {r1:e} {r2:e}");
    }
    let e = ellipse65();
    let cfg = maximum(e, 2.0);
    let (r1, r2) = location_conditions(e, &cfg).unwrap();
    assert!(r1 <= 1e-6 && r2 <= 1e-6, "ellipse: {r1:e} {r2:e}");
}

#[test]
fn generic_configurations_violate_the_location_conditions() {
    let cfg = VortexConfig::new([0.3, 0.1], [-0.4, -0.2], 2.0, 1.0);
    let (r1, r2) = location_conditions(&disk(), &cfg).unwrap();
    assert!(r1 > 1e-3 && r2 > 1e-3, "{r1:e} {r2:e}");
}

#[test]
fn ellipse_branch_has_the_predicted_trends() {
    let e = ellipse65();
    let seed = maximum(e, 1.0);
    let gammas = [1.0, 2.0, 4.0, 8.0];
    let sweep = sweep_gamma(e, &gammas, 1.0, (seed.xi1, seed.xi2), &SweepOptions::default()).unwrap();
    let report = asymptotics_report(&sweep, e, &AsymptoticsTolerances::default()).unwrap();
    assert!(report.rows.iter().all(|r| r.theta_gap.is_some()));
    for v in &report.verdicts {
        assert!(v.passed, "{v:?}");
    }
    let mirrored: Vec<f64> = gammas.iter().map(|g| 1.0 / g).collect();
    let sweep = sweep_gamma(e, &mirrored, 1.0, (seed.xi1, seed.xi2), &SweepOptions::default()).unwrap();
    assert!(sweep.mirrored);
    let report = asymptotics_report(&sweep, e, &AsymptoticsTolerances::default()).unwrap();
    assert!(report.passed(), "{:?}", report.verdicts);
}

#[test]
fn disk_flux_minimizer_is_degenerate() {
    let e = disk();
    let seed = maximum(&e, 1.0);
    let sweep = sweep_gamma(&e, &[1.0, 2.0, 4.0], 1.0, (seed.xi1, seed.xi2), &SweepOptions::default()).unwrap();
    let report = asymptotics_report(&sweep, &e, &AsymptoticsTolerances::default()).unwrap();
    assert!(report.degenerate_minimizer);
    assert!(report.rows.iter().all(|r| r.theta_gap.is_none()));
}

#[test]
fn verdict_constructors() {
    assert!(Verdict::at_most("a", 1.0, 1.0).passed);
    assert!(!Verdict::at_most("a", f64::NAN, 1.0).passed);
    assert!(Verdict::at_least("b", 2.0, 1.0).passed);
    assert!(!Verdict::flag("c", false).passed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn location_residuals_are_scaled_hamiltonian_gradients(
        r1 in 0.1f64..0.7, t1 in 0.0f64..std::f64::consts::TAU,
        r2 in 0.1f64..0.7, t2 in 0.0f64..std::f64::consts::TAU,
        gamma in 0.3f64..3.0,
    ) {
        let (x, y) = ([r1 * t1.cos(), r1 * t1.sin()], [r2 * t2.cos(), r2 * t2.sin()]);
        prop_assume!((x[0] - y[0]).hypot(x[1] - y[1]) > 0.1);
        let cfg = VortexConfig::new(x, y, gamma, 1.0);
        let (a, b) = location_conditions(&disk(), &cfg).unwrap();
        let g = images_grad([x[0], x[1], y[0], y[1]], gamma);
        let (ga, gb) = (g[0].hypot(g[1]) / 2.0, gamma * g[2].hypot(g[3]) / 2.0);
        prop_assert!((a - ga).abs() < 1e-5 * (1.0 + ga), "{} {}", a, ga);
        prop_assert!((b - gb).abs() < 1e-5 * (1.0 + gb), "{} {}", b, gb);
    }

    #[test]
    fn negation_swaps_nodal_signs(
        c in prop::collection::vec((-0.6f64..0.6, -0.6f64..0.6, -1.0f64..1.0), 1..5),
    ) {
        let grid = Arc::new(Grid::uniform(&DomainShape::unit_disk(), 33));
        let u = GridField::from_fn(grid, |p| {
            c.iter().map(|(x, y, a)| a * (-((p[0] - x).powi(2) + (p[1] - y).powi(2)) / 0.02).exp()).sum()
        });
        let a = nodal_domains(&u, NODAL_THRESHOLD);
        let b = nodal_domains(&u.neg(), NODAL_THRESHOLD);
        prop_assert_eq!(a.count, b.count);
        prop_assert_eq!((a.positive(), a.negative()), (b.negative(), b.positive()));
        let area = |r: &NodalReport| r.components.iter().map(|c| c.area).sum::<f64>();
        prop_assert!((area(&a) - area(&b)).abs() < 1e-12);
        prop_assert!(area(&a) <= u.grid.weights().iter().sum::<f64>() + 1e-12);
    }

    #[test]
    fn mass_identity_holds(rho in 1e-3f64..1.0, tau in 0.1f64..5.0, gamma in 0.2f64..5.0, s in -2.0f64..2.0) {
        let grid = Arc::new(Grid::uniform(&DomainShape::unit_disk(), 17));
        let u = HybridField::plain(GridField::from_fn(grid, |p| s * (1.0 - p[0] * p[0] - p[1] * p[1])));
        let p = NonlinearityParams::new(rho, tau, gamma).unwrap();
        let m = blowup_masses(&u, &p);
        prop_assert!((m.lambda - (m.m_plus + m.m_minus / gamma)).abs() <= 1e-12 * m.lambda);
        prop_assert!((m.n2 * gamma - m.n1).abs() < 1e-12);
    }
}
