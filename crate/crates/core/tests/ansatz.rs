mod common;

use common::{images_green, images_robin};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;
use vortexlab::ansatz::*;
use vortexlab::geometry::DomainShape;
use vortexlab::green::DiskGreen;
use vortexlab::grid::Grid;
use vortexlab::hamiltonian::VortexConfig;
use vortexlab::quad::{polar_integral, PolarRule};

fn disk() -> DiskGreen {
    DiskGreen::new(DomainShape::unit_disk()).unwrap()
}

fn disk_config(gamma: f64, tau: f64) -> VortexConfig {
    VortexConfig::new([0.3, 0.1], [-0.4, -0.2], gamma, tau)
}

/// Five-point Laplacian with step h, used as an independent oracle.
fn fd_laplacian(f: impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> f64 {
    let c = f(x);
    (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h]) - 4.0 * c) / (h * h)
}

#[test]
fn bubble_mass_over_a_large_disc_matches_the_closed_form() {
    for delta in [1e-1, 1e-2, 1e-3] {
        let b = BubbleParams::new(delta, [0.1, -0.2]);
        for radius in [delta, 10.0 * delta, 1e3 * delta] {
            let m = polar_integral(b.center, radius, delta, PolarRule::default(), |x| bubble_exp(&b, x));
            let exact = 8.0 * PI * radius * radius / (delta * delta + radius * radius);
            assert!((m - exact).abs() <= 1e-10 * exact, "δ={delta} R={radius}: {m} vs {exact}");
        }
    }
}

#[test]
fn bubble_is_the_explicit_profile() {
    let b = BubbleParams::new(0.05, [0.2, 0.3]);
    for r in [0.0, 0.01, 0.05, 0.3] {
        let x = [0.2 + r, 0.3];
        let explicit = (8.0 * 0.05f64.powi(2) / (0.05f64.powi(2) + r * r).powi(2)).ln();
        assert!((bubble(&b, x) - explicit).abs() < 1e-12);
    }
}

#[test]
fn deltas_follow_the_images_formula_on_the_disk() {
    let cfg = disk_config(2.0, 1.5);
    let rho = 0.01f64;
    let d = compute_deltas(&disk(), &cfg, rho).unwrap();
    let g = images_green(cfg.xi1, cfg.xi2);
    let d1 = rho * rho / 8.0 * (8.0 * PI * images_robin(cfg.xi1) - 8.0 * PI / cfg.gamma * g).exp();
    let d2 =
        rho * rho * cfg.tau * cfg.gamma / 8.0 * (8.0 * PI * images_robin(cfg.xi2) - 8.0 * PI * cfg.gamma * g).exp();
    assert!((d.delta1().powi(2) / d1 - 1.0).abs() < 1e-12);
    assert!((d.delta2().powi(2) / d2 - 1.0).abs() < 1e-12);
}

#[test]
fn uniform_grids_that_miss_the_cores_are_rejected() {
    let shape = DomainShape::unit_disk();
    let e = disk();
    let cfg = disk_config(2.0, 1.0);
    let proj = Projector::new(Arc::new(Grid::uniform(&shape, 33))).unwrap();
    match build_ansatz(&e, &proj, &cfg, 0.01, ProjectionMode::Exact) {
        Err(AnsatzError::GridTooCoarse { ratio, required, .. }) => {
            assert!(ratio < required);
            assert_eq!(required, MIN_CORE_RATIO);
        }
        other => panic!("expected GridTooCoarse, got {other:?}"),
    }
}

#[test]
fn graded_grids_resolve_the_cores() {
    let shape = DomainShape::unit_disk();
    let cfg = disk_config(2.0, 1.0);
    for rho in [0.04, 0.005] {
        let d = compute_deltas(&disk(), &cfg, rho).unwrap();
        let grid = bubble_grid(&shape, 65, &d.bubbles(&cfg));
        check_core_resolution(&grid, &d.bubbles(&cfg)).unwrap();
    }
}

#[test]
fn projection_modes_agree_up_to_the_expansion_error() {
    let shape = DomainShape::unit_disk();
    let e = disk();
    let cfg = disk_config(2.0, 1.0);
    let rho = 0.01;
    let d = compute_deltas(&e, &cfg, rho).unwrap();
    let proj = Projector::new(Arc::new(bubble_grid(&shape, 65, &d.bubbles(&cfg)))).unwrap();
    let exact = build_ansatz(&e, &proj, &cfg, rho, ProjectionMode::Exact).unwrap();
    let expansion = build_ansatz(&e, &proj, &cfg, rho, ProjectionMode::Expansion).unwrap();
    let a = exact.field.smooth.interior_values();
    let b = expansion.field.smooth.interior_values();
    let gap = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(gap < 1e-2 * scale, "gap {gap} scale {scale}");
}

#[test]
fn ansatz_masses_approach_their_limits() {
    let shape = DomainShape::unit_disk();
    let e = disk();
    let cfg = disk_config(2.0, 1.0);
    let mut prev = f64::INFINITY;
    for rho in [0.02, 0.005] {
        let d = compute_deltas(&e, &cfg, rho).unwrap();
        let proj = Projector::new(Arc::new(bubble_grid(&shape, 65, &d.bubbles(&cfg)))).unwrap();
        let w = build_ansatz(&e, &proj, &cfg, rho, ProjectionMode::Exact).unwrap();
        let (mp, mm) = w.masses();
        let err = ((mp - 8.0 * PI).abs() / (8.0 * PI)).max((mm - 8.0 * PI / cfg.gamma).abs() / (8.0 * PI / cfg.gamma));
        assert!(err < 0.05, "ρ={rho}: {err}");
        assert!(err < prev);
        prev = err;
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    for (r, t, g) in [(0.0, 1.0, 1.0), (0.1, -1.0, 1.0), (0.1, 1.0, f64::NAN)] {
        assert!(matches!(NonlinearityParams::new(r, t, g), Err(AnsatzError::InvalidParams(_))));
    }
}

#[test]
fn exponents_are_clamped_and_flagged() {
    let p = NonlinearityParams::new(1.0, 1.0, 2.0).unwrap();
    let n = nonlinearity(1e4, &p);
    assert!(n.f.is_finite() && n.saturated);
    assert!(!nonlinearity(3.0, &p).saturated);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bubble_solves_liouville(ld in -6.0f64..0.0, y in (-3.0f64..3.0, -3.0f64..3.0)) {
        let delta = 10f64.powf(ld / 2.0);
        let b = BubbleParams::new(delta, [0.1, 0.2]);
        let x = [0.1 + delta * y.0, 0.2 + delta * y.1];
        let h = 1e-3 * delta;
        let res = fd_laplacian(|p| bubble(&b, p), x, h) + bubble_exp(&b, x);
        prop_assert!(res.abs() * delta * delta < 1e-4, "{}", res * delta * delta);
    }

    #[test]
    fn kernel_functions_solve_the_linearized_equation(
        j in 0usize..3,
        ld in -6.0f64..0.0,
        y in (-3.0f64..3.0, -3.0f64..3.0),
    ) {
        let delta = 10f64.powf(ld / 2.0);
        let b = BubbleParams::new(delta, [-0.3, 0.05]);
        let x = [-0.3 + delta * y.0, 0.05 + delta * y.1];
        let h = 1e-3 * delta;
        let res = fd_laplacian(|p| kernel_psi(j, &b, p), x, h) + bubble_exp(&b, x) * kernel_psi(j, &b, x);
        let scale = if j == 0 { delta * delta } else { delta * delta * delta };
        prop_assert!(res.abs() * scale < 1e-4, "j={} {}", j, res * scale);
    }

    #[test]
    fn nonlinearity_derivatives_are_consistent(
        t in -5.0f64..5.0,
        rho in 0.01f64..2.0,
        tau in 0.1f64..4.0,
        gamma in 0.2f64..5.0,
    ) {
        let p = NonlinearityParams::new(rho, tau, gamma).unwrap();
        let h = 1e-5;
        let (a, b, c) = (nonlinearity(t - h, &p), nonlinearity(t, &p), nonlinearity(t + h, &p));
        let scale = 1.0 + b.f.abs() + b.df.abs();
        prop_assert!(((c.big_f - a.big_f) / (2.0 * h) - b.f).abs() < 1e-6 * scale);
        prop_assert!(((c.f - a.f) / (2.0 * h) - b.df).abs() < 1e-6 * scale);
        let direct = rho * rho * (t.exp() - tau * (-gamma * t).exp());
        prop_assert!((b.f - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn background_gradient_matches_differences(
        x in (-0.8f64..0.8, -0.8f64..0.8),
        gamma in 0.5f64..4.0,
    ) {
        let bg = Background::two_bubble(
            [BubbleParams::new(0.1, [0.3, 0.1]), BubbleParams::new(0.05, [-0.4, -0.2])],
            gamma,
        );
        let h = 1e-6;
        let g = bg.grad([x.0, x.1]);
        let dx = (bg.value([x.0 + h, x.1]) - bg.value([x.0 - h, x.1])) / (2.0 * h);
        let dy = (bg.value([x.0, x.1 + h]) - bg.value([x.0, x.1 - h])) / (2.0 * h);
        let scale = 1.0 + g[0].abs() + g[1].abs();
        prop_assert!((g[0] - dx).abs() < 1e-5 * scale && (g[1] - dy).abs() < 1e-5 * scale);
    }
}
