mod common;

use common::{ellipse65, images_green, images_robin, in_ellipse, points};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vortexlab::geometry::DomainShape;
use vortexlab::green::{DiskGreen, GreenFunction};
use vortexlab::hamiltonian::*;
use vortexlab::par::Exec;

fn disk() -> DiskGreen {
    DiskGreen::new(DomainShape::unit_disk()).unwrap()
}

fn images_hamiltonian(x: [f64; 2], y: [f64; 2], g: f64) -> f64 {
    images_robin(x) + images_robin(y) / (g * g) - 2.0 * images_green(x, y) / g
}

#[test]
fn disk_value_matches_images() {
    let cfg = VortexConfig::new([0.3, 0.0], [-0.3, 0.0], 1.0, 1.0);
    let v = hamiltonian(&disk(), &cfg).unwrap();
    assert!((v - images_hamiltonian(cfg.xi1, cfg.xi2, 1.0)).abs() < 1e-14);
    assert!((v + 0.220052).abs() < 1e-6, "{v}");
    assert!((images_robin([0.3, 0.0]) + 0.015010).abs() < 1e-6);
    assert!((images_green([0.3, 0.0], [-0.3, 0.0]) - 0.095016).abs() < 1e-6);
}

#[test]
fn diverges_on_the_diagonal() {
    let e = disk();
    let mut prev = f64::INFINITY;
    for s in [1e-2, 1e-4, 1e-6, 1e-7] {
        let v = hamiltonian(&e, &VortexConfig::new([0.2, 0.1], [0.2 + s, 0.1], 2.0, 1.0)).unwrap();
        assert!(v < prev);
        prev = v;
    }
    assert!(prev < -2.0);
}

#[test]
fn kirchhoff_routh_consistency() {
    let e = disk();
    let pts = points(17, 200, |p| p[0].hypot(p[1]) < 0.95, [1.0, 1.0]);
    for (k, w) in pts.chunks(2).enumerate() {
        let g = 0.25 + 0.1 * k as f64;
        let cfg = VortexConfig::new(w[0], w[1], g, 1.0);
        let a = hamiltonian(&e, &cfg).unwrap();
        let b = kirchhoff_routh(&e, &[w[0], w[1]], &[1.0, -1.0 / g]).unwrap();
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} {b}");
    }
    let x = [0.3, -0.2];
    let one = kirchhoff_routh(&e, &[x], &[1.7]).unwrap();
    assert!((one - 1.7 * 1.7 * images_robin(x)).abs() < 1e-14);
    let three = kirchhoff_routh(&e, &[x, [0.0, 0.5], [-0.4, 0.1]], &[1.0, 0.0, 2.0]).unwrap();
    let two = kirchhoff_routh(&e, &[x, [-0.4, 0.1]], &[1.0, 2.0]).unwrap();
    assert_eq!(three, two);
    assert!(kirchhoff_routh(&e, &[x], &[1.0, 2.0]).is_err());
    assert!(kirchhoff_routh(&e, &[x, x], &[1.0, 2.0]).is_err());
}

#[test]
fn gradient_symmetry_and_differences() {
    let e = disk();
    let g = grad_hamiltonian(&e, &VortexConfig::new([0.4, 0.0], [-0.3, 0.0], 1.0, 1.0)).unwrap();
    assert!(g[1].abs() <= 1e-10 && g[3].abs() <= 1e-10);
    let check = |e: &dyn GreenFunction, cfgs: Vec<VortexConfig>| {
        let s = 1e-5;
        for cfg in cfgs {
            let a = grad_hamiltonian(e, &cfg).unwrap();
            let z = cfg.to_vec();
            for k in 0..4 {
                let mut zp = z;
                let mut zm = z;
                zp[k] += s;
                zm[k] -= s;
                let d = (hamiltonian(e, &cfg.with_points(&zp)).unwrap()
                    - hamiltonian(e, &cfg.with_points(&zm)).unwrap())
                    / (2.0 * s);
                let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!((a[k] - d).abs() <= 1e-5 * scale, "{k}: {} vs {d}", a[k]);
            }
        }
    };
    let pts = points(23, 20, |p| p[0].hypot(p[1]) < 0.9, [1.0, 1.0]);
    check(&e, pts.chunks(2).map(|w| VortexConfig::new(w[0], w[1], 1.5, 1.0)).collect());
    let pts = points(29, 8, |p| in_ellipse(p, 1.5, 1.0, 0.85), [1.5, 1.0]);
    check(ellipse65(), pts.chunks(2).map(|w| VortexConfig::new(w[0], w[1], 2.0, 1.0)).collect());
}

#[test]
fn disk_search_is_gauge_fixed_maximum() {
    let e = disk();
    let opts = SearchOptions { starts: 16, seed: 3, ..Default::default() };
    let found = find_critical_points(&e, 1.0, 1.0, &opts).unwrap().require_any().unwrap();
    let cp = found.iter().find(|c| c.classification == Classification::Maximum).expect("maximum");
    assert!(cp.config.xi1[1] == 0.0 && cp.config.xi1[0] > 0.0);
    assert!((cp.config.xi1[0] + cp.config.xi2[0]).abs() < 1e-6 && cp.config.xi2[1].abs() < 1e-6);
    // the full Hessian carries the rotational null direction
    assert!(cp.eigenvalues.iter().any(|l| l.abs() <= 1e-4));
    assert_eq!(classify_eigenvalues(&cp.eigenvalues), Classification::Degenerate);
    assert!(cp.gauge_eigenvalues.as_ref().unwrap().iter().all(|l| *l < 0.0));
    // 1-D oracle along the diameter
    let best = (1..10000)
        .map(|i| i as f64 * 1e-4)
        .max_by(|a, b| {
            images_hamiltonian([*a, 0.0], [-a, 0.0], 1.0).total_cmp(&images_hamiltonian([*b, 0.0], [-b, 0.0], 1.0))
        })
        .unwrap();
    assert!((cp.config.xi1[0] - best).abs() <= 1e-4);
}

#[test]
fn ellipse_search_finds_major_axis_pair() {
    let e = ellipse65();
    let opts = SearchOptions { starts: 8, seed: 11, ..Default::default() };
    let search = find_critical_points(e, 1.0, 1.0, &opts).unwrap();
    let eta = search.eta;
    let found = search.require_any().unwrap();
    let h1 = |t: f64| hamiltonian(e, &VortexConfig::new([t, 0.0], [-t, 0.0], 1.0, 1.0)).unwrap();
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut t = 0.5;
    while t < 0.9 {
        let v = h1(t);
        if v > best.0 {
            best = (v, t);
        }
        t += 1e-4;
    }
    let pair =
        found.iter().find(|c| c.config.xi1[1].abs() < 1e-6 && c.config.xi2[1].abs() < 1e-6).expect("major-axis pair");
    assert!((pair.config.xi1[0].abs() - best.1).abs() <= 2e-4);
    assert!((pair.config.xi1[0] + pair.config.xi2[0]).abs() <= 1e-6);
    for cp in &found {
        assert!(cp.converged());
        assert!(cp.margin >= eta);
        let swapped = VortexConfig::new(cp.config.xi2, cp.config.xi1, 1.0, 1.0);
        let g = grad_hamiltonian(e, &swapped).unwrap();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n <= crit_tol(cp.value));
    }
}

#[test]
fn search_is_deterministic_across_execution_modes() {
    let e = ellipse65();
    let mk = |exec| SearchOptions { starts: 3, seed: 5, exec, ..Default::default() };
    let a = find_critical_points(e, 2.0, 1.0, &mk(Exec::Parallel)).unwrap();
    let b = find_critical_points(e, 2.0, 1.0, &mk(Exec::Sequential)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seeds_respect_margin_and_seed() {
    let shape = DomainShape::ellipse(1.5, 1.0);
    let a = seed_configs(&shape, 32, 1, 0.05);
    assert_eq!(a, seed_configs(&shape, 32, 1, 0.05));
    assert_ne!(a, seed_configs(&shape, 32, 2, 0.05));
    for z in a {
        let cfg = VortexConfig::new([z[0], z[1]], [z[2], z[3]], 1.0, 1.0);
        assert!(cfg.margin(&shape) > 0.1);
    }
}

#[test]
fn synthetic_quadratics_are_classified_exactly() {
    let q = DMatrix::from_row_slice(
        4,
        4,
        &[0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5, 0.5],
    );
    for (diag, want) in [
        ([-1.0, -2.0, -3.0, -0.5], Classification::Maximum),
        ([1.0, 2.0, 3.0, 0.5], Classification::Minimum),
        ([-1.0, 2.0, -3.0, 0.5], Classification::Saddle),
        ([-1.0, -2.0, -3.0, 0.0], Classification::Degenerate),
    ] {
        let a = &q * DMatrix::from_diagonal(&DVector::from_row_slice(&diag)) * q.transpose();
        let grad =
            |z: &[f64]| -> Result<Vec<f64>, ()> { Ok((&a * DVector::from_row_slice(z)).iter().copied().collect()) };
        let h = fd_hessian(grad, &[0.1, -0.2, 0.3, 0.05], 1e-3).unwrap();
        let (eigs, c) = classify_hessian(&h);
        assert_eq!(c, want);
        let mut sorted = diag.to_vec();
        sorted.sort_by(f64::total_cmp);
        for (x, y) in eigs.iter().zip(&sorted) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn sweep_moves_the_weak_vortex_to_the_boundary() {
    let e = ellipse65();
    let r = sweep_gamma(e, &[8.0, 32.0], 1.0, ([0.05, 0.0], [-1.35, 0.0]), &SweepOptions::default()).unwrap();
    assert!(r.lost.is_none());
    assert!(!r.mirrored);
    assert!(r.records[1].dist_boundary < r.records[0].dist_boundary);
    assert!(r.records[1].dist_argmax < r.records[0].dist_argmax);
    assert!(sweep_gamma(e, &[1.0, 4.0, 2.0], 1.0, ([0.5, 0.0], [-0.5, 0.0]), &SweepOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_gamma_is_swap_symmetric(a in (-0.7f64..0.7, -0.7f64..0.7), b in (-0.7f64..0.7, -0.7f64..0.7)) {
        let (x, y) = ([a.0, a.1], [b.0, b.1]);
        prop_assume!((x[0] - y[0]).hypot(x[1] - y[1]) > 1e-6);
        let e = disk();
        let u = hamiltonian(&e, &VortexConfig::new(x, y, 1.0, 1.0)).unwrap();
        let v = hamiltonian(&e, &VortexConfig::new(y, x, 1.0, 1.0)).unwrap();
        prop_assert!((u - v).abs() <= 1e-14 * (1.0 + u.abs()));
    }

    #[test]
    fn mirrored_pair_rescales_the_hamiltonian(a in (-0.7f64..0.7, -0.7f64..0.7), b in (-0.7f64..0.7, -0.7f64..0.7), g in 0.1f64..10.0) {
        let (x, y) = ([a.0, a.1], [b.0, b.1]);
        prop_assume!((x[0] - y[0]).hypot(x[1] - y[1]) > 1e-6);
        let e = disk();
        let cfg = VortexConfig::new(x, y, g, 1.0);
        let u = hamiltonian(&e, &cfg).unwrap();
        let v = hamiltonian(&e, &cfg.mirrored()).unwrap();
        prop_assert!((u - v / (g * g)).abs() <= 1e-12 * (1.0 + u.abs()));
    }
}
