//! Gauss–Legendre rules and polar quadrature for integrands concentrated
//! around a point.

use crate::geometry::Point;
use crate::par::{self, Exec};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

/// Resolution of [`polar_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarRule {
    /// Panel width in t, where r = scale·sinh(t); each panel uses 8 Gauss points.
    pub panel: f64,
    /// Trapezoid points in the angle.
    pub angles: usize,
    pub exec: Exec,
}

impl Default for PolarRule {
    fn default() -> Self {
        PolarRule { panel: 0.25, angles: 64, exec: Exec::default() }
    }
}

/// ∫ f over the disc B_radius(center). The radial map r = scale·sinh(t)
/// clusters nodes on the length scale `scale`.
pub fn polar_integral(
    center: Point,
    radius: f64,
    scale: f64,
    rule: PolarRule,
    f: impl Fn(Point) -> f64 + Sync + Send,
) -> f64 {
    let (gx, gw) = gl8();
    let tmax = (radius / scale).asinh();
    let panels = ((tmax / rule.panel).ceil() as usize).max(1);
    let dt = tmax / panels as f64;
    let m = rule.angles.max(4);
    let dth = 2.0 * PI / m as f64;
    let per_ring = |k: usize| {
        let (p, q) = (k / 8, k % 8);
        let t = (p as f64 + 0.5 * (gx[q] + 1.0)) * dt;
        let r = scale * t.sinh();
        let jac = scale * t.cosh() * r * 0.5 * dt * gw[q];
        let ring: f64 = (0..m)
            .map(|j| {
                let th = (j as f64 + 0.5) * dth;
                f([center[0] + r * th.cos(), center[1] + r * th.sin()])
            })
            .sum();
        ring * dth * jac
    };
    par::sum_indices_with(rule.exec, panels * 8, per_ring)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rules_integrate_polynomials() {
        for n in [1, 2, 5, 8, 11] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} {q}");
            }
        }
    }

    #[test]
    fn polar_area() {
        let a = polar_integral([0.3, -0.2], 0.7, 0.01, PolarRule::default(), |_| 1.0);
        assert!((a - PI * 0.49).abs() < 1e-12, "{a}");
    }
}
