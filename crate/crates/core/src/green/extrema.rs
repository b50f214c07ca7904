//! Extrema of the Robin function and of the boundary flux |∂νG(x0, ·)|.

use super::{GreenFunction, GreenResult};
use crate::geometry::{wrap_angle, Point};
use crate::par::{self, Exec};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative tolerance under which two local flux minima count as tied.
pub const TIE_TOL: f64 = 1e-4;

/// Maximum point of the Robin function: a lattice scan over roughly
/// `candidates` interior points followed by damped Newton on ∇h.
pub fn robin_argmax<E: GreenFunction + ?Sized>(e: &E, candidates: usize, exec: Exec) -> GreenResult<Point> {
    let shape = e.shape();
    let bb = shape.bounding_box();
    let frac = shape.area() / ((bb[1] - bb[0]) * (bb[3] - bb[2]));
    let m = ((candidates.max(4) as f64 / frac).sqrt().ceil() as usize).max(3);
    let margin = 0.02 * shape.inradius();
    let pts: Vec<Point> = (0..m * m)
        .map(|k| {
            let (i, j) = (k % m, k / m);
            [
                bb[0] + (i as f64 + 0.5) * (bb[1] - bb[0]) / m as f64,
                bb[2] + (j as f64 + 0.5) * (bb[3] - bb[2]) / m as f64,
            ]
        })
        .filter(|p| shape.contains(*p) && shape.distance_to_boundary(*p) > margin)
        .collect();
    let vals = par::map_indices_with(exec, pts.len(), |k| e.robin(pts[k]));
    let mut best = (f64::NEG_INFINITY, shape.center());
    for (p, v) in pts.iter().zip(vals) {
        let v = v?;
        if v > best.0 {
            best = (v, *p);
        }
    }
    polish_robin_max(e, best.1)
}

fn polish_robin_max<E: GreenFunction + ?Sized>(e: &E, mut x: Point) -> GreenResult<Point> {
    let shape = e.shape();
    let s = 1e-4 * shape.diameter();
    let mut hx = e.robin(x)?;
    let mut g = e.grad_robin(x)?;
    for _ in 0..50 {
        let gn = g[0].hypot(g[1]);
        if gn <= 1e-10 * (1.0 + hx.abs()) {
            break;
        }
        let mut hess = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += s;
            xm[k] -= s;
            let (gp, gm) = (e.grad_robin(xp)?, e.grad_robin(xm)?);
            for i in 0..2 {
                hess[i][k] = (gp[i] - gm[i]) / (2.0 * s);
            }
        }
        let off = 0.5 * (hess[0][1] + hess[1][0]);
        let det = hess[0][0] * hess[1][1] - off * off;
        // Newton when the Hessian is negative definite, gradient ascent otherwise
        let mut step = if hess[0][0] < 0.0 && det > 0.0 {
            [-(hess[1][1] * g[0] - off * g[1]) / det, -(hess[0][0] * g[1] - off * g[0]) / det]
        } else {
            [s * g[0] / gn, s * g[1] / gn]
        };
        let cap = 0.25 * shape.distance_to_boundary(x);
        let len = step[0].hypot(step[1]);
        if len > cap {
            step = [step[0] * cap / len, step[1] * cap / len];
        }
        let mut accepted = false;
        let mut a = 1.0;
        for _ in 0..30 {
            let y = [x[0] + a * step[0], x[1] + a * step[1]];
            if shape.contains(y) {
                if let (Ok(hy), Ok(gy)) = (e.robin(y), e.grad_robin(y)) {
                    if hy >= hx || gy[0].hypot(gy[1]) < gn {
                        x = y;
                        hx = hy;
                        g = gy;
                        accepted = true;
                        break;
                    }
                }
            }
            a *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(x)
}

/// Local minimizers of θ ↦ |∂νG(x0, y(θ))| over the boundary parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxProfile {
    pub x0: Point,
    /// Global minimizers (ties within [`TIE_TOL`]) as (θ, |∂νG|).
    pub minimizers: Vec<(f64, f64)>,
    pub min_value: f64,
    pub max_value: f64,
    /// The profile is constant to within sampling noise.
    pub flat: bool,
}

impl FluxProfile {
    pub fn degenerate(&self) -> bool {
        self.flat || self.minimizers.len() > 1
    }

    /// Angular distance from θ to the nearest minimizer; `None` when flat.
    pub fn gap(&self, theta: f64) -> Option<f64> {
        if self.flat {
            return None;
        }
        self.minimizers.iter().map(|m| angle_gap(theta, m.0)).min_by(f64::total_cmp)
    }
}

/// Distance between two angles on the circle.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(2.0 * PI - d)
}

/// Scans `samples` boundary parameters and polishes every near-global local
/// minimum by golden-section search.
pub fn flux_profile<E: GreenFunction + ?Sized>(
    e: &E,
    x0: Point,
    samples: usize,
    exec: Exec,
) -> GreenResult<FluxProfile> {
    let n = samples.max(8);
    let dt = 2.0 * PI / n as f64;
    let flux = |t: f64| e.normal_derivative_green(x0, t).map(f64::abs);
    let vals =
        par::map_indices_with(exec, n, |i| flux(i as f64 * dt)).into_iter().collect::<GreenResult<Vec<f64>>>()?;
    let max_value = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_sample = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let flat = max_value - min_sample <= 1e-8 * max_value.max(f64::MIN_POSITIVE);
    if flat {
        return Ok(FluxProfile { x0, minimizers: Vec::new(), min_value: min_sample, max_value, flat });
    }
    let mut minima = Vec::new();
    for i in 0..n {
        let (l, r) = (vals[(i + n - 1) % n], vals[(i + 1) % n]);
        if vals[i] <= l && vals[i] < r && vals[i] <= min_sample * (1.0 + 10.0 * TIE_TOL) {
            minima.push(golden(&flux, (i as f64 - 1.0) * dt, (i as f64 + 1.0) * dt)?);
        }
    }
    let min_value = minima.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    minima.retain(|m| m.1 <= min_value * (1.0 + TIE_TOL));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for m in minima {
        if merged.iter().all(|q| angle_gap(q.0, m.0) > 2.0 * dt) {
            merged.push(m);
        }
    }
    Ok(FluxProfile { x0, minimizers: merged, min_value, max_value, flat })
}

fn golden(f: &impl Fn(f64) -> GreenResult<f64>, mut a: f64, mut b: f64) -> GreenResult<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((wrap_angle(t), f(t)?))
}
