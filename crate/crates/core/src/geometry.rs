//! Smooth bounded planar domains: membership, boundary parametrization,
//! projection onto the boundary, normals and curvature.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Point = [f64; 2];

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({x}, {y}) lies at distance {d} from the boundary, outside the tube of width {eps}")]
    OutsideTube { x: f64, y: f64, d: f64, eps: f64 },
    #[error("projection onto the boundary did not converge for point ({0}, {1})")]
    NoConvergence(f64, f64),
    #[error("point ({0}, {1}) is not inside the domain")]
    OutsideDomain(f64, f64),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
}

/// Radial function r(θ) = a0 + Σ_k (cos_k cos kθ + sin_k sin kθ), k starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigRadius {
    pub a0: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigRadius {
    /// Returns r, r', r'' at θ.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (mut r, mut r1, mut r2) = (self.a0, 0.0, 0.0);
        for (k, c) in self.cos.iter().enumerate() {
            let m = (k + 1) as f64;
            let (s, co) = (m * t).sin_cos();
            r += c * co;
            r1 -= c * m * s;
            r2 -= c * m * m * co;
        }
        for (k, c) in self.sin.iter().enumerate() {
            let m = (k + 1) as f64;
            let (s, co) = (m * t).sin_cos();
            r += c * s;
            r1 += c * m * co;
            r2 -= c * m * m * s;
        }
        (r, r1, r2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainShape {
    Disk {
        #[serde(default)]
        center: Point,
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: Point,
        a: f64,
        b: f64,
    },
    Star {
        #[serde(default)]
        center: Point,
        radius: TrigRadius,
    },
}

/// Geometry of a point near the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryData {
    pub x: Point,
    pub d: f64,
    pub p: Point,
    /// Boundary parameter of `p`.
    pub theta: f64,
    pub nu: Point,
    pub kappa: f64,
    pub reflection: Point,
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub fn wrap_angle(t: f64) -> f64 {
    t.rem_euclid(2.0 * PI)
}

/// Number of boundary samples used for global searches (projection seeds,
/// bounding boxes, convexity certification).
const SCAN: usize = 512;

impl DomainShape {
    pub fn unit_disk() -> Self {
        DomainShape::Disk { center: [0.0, 0.0], radius: 1.0 }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        DomainShape::Ellipse { center: [0.0, 0.0], a, b }
    }

    pub fn center(&self) -> Point {
        match self {
            DomainShape::Disk { center, .. }
            | DomainShape::Ellipse { center, .. }
            | DomainShape::Star { center, .. } => *center,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = match self {
            DomainShape::Disk { radius, center } => {
                *radius > 0.0 && radius.is_finite() && center.iter().all(|c| c.is_finite())
            }
            DomainShape::Ellipse { a, b, center } => {
                *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite() && center.iter().all(|c| c.is_finite())
            }
            DomainShape::Star { radius, .. } => {
                (0..4 * SCAN).all(|i| radius.eval(2.0 * PI * i as f64 / (4 * SCAN) as f64).0 > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidShape(format!("{self:?}")))
        }
    }

    /// Boundary point at parameter θ and its first two θ-derivatives.
    pub fn param(&self, t: f64) -> (Point, Point, Point) {
        let (s, c) = t.sin_cos();
        match self {
            DomainShape::Disk { center, radius } => (
                [center[0] + radius * c, center[1] + radius * s],
                [-radius * s, radius * c],
                [-radius * c, -radius * s],
            ),
            DomainShape::Ellipse { center, a, b } => {
                ([center[0] + a * c, center[1] + b * s], [-a * s, b * c], [-a * c, -b * s])
            }
            DomainShape::Star { center, radius } => {
                let (r, r1, r2) = radius.eval(t);
                (
                    [center[0] + r * c, center[1] + r * s],
                    [r1 * c - r * s, r1 * s + r * c],
                    [r2 * c - 2.0 * r1 * s - r * c, r2 * s + 2.0 * r1 * c - r * s],
                )
            }
        }
    }

    pub fn boundary_point(&self, t: f64) -> Point {
        self.param(t).0
    }

    /// Outward unit normal at parameter θ (the parametrization is counterclockwise).
    pub fn normal(&self, t: f64) -> Point {
        let (_, d1, _) = self.param(t);
        let n = d1[0].hypot(d1[1]);
        [d1[1] / n, -d1[0] / n]
    }

    /// Signed curvature, positive where the boundary is convex.
    pub fn curvature(&self, t: f64) -> f64 {
        let (_, d1, d2) = self.param(t);
        let n = d1[0].hypot(d1[1]);
        (d1[0] * d2[1] - d1[1] * d2[0]) / (n * n * n)
    }

    /// Level function: negative inside, zero on the boundary, positive outside.
    pub fn level(&self, x: Point) -> f64 {
        match self {
            DomainShape::Disk { center, radius } => dist(x, *center) - radius,
            DomainShape::Ellipse { center, a, b } => {
                let u = (x[0] - center[0]) / a;
                let v = (x[1] - center[1]) / b;
                u * u + v * v - 1.0
            }
            DomainShape::Star { center, radius } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                dx.hypot(dy) - radius.eval(dy.atan2(dx)).0
            }
        }
    }

    /// Squared gauge ρ²(x) (0 at the centre, 1 on the boundary) and its
    /// gradient. Smooth away from the centre, unlike the distance function.
    pub fn gauge_sq(&self, x: Point) -> (f64, Point) {
        let c = self.center();
        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
        match self {
            DomainShape::Disk { radius, .. } => {
                let r2 = radius * radius;
                ((dx * dx + dy * dy) / r2, [2.0 * dx / r2, 2.0 * dy / r2])
            }
            DomainShape::Ellipse { a, b, .. } => {
                let (a2, b2) = (a * a, b * b);
                (dx * dx / a2 + dy * dy / b2, [2.0 * dx / a2, 2.0 * dy / b2])
            }
            DomainShape::Star { radius, .. } => {
                let (r, r1, _) = radius.eval(dy.atan2(dx));
                let (r2, r3) = (r * r, r * r * r);
                ((dx * dx + dy * dy) / r2, [2.0 * dx / r2 + 2.0 * r1 * dy / r3, 2.0 * dy / r2 - 2.0 * r1 * dx / r3])
            }
        }
    }

    pub fn contains(&self, x: Point) -> bool {
        self.level(x) < 0.0
    }

    pub fn area(&self) -> f64 {
        match self {
            DomainShape::Disk { radius, .. } => PI * radius * radius,
            DomainShape::Ellipse { a, b, .. } => PI * a * b,
            DomainShape::Star { radius, .. } => {
                let n = 4 * SCAN;
                let s: f64 = (0..n).map(|i| radius.eval(2.0 * PI * i as f64 / n as f64).0.powi(2)).sum();
                0.5 * s * 2.0 * PI / n as f64
            }
        }
    }

    /// Axis-aligned bounding box `[xmin, xmax, ymin, ymax]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        match self {
            DomainShape::Disk { center, radius } => {
                [center[0] - radius, center[0] + radius, center[1] - radius, center[1] + radius]
            }
            DomainShape::Ellipse { center, a, b } => [center[0] - a, center[0] + a, center[1] - b, center[1] + b],
            DomainShape::Star { .. } => {
                let mut bb = [f64::MAX, f64::MIN, f64::MAX, f64::MIN];
                let n = 8 * SCAN;
                for i in 0..n {
                    let p = self.boundary_point(2.0 * PI * i as f64 / n as f64);
                    bb[0] = bb[0].min(p[0]);
                    bb[1] = bb[1].max(p[0]);
                    bb[2] = bb[2].min(p[1]);
                    bb[3] = bb[3].max(p[1]);
                }
                // sampling can miss the extreme by O(1/n²); pad a little
                let pad = 1e-6 * (bb[1] - bb[0]).max(bb[3] - bb[2]);
                [bb[0] - pad, bb[1] + pad, bb[2] - pad, bb[3] + pad]
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainShape::Disk { radius, .. } => 2.0 * radius,
            DomainShape::Ellipse { a, b, .. } => 2.0 * a.max(*b),
            DomainShape::Star { .. } => {
                let n = SCAN;
                let pts: Vec<Point> = (0..n).map(|i| self.boundary_point(2.0 * PI * i as f64 / n as f64)).collect();
                let mut best = 0.0f64;
                for (i, p) in pts.iter().enumerate() {
                    for q in &pts[i + 1..] {
                        best = best.max(dist(*p, *q));
                    }
                }
                best
            }
        }
    }

    /// Radius of the largest inscribed disk.
    pub fn inradius(&self) -> f64 {
        match self {
            DomainShape::Disk { radius, .. } => *radius,
            DomainShape::Ellipse { a, b, .. } => a.min(*b),
            DomainShape::Star { .. } => {
                // coarse lattice search followed by compass refinement of d(x)
                let bb = self.bounding_box();
                let m = 24;
                let mut best = (self.center(), 0.0);
                for i in 1..m {
                    for j in 1..m {
                        let x = [
                            bb[0] + (bb[1] - bb[0]) * i as f64 / m as f64,
                            bb[2] + (bb[3] - bb[2]) * j as f64 / m as f64,
                        ];
                        if self.contains(x) {
                            let d = self.distance_to_boundary(x);
                            if d > best.1 {
                                best = (x, d);
                            }
                        }
                    }
                }
                let mut step = (bb[1] - bb[0]) / m as f64;
                while step > 1e-10 * (bb[1] - bb[0]) {
                    let mut moved = false;
                    for dir in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
                        let x = [best.0[0] + step * dir[0], best.0[1] + step * dir[1]];
                        if self.contains(x) {
                            let d = self.distance_to_boundary(x);
                            if d > best.1 {
                                best = (x, d);
                                moved = true;
                            }
                        }
                    }
                    if !moved {
                        step *= 0.5;
                    }
                }
                best.1
            }
        }
    }

    /// Tubular-neighbourhood width ε₀ used for boundary projections and image terms.
    pub fn tube_width(&self) -> f64 {
        0.2 * self.inradius()
    }

    /// Minimum of the sampled boundary curvature; `>= 0` certifies convexity.
    pub fn min_curvature(&self) -> f64 {
        (0..2 * SCAN).map(|i| self.curvature(2.0 * PI * i as f64 / (2 * SCAN) as f64)).fold(f64::INFINITY, f64::min)
    }

    pub fn is_convex(&self) -> bool {
        self.min_curvature() >= 0.0
    }

    /// Boundary parameter of the closest boundary point, by a global scan
    /// followed by Newton on (P(θ) − x)·P'(θ) = 0.
    pub fn project(&self, x: Point) -> Result<f64, GeometryError> {
        if let DomainShape::Disk { center, .. } = self {
            let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
            if dx == 0.0 && dy == 0.0 {
                return Ok(0.0);
            }
            return Ok(wrap_angle(dy.atan2(dx)));
        }
        let mut t0 = 0.0;
        let mut best = f64::INFINITY;
        for i in 0..SCAN {
            let t = 2.0 * PI * i as f64 / SCAN as f64;
            let d = dist(self.boundary_point(t), x);
            if d < best {
                best = d;
                t0 = t;
            }
        }
        // Newton from the best sample; bracketed by the neighbouring samples
        let dt = 2.0 * PI / SCAN as f64;
        let (lo, hi) = (t0 - dt, t0 + dt);
        let g = |t: f64| {
            let (p, d1, d2) = self.param(t);
            let r = [p[0] - x[0], p[1] - x[1]];
            (r[0] * d1[0] + r[1] * d1[1], d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1])
        };
        let mut t = t0;
        for _ in 0..100 {
            let (f, df) = g(t);
            let mut tn = if df > 0.0 { t - f / df } else { f64::NAN };
            if !(tn > lo && tn < hi) {
                // fall back to bisection on the sign of f within the bracket
                let (mut a, mut b) = (lo, hi);
                let fa = g(a).0;
                if fa * g(b).0 > 0.0 {
                    return Err(GeometryError::NoConvergence(x[0], x[1]));
                }
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if g(m).0 * fa > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                tn = 0.5 * (a + b);
            }
            let step = (tn - t).abs();
            t = tn;
            if step <= 1e-14 * (1.0 + t.abs()) {
                return Ok(wrap_angle(t));
            }
        }
        if g(t).0.abs() <= 1e-12 * self.diameter() {
            Ok(wrap_angle(t))
        } else {
            Err(GeometryError::NoConvergence(x[0], x[1]))
        }
    }

    /// Euclidean distance to the boundary (valid for any interior point).
    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        match self {
            DomainShape::Disk { center, radius } => (radius - dist(x, *center)).abs(),
            _ => match self.project(x) {
                Ok(t) => dist(self.boundary_point(t), x),
                Err(_) => f64::NAN,
            },
        }
    }

    /// Boundary data with an explicit tube width.
    pub fn boundary_data_within(&self, x: Point, eps: f64) -> Result<BoundaryData, GeometryError> {
        if !self.contains(x) {
            return Err(GeometryError::OutsideDomain(x[0], x[1]));
        }
        let theta = self.project(x)?;
        let p = self.boundary_point(theta);
        let d = dist(p, x);
        if d > eps {
            return Err(GeometryError::OutsideTube { x: x[0], y: x[1], d, eps });
        }
        let nu = self.normal(theta);
        Ok(BoundaryData {
            x,
            d,
            p,
            theta,
            nu,
            kappa: self.curvature(theta),
            reflection: [x[0] + 2.0 * d * nu[0], x[1] + 2.0 * d * nu[1]],
        })
    }

    pub fn boundary_data(&self, x: Point) -> Result<BoundaryData, GeometryError> {
        self.boundary_data_within(x, self.tube_width())
    }

    /// Fraction `s ∈ (0, 1]` along the segment a → b at which the boundary is
    /// crossed; `a` must be inside and `b` outside.
    pub fn crossing(&self, a: Point, b: Point) -> f64 {
        let at = |s: f64| self.level([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let (mut flo, mut fhi) = (at(lo), at(hi));
        debug_assert!(flo < 0.0 && fhi >= 0.0);
        // Illinois-modified regula falsi
        let mut side = 0i32;
        for _ in 0..100 {
            let s = (lo * fhi - hi * flo) / (fhi - flo);
            let s = if s.is_finite() && s > lo && s < hi { s } else { 0.5 * (lo + hi) };
            let fs = at(s);
            if fs < 0.0 {
                lo = s;
                flo = fs;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = s;
                fhi = fs;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
            if hi - lo <= 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_curvature_closed_form() {
        let e = DomainShape::ellipse(2.0, 1.0);
        for i in 0..16 {
            let t = i as f64 * 0.4;
            let k = 2.0 / (4.0 * t.sin().powi(2) + t.cos().powi(2)).powf(1.5);
            assert!((e.curvature(t) - k).abs() < 1e-13);
        }
    }

    #[test]
    fn star_projection_is_orthogonal() {
        let s = DomainShape::Star {
            center: [0.1, -0.2],
            radius: TrigRadius { a0: 1.0, cos: vec![0.0, 0.0, 0.05], sin: vec![0.0, 0.03] },
        };
        s.validate().unwrap();
        let eps = s.tube_width();
        assert!(eps > 0.15 && eps < 0.2);
        for i in 0..40 {
            let t = i as f64 * 0.157;
            let (p, d1, _) = s.param(t);
            let n = s.normal(t);
            let x = [p[0] - 0.05 * n[0], p[1] - 0.05 * n[1]];
            let b = s.boundary_data_within(x, eps).unwrap();
            assert!((b.d - 0.05).abs() < 1e-10, "{}", b.d);
            let r = [b.p[0] - x[0], b.p[1] - x[1]];
            assert!((r[0] * d1[0] + r[1] * d1[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn crossing_hits_circle() {
        let d = DomainShape::unit_disk();
        let s = d.crossing([0.5, 0.0], [1.5, 0.0]);
        assert!((s - 0.5).abs() < 1e-14);
    }
}
