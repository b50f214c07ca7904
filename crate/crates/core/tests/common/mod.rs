#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;
use vortexlab::geometry::DomainShape;
use vortexlab::green::NumericGreen;

/// Unit-disk Green's function by the method of images.
pub fn images_green(x: [f64; 2], y: [f64; 2]) -> f64 {
    let ny = y[0].hypot(y[1]);
    let dxy = (x[0] - y[0]).hypot(x[1] - y[1]);
    if ny == 0.0 {
        return -(x[0].hypot(x[1])).ln() / (2.0 * PI);
    }
    let ys = [y[0] / (ny * ny), y[1] / (ny * ny)];
    let dxs = (x[0] - ys[0]).hypot(x[1] - ys[1]);
    (dxs * ny / dxy).ln() / (2.0 * PI)
}

/// Unit-disk Robin function (1/2π) log(1 − |x|²).
pub fn images_robin(x: [f64; 2]) -> f64 {
    (1.0 - x[0] * x[0] - x[1] * x[1]).ln() / (2.0 * PI)
}

/// Deterministic pseudo-random points accepted by `inside`, drawn from the
/// box [−sx, sx] × [−sy, sy].
pub fn points(seed: u64, count: usize, inside: impl Fn([f64; 2]) -> bool, scale: [f64; 2]) -> Vec<[f64; 2]> {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut out = Vec::new();
    while out.len() < count {
        let p = [scale[0] * (2.0 * next() - 1.0), scale[1] * (2.0 * next() - 1.0)];
        if inside(p) {
            out.push(p);
        }
    }
    out
}

pub fn in_ellipse(p: [f64; 2], a: f64, b: f64, r: f64) -> bool {
    (p[0] / a).powi(2) + (p[1] / b).powi(2) < r * r
}

/// Shared n = 65 evaluator on the 1.5 × 1 ellipse.
pub fn ellipse65() -> &'static NumericGreen {
    static G: OnceLock<NumericGreen> = OnceLock::new();
    G.get_or_init(|| NumericGreen::new(DomainShape::ellipse(1.5, 1.0), 65).unwrap())
}
