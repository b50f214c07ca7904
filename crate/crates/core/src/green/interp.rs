//! Keys cubic convolution (a = −1/2) on uniform grids: C¹, exact for
//! quadratics, third-order accurate.

#[inline]
fn kernel(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        (1.5 * a - 2.5) * a * a + 1.0
    } else if a < 2.0 {
        ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0
    } else {
        0.0
    }
}

#[inline]
fn kernel_d(t: f64) -> f64 {
    let a = t.abs();
    let s = t.signum();
    if a <= 1.0 {
        s * (4.5 * a - 5.0) * a
    } else if a < 2.0 {
        s * ((-1.5 * a + 5.0) * a - 4.0)
    } else {
        0.0
    }
}

/// Base index and 4 weights (plus derivative weights) along one axis.
#[inline]
pub fn weights(x: f64, x0: f64, h: f64, n: usize) -> (usize, [f64; 4], [f64; 4]) {
    let u = (x - x0) / h;
    let i = (u.floor() as isize).clamp(1, n as isize - 3) as usize;
    let f = u - i as f64;
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for m in 0..4 {
        let t = f - (m as f64 - 1.0);
        w[m] = kernel(t);
        dw[m] = kernel_d(t) / h;
    }
    (i - 1, w, dw)
}

/// Value and gradient of the interpolant of `v` (row-major, nx × ny).
#[allow(clippy::too_many_arguments)]
pub fn eval(v: &[f64], nx: usize, ny: usize, x0: f64, y0: f64, hx: f64, hy: f64, p: [f64; 2]) -> (f64, [f64; 2]) {
    let (i0, wx, dwx) = weights(p[0], x0, hx, nx);
    let (j0, wy, dwy) = weights(p[1], y0, hy, ny);
    let (mut val, mut gx, mut gy) = (0.0, 0.0, 0.0);
    for b in 0..4 {
        let row = &v[(j0 + b) * nx + i0..(j0 + b) * nx + i0 + 4];
        let (mut s, mut sd) = (0.0, 0.0);
        for a in 0..4 {
            s += wx[a] * row[a];
            sd += dwx[a] * row[a];
        }
        val += wy[b] * s;
        gx += wy[b] * sd;
        gy += dwy[b] * s;
    }
    (val, [gx, gy])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_quadratics() {
        let (nx, ny, h) = (12, 10, 0.1);
        let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * x - 0.3 * x * y + 0.7 * y * y;
        let v: Vec<f64> = (0..nx * ny).map(|k| f((k % nx) as f64 * h, (k / nx) as f64 * h)).collect();
        let p = [0.537, 0.412];
        let (val, g) = eval(&v, nx, ny, 0.0, 0.0, h, h, p);
        assert!((val - f(p[0], p[1])).abs() < 1e-13);
        assert!((g[0] - (2.0 + p[0] - 0.3 * p[1])).abs() < 1e-12);
        assert!((g[1] - (-1.0 - 0.3 * p[0] + 1.4 * p[1])).abs() < 1e-12);
    }
}
