//! Text format for grid fields.
//!
//! ```text
//! # config <sha256>          optional comment lines start with '#'
//! nx ny x0 y0 hx hy
//! x x_0 x_1 ... x_{nx-1}     only for non-uniform axes
//! y y_0 y_1 ... y_{ny-1}     only for non-uniform axes
//! v_00 v_10 ... v_{nx-1,0}
//! ...                        row-major, j outer; exterior nodes are `nan`
//! ```
//!
//! On non-uniform grids hx, hy are the mean spacings and the `x`/`y` lines
//! carry the node coordinates. Values are written in shortest round-trip form,
//! so reading a written file reproduces every finite entry bit for bit.

use crate::geometry::DomainShape;
use crate::grid::{Axis, AxisMap, Grid, GridField};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("format error on line {line}: {message}")]
    Format { line: usize, message: String },
}

fn fmt_err(line: usize, message: impl Into<String>) -> FieldError {
    FieldError::Format { line, message: message.into() }
}

/// Serializes a field; `comment` lines are prefixed with '#'.
pub fn format_field(f: &GridField, comments: &[String]) -> String {
    let g = &f.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let mut s = String::new();
    for c in comments {
        s.push_str(&format!("# {c}\n"));
    }
    let mean = |a: &Axis| (a.coords[a.len() - 1] - a.coords[0]) / (a.len() - 1) as f64;
    let step = |a: &Axis| match a.map {
        AxisMap::Uniform { h, .. } => h,
        _ => mean(a),
    };
    s.push_str(&format!("{nx} {ny} {:e} {:e} {:e} {:e}\n", g.x.coords[0], g.y.coords[0], step(&g.x), step(&g.y)));
    if !(g.x.is_uniform() && g.y.is_uniform()) {
        for (tag, a) in [("x", &g.x), ("y", &g.y)] {
            s.push_str(tag);
            for c in &a.coords {
                s.push_str(&format!(" {c:e}"));
            }
            s.push('\n');
        }
    }
    for j in 0..ny {
        let row: Vec<String> = (0..nx)
            .map(|i| {
                let k = g.node(i, j);
                if g.is_interior(k) {
                    format!("{:e}", f.values[k])
                } else {
                    "nan".to_string()
                }
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Parses a field. With a shape the grid is rebuilt with boundary cut data and
/// its mask must agree with the `nan` pattern; without one the mask is taken
/// from the file.
pub fn parse_field(text: &str, shape: Option<&DomainShape>) -> Result<GridField, FieldError> {
    parse_lines(text.lines().map(|l| Ok(l.to_string())), shape)
}

fn parse_lines(
    lines: impl Iterator<Item = std::io::Result<String>>,
    shape: Option<&DomainShape>,
) -> Result<GridField, FieldError> {
    let mut lines = lines.enumerate().map(|(i, l)| (i + 1, l));
    let mut next_content = || -> Result<Option<(usize, String)>, FieldError> {
        for (no, l) in lines.by_ref() {
            let l = l.map_err(|e| fmt_err(no, e.to_string()))?;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(Some((no, t.to_string())));
            }
        }
        Ok(None)
    };
    let (hline, header) = next_content()?.ok_or_else(|| fmt_err(1, "missing header"))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 6 {
        return Err(fmt_err(hline, format!("header needs 6 entries, found {}", tok.len())));
    }
    let int = |t: &str| t.parse::<usize>().map_err(|e| fmt_err(hline, format!("{t:?}: {e}")));
    let num = |t: &str| t.parse::<f64>().map_err(|e| fmt_err(hline, format!("{t:?}: {e}")));
    let (nx, ny) = (int(tok[0])?, int(tok[1])?);
    let (x0, y0, hx, hy) = (num(tok[2])?, num(tok[3])?, num(tok[4])?, num(tok[5])?);
    if nx < 3 || ny < 3 {
        return Err(fmt_err(hline, "grid needs at least 3 nodes per axis"));
    }
    let mut axes: [Option<Vec<f64>>; 2] = [None, None];
    let mut values = Vec::with_capacity(nx * ny);
    let mut last_line = hline;
    while let Some((no, l)) = next_content()? {
        last_line = no;
        let tag = l.as_bytes()[0];
        if values.is_empty() && (tag == b'x' || tag == b'y') {
            let idx = usize::from(tag == b'y');
            let c: Vec<f64> = l[1..]
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| fmt_err(no, format!("{t:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            let want = if idx == 0 { nx } else { ny };
            if c.len() != want || c.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
                return Err(fmt_err(no, format!("axis line needs {want} increasing coordinates")));
            }
            axes[idx] = Some(c);
            continue;
        }
        for t in l.split_whitespace() {
            let v = if t.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                t.parse::<f64>().map_err(|e| fmt_err(no, format!("{t:?}: {e}")))?
            };
            values.push(v);
        }
    }
    if values.len() != nx * ny {
        return Err(fmt_err(last_line, format!("header announces {} values, payload has {}", nx * ny, values.len())));
    }
    let [ax, ay] = axes;
    let axis = |c: Option<Vec<f64>>, o: f64, h: f64, n: usize| match c {
        Some(coords) => Axis { map: AxisMap::Explicit, coords },
        None => Axis::uniform(o, h, n),
    };
    let x = axis(ax, x0, hx, nx);
    let y = axis(ay, y0, hy, ny);
    let mask: Vec<bool> = values.iter().map(|v| !v.is_nan()).collect();
    let grid = match shape {
        Some(s) => {
            let g = Grid::from_axes(x, y, Some(s.clone()), None);
            if g.mask() != mask.as_slice() {
                return Err(fmt_err(hline, "exterior pattern does not match the domain"));
            }
            g
        }
        None => {
            let g = Grid::from_axes(x, y, None, Some(mask.clone()));
            if g.mask() != mask.as_slice() {
                return Err(fmt_err(hline, "finite values on the outer frame"));
            }
            g
        }
    };
    let values = values.into_iter().map(|v| if v.is_nan() { 0.0 } else { v }).collect();
    Ok(GridField { grid: Arc::new(grid), values })
}

/// Writes atomically (temporary file in the target directory, then rename).
pub fn write_field(f: &GridField, path: &Path, comments: &[String]) -> Result<(), FieldError> {
    super::write_atomic(path, format_field(f, comments).as_bytes())
        .map_err(|source| FieldError::Io { path: path.into(), source })
}

pub fn read_field(path: &Path, shape: Option<&DomainShape>) -> Result<GridField, FieldError> {
    let file = std::fs::File::open(path).map_err(|source| FieldError::Io { path: path.into(), source })?;
    parse_lines(BufReader::new(file).lines(), shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_mismatch_is_a_format_error() {
        let text = "3 3 0 0 1 1\nnan nan nan\nnan 1 nan\nnan nan\n";
        assert!(matches!(parse_field(text, None), Err(FieldError::Format { .. })));
    }

    #[test]
    fn exterior_nodes_are_nan_and_restored_as_masked() {
        let g = Arc::new(Grid::uniform(&DomainShape::unit_disk(), 17));
        let f = GridField::from_fn(g.clone(), |p| 1.0 - p[0] * p[0] - p[1] * p[1]);
        let text = format_field(&f, &["config abc".into()]);
        assert!(text.starts_with("# config abc\n"));
        assert!(text.lines().nth(2).unwrap().split_whitespace().all(|t| t == "nan"));
        let back = parse_field(&text, Some(&DomainShape::unit_disk())).unwrap();
        assert_eq!(back.grid.mask(), g.mask());
        assert_eq!(back.values, f.values);
        let bare = parse_field(&text, None).unwrap();
        assert_eq!(bare.grid.mask(), g.mask());
    }
}
