//! Dirichlet Green's function G, its regular part H, the Robin function h,
//! their gradients and boundary normal derivatives.

mod disk;
mod extrema;
mod interp;
mod numeric;

pub use disk::DiskGreen;
pub use extrema::{angle_gap, flux_profile, robin_argmax, FluxProfile, TIE_TOL};
pub use numeric::NumericGreen;

use crate::geometry::{dist, DomainShape, GeometryError, Point};
use crate::linalg::SolverError;
use std::f64::consts::PI;

pub const INV_2PI: f64 = 0.5 / PI;

/// Smallest separation at which G is evaluated.
pub const COINCIDENCE_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GreenError {
    #[error("points ({0:?}) and ({1:?}) coincide")]
    CoincidentPoints(Point, Point),
    #[error("point {0:?} is outside the domain")]
    OutsideDomain(Point),
    #[error("point {0:?} is within {1:e} of the boundary")]
    TooCloseToBoundary(Point, f64),
    #[error("harmonic correction solve failed: {0}")]
    SolverFailure(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type GreenResult<T> = Result<T, GreenError>;

/// Singular part −(1/2π) log|x − y|.
#[inline]
pub fn singular(x: Point, y: Point) -> f64 {
    -INV_2PI * dist(x, y).ln()
}

/// ∇ₓ of the singular part.
#[inline]
pub fn grad_singular(x: Point, y: Point) -> Point {
    let d = [x[0] - y[0], x[1] - y[1]];
    let r2 = d[0] * d[0] + d[1] * d[1];
    [-INV_2PI * d[0] / r2, -INV_2PI * d[1] / r2]
}

/// Evaluator of G, H, h and derivatives on a fixed domain.
pub trait GreenFunction: Send + Sync {
    fn shape(&self) -> &DomainShape;

    /// Regular part H(x, y), symmetric in its arguments.
    fn regular_part(&self, x: Point, y: Point) -> GreenResult<f64>;

    /// ∇ₓH(x, y).
    fn grad_x_regular(&self, x: Point, y: Point) -> GreenResult<Point>;

    /// H(x, y) as a function of x for a fixed source y. Evaluators may answer
    /// this from the source-y correction alone, which is cheaper than the
    /// symmetric `regular_part` when sweeping x over a grid.
    fn regular_part_from_source(&self, x: Point, y: Point) -> GreenResult<f64> {
        self.regular_part(x, y)
    }

    fn robin(&self, x: Point) -> GreenResult<f64> {
        self.regular_part(x, x)
    }

    fn grad_robin(&self, x: Point) -> GreenResult<Point>;

    /// ∂νG(x0, y(θ)) with ν the outward normal at the boundary point y(θ).
    fn normal_derivative_green(&self, x0: Point, theta: f64) -> GreenResult<f64>;

    fn green(&self, x: Point, y: Point) -> GreenResult<f64> {
        check_pair(self.shape(), x, y)?;
        Ok(singular(x, y) + self.regular_part(x, y)?)
    }

    fn grad_x_green(&self, x: Point, y: Point) -> GreenResult<Point> {
        check_pair(self.shape(), x, y)?;
        let s = grad_singular(x, y);
        let r = self.grad_x_regular(x, y)?;
        Ok([s[0] + r[0], s[1] + r[1]])
    }
}

pub(crate) fn check_inside(shape: &DomainShape, x: Point) -> GreenResult<()> {
    if shape.contains(x) {
        Ok(())
    } else {
        Err(GreenError::OutsideDomain(x))
    }
}

fn check_pair(shape: &DomainShape, x: Point, y: Point) -> GreenResult<()> {
    check_inside(shape, x)?;
    check_inside(shape, y)?;
    if dist(x, y) < COINCIDENCE_TOL {
        return Err(GreenError::CoincidentPoints(x, y));
    }
    Ok(())
}

/// Closed form on disks, harmonic-correction solves on `n`-node grids otherwise.
pub fn evaluator_for(shape: &DomainShape, n: usize) -> GreenResult<Box<dyn GreenFunction>> {
    match shape {
        DomainShape::Disk { .. } => Ok(Box::new(DiskGreen::new(shape.clone())?)),
        _ => Ok(Box::new(NumericGreen::new(shape.clone(), n)?)),
    }
}

/// As [`evaluator_for`], persisting numeric corrections under `store` when given.
pub fn evaluator_with_store(
    shape: &DomainShape,
    n: usize,
    store: Option<&std::path::Path>,
) -> GreenResult<Box<dyn GreenFunction>> {
    match (shape, store) {
        (DomainShape::Disk { .. }, _) | (_, None) => evaluator_for(shape, n),
        (_, Some(dir)) => Ok(Box::new(NumericGreen::new(shape.clone(), n)?.with_store(dir))),
    }
}
