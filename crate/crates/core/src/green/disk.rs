//! Method-of-images Green's function of a disk.

use super::{check_inside, GreenError, GreenFunction, GreenResult, INV_2PI};
use crate::geometry::{DomainShape, GeometryError, Point};

#[derive(Debug, Clone)]
pub struct DiskGreen {
    shape: DomainShape,
    c: Point,
    r: f64,
}

impl DiskGreen {
    pub fn new(shape: DomainShape) -> GreenResult<Self> {
        match shape {
            DomainShape::Disk { center, radius } => {
                shape.validate()?;
                Ok(DiskGreen { shape, c: center, r: radius })
            }
            _ => Err(GreenError::Geometry(GeometryError::InvalidShape(
                "closed-form Green's function needs a disk".into(),
            ))),
        }
    }

    fn scaled(&self, x: Point) -> Point {
        [(x[0] - self.c[0]) / self.r, (x[1] - self.c[1]) / self.r]
    }

    /// 1 − 2x·y + |x|²|y|² in scaled coordinates.
    fn q(x: Point, y: Point) -> f64 {
        let xy = x[0] * y[0] + x[1] * y[1];
        let xx = x[0] * x[0] + x[1] * x[1];
        let yy = y[0] * y[0] + y[1] * y[1];
        1.0 - 2.0 * xy + xx * yy
    }
}

impl GreenFunction for DiskGreen {
    fn shape(&self) -> &DomainShape {
        &self.shape
    }

    fn regular_part(&self, x: Point, y: Point) -> GreenResult<f64> {
        check_inside(&self.shape, x)?;
        check_inside(&self.shape, y)?;
        let (x, y) = (self.scaled(x), self.scaled(y));
        Ok(0.5 * INV_2PI * Self::q(x, y).ln() + INV_2PI * self.r.ln())
    }

    fn grad_x_regular(&self, x: Point, y: Point) -> GreenResult<Point> {
        check_inside(&self.shape, x)?;
        check_inside(&self.shape, y)?;
        let (x, y) = (self.scaled(x), self.scaled(y));
        let yy = y[0] * y[0] + y[1] * y[1];
        let f = 0.5 * INV_2PI / (Self::q(x, y) * self.r);
        Ok([f * (2.0 * x[0] * yy - 2.0 * y[0]), f * (2.0 * x[1] * yy - 2.0 * y[1])])
    }

    fn robin(&self, x: Point) -> GreenResult<f64> {
        check_inside(&self.shape, x)?;
        let x = self.scaled(x);
        Ok(INV_2PI * (self.r * (1.0 - x[0] * x[0] - x[1] * x[1])).ln())
    }

    fn grad_robin(&self, x: Point) -> GreenResult<Point> {
        check_inside(&self.shape, x)?;
        let x = self.scaled(x);
        let f = -2.0 * INV_2PI / (self.r * (1.0 - x[0] * x[0] - x[1] * x[1]));
        Ok([f * x[0], f * x[1]])
    }

    fn normal_derivative_green(&self, x0: Point, theta: f64) -> GreenResult<f64> {
        check_inside(&self.shape, x0)?;
        let y = self.shape.boundary_point(theta);
        let d2 = (x0[0] - y[0]).powi(2) + (x0[1] - y[1]).powi(2);
        let a2 = (x0[0] - self.c[0]).powi(2) + (x0[1] - self.c[1]).powi(2);
        Ok(-INV_2PI * (self.r * self.r - a2) / (self.r * d2))
    }
}
