use crate::metric::{AsymmetricSpace, Point};
use crate::spaces::TangentStructure;

/// Standard Euclidean space `R^n`.
#[derive(Debug, Clone)]
pub struct Euclidean {
    dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Euclidean { dim }
    }
}

impl TangentStructure for Euclidean {
    fn norm(&self, _x: &Point, v: &Point) -> f64 {
        v.norm()
    }

    fn norm_grad(&self, _x: &Point, v: &Point) -> Point {
        v / v.norm()
    }

    fn dual_norm(&self, _x: &Point, zeta: &Point) -> f64 {
        zeta.norm()
    }

    fn legendre(&self, _x: &Point, v: &Point) -> Point {
        v.clone()
    }

    fn legendre_inv(&self, _x: &Point, zeta: &Point) -> Point {
        zeta.clone()
    }
}

impl AsymmetricSpace for Euclidean {
    fn name(&self) -> String {
        format!("euclidean{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        (y - x).norm()
    }

    fn theta(&self, _r: f64) -> f64 {
        1.0
    }

    fn global_theta(&self) -> Option<f64> {
        Some(1.0)
    }

    fn tangent(&self) -> Option<&dyn TangentStructure> {
        Some(self)
    }

    fn distance_grad(&self, x: &Point, y: &Point) -> Option<Point> {
        let d = y - x;
        let n = d.norm();
        (n > 0.0).then(|| d / n)
    }

    fn geodesic(&self, x0: &Point, x1: &Point, t: f64) -> Option<Point> {
        Some(x0 + (x1 - x0) * t)
    }
}
