use crate::error::{FlowError, Result};
use crate::metric::{AsymmetricSpace, Point};
use crate::spaces::TangentStructure;

/// The Funk metric on the open Euclidean unit ball.
///
/// The tangent norm at `x` is the Minkowski functional of the unit ball
/// seen from `x`, and `d(x, y) = −log(1 − F(x, y − x))`.
#[derive(Debug, Clone)]
pub struct FunkBall {
    dim: usize,
}

impl FunkBall {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(FlowError::Parameter(format!("Funk ball needs dim >= 2, got {dim}")));
        }
        Ok(FunkBall { dim })
    }

    /// Exit point of the ray from `x` in direction `v ≠ 0`.
    pub fn boundary_point(&self, x: &Point, v: &Point) -> Point {
        x + v / funk_norm(x, v)
    }
}

/// `1 − |x|²`.
fn defect(x: &Point) -> f64 {
    let r = x.norm();
    (1.0 - r) * (1.0 + r)
}

fn funk_norm(x: &Point, v: &Point) -> f64 {
    let s = defect(x);
    let xv = x.dot(v);
    let vv = v.norm_squared();
    let root = (s * vv + xv * xv).sqrt();
    if xv >= 0.0 {
        (root + xv) / s
    } else if vv == 0.0 {
        0.0
    } else {
        // Rationalized to avoid cancellation between `root` and `xv`.
        vv / (root - xv)
    }
}

impl TangentStructure for FunkBall {
    fn norm(&self, x: &Point, v: &Point) -> f64 {
        funk_norm(x, v)
    }

    fn norm_grad(&self, x: &Point, v: &Point) -> Point {
        let s = defect(x);
        let xv = x.dot(v);
        let root = (s * v.norm_squared() + xv * xv).sqrt();
        ((v * s + x * xv) / root + x) / s
    }

    fn dual_norm(&self, x: &Point, zeta: &Point) -> f64 {
        zeta.norm() - x.dot(zeta)
    }
}

impl AsymmetricSpace for FunkBall {
    fn name(&self) -> String {
        format!("funk{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        let f = funk_norm(x, &(y - x));
        -(-f).ln_1p()
    }

    fn in_domain(&self, x: &Point) -> bool {
        x.len() == self.dim && x.iter().all(|c| c.is_finite()) && x.norm() < 1.0
    }

    fn theta(&self, r: f64) -> f64 {
        2.0 * r.exp() - 1.0
    }

    fn tangent(&self) -> Option<&dyn TangentStructure> {
        Some(self)
    }

    fn distance_grad(&self, x: &Point, y: &Point) -> Option<Point> {
        let v = y - x;
        if v.norm() == 0.0 {
            return None;
        }
        let f = funk_norm(x, &v);
        Some(self.norm_grad(x, &v) / (1.0 - f))
    }

    /// The chord through `x0` and `x1` at constant forward speed:
    /// `γ(t) = b + (x0 − b) e^{−t d(x0, x1)}` with `b` the exit point.
    fn geodesic(&self, x0: &Point, x1: &Point, t: f64) -> Option<Point> {
        let v = x1 - x0;
        if v.norm() == 0.0 {
            return Some(x0.clone());
        }
        let b = self.boundary_point(x0, &v);
        let d = self.distance(x0, x1);
        Some(&b + (x0 - &b) * (-t * d).exp())
    }

    fn sampling_radius(&self) -> f64 {
        1.0
    }
}
