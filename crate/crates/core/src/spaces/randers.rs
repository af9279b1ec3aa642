use nalgebra::DVector;

use crate::error::{FlowError, Result};
use crate::metric::{AsymmetricSpace, Point};
use crate::spaces::TangentStructure;

/// `R^n` with the translation-invariant norm `F(v) = |v| + ⟨a, v⟩`.
#[derive(Debug, Clone)]
pub struct Randers {
    drift: DVector<f64>,
}

impl Randers {
    pub fn new(drift: DVector<f64>) -> Result<Self> {
        if drift.is_empty() {
            return Err(FlowError::Parameter("Randers drift must be non-empty".into()));
        }
        let a = drift.norm();
        if !(a < 1.0) {
            return Err(FlowError::Parameter(format!("Randers drift norm {a} must be < 1")));
        }
        Ok(Randers { drift })
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    /// `(1 + |a|) / (1 − |a|)`.
    pub fn reversibility(&self) -> f64 {
        let a = self.drift.norm();
        (1.0 + a) / (1.0 - a)
    }
}

impl TangentStructure for Randers {
    fn norm(&self, _x: &Point, v: &Point) -> f64 {
        v.norm() + self.drift.dot(v)
    }

    fn norm_grad(&self, _x: &Point, v: &Point) -> Point {
        v / v.norm() + &self.drift
    }

    fn dual_norm(&self, _x: &Point, zeta: &Point) -> f64 {
        let a = &self.drift;
        let s = 1.0 - a.norm_squared();
        let az = a.dot(zeta);
        ((s * zeta.norm_squared() + az * az).sqrt() - az) / s
    }
}

impl AsymmetricSpace for Randers {
    fn name(&self) -> String {
        format!("randers{}", self.drift.len())
    }

    fn dim(&self) -> usize {
        self.drift.len()
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        let v = y - x;
        v.norm() + self.drift.dot(&v)
    }

    fn theta(&self, _r: f64) -> f64 {
        self.reversibility()
    }

    fn global_theta(&self) -> Option<f64> {
        Some(self.reversibility())
    }

    fn tangent(&self) -> Option<&dyn TangentStructure> {
        Some(self)
    }

    fn distance_grad(&self, x: &Point, y: &Point) -> Option<Point> {
        let v = y - x;
        let n = v.norm();
        (n > 0.0).then(|| v / n + &self.drift)
    }

    fn geodesic(&self, x0: &Point, x1: &Point, t: f64) -> Option<Point> {
        Some(x0 + (x1 - x0) * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{check_axioms, sample_point};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_large_drift() {
        assert!(Randers::new(DVector::from_vec(vec![1.0, 0.0])).is_err());
        assert!(Randers::new(DVector::from_vec(vec![0.6, 0.8])).is_err());
    }

    #[test]
    fn midpoints_split_distance() {
        let r = Randers::new(DVector::from_vec(vec![0.25, -0.5])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let x = sample_point(&r, &mut rng);
            let y = sample_point(&r, &mut rng);
            let m = (&x + &y) * 0.5;
            let d = r.distance(&x, &y);
            assert!((r.distance(&x, &m) + r.distance(&m, &y) - d).abs() <= 1e-14 * (1.0 + d));
        }
    }

    #[test]
    fn theta_metric_bound() {
        let r = Randers::new(DVector::from_vec(vec![0.7, 0.1])).unwrap();
        let rep = check_axioms(&r, 3000, 4);
        assert!(rep.passes(1e-12), "{rep:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst: f64 = 0.0;
        for _ in 0..3000 {
            let x = sample_point(&r, &mut rng);
            let y = sample_point(&r, &mut rng);
            worst = worst.max(r.distance(&x, &y) / r.distance(&y, &x));
        }
        assert!(worst <= r.reversibility() * (1.0 + 1e-12));
        assert!(worst > 0.9 * r.reversibility());
    }
}
