//! Sampled curves: forward metric derivative, length and arc-length
//! reparametrization.

use crate::error::{FlowError, Result};
use crate::metric::{ensure_in_domain, Point, SpaceHandle};

/// A polyline `t_i ↦ γ(t_i)` in a space.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    times: Vec<f64>,
    points: Vec<Point>,
    space: SpaceHandle,
}

impl SampledCurve {
    pub fn new(space: SpaceHandle, times: Vec<f64>, points: Vec<Point>) -> Result<Self> {
        if times.is_empty() || times.len() != points.len() {
            return Err(FlowError::Parameter(format!(
                "curve needs matching non-empty times and points ({} vs {})",
                times.len(),
                points.len()
            )));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(FlowError::Parameter("curve times must be strictly increasing".into()));
        }
        for p in &points {
            ensure_in_domain(space.as_ref(), p)?;
        }
        Ok(SampledCurve { times, points, space })
    }

    pub fn from_fn(space: SpaceHandle, times: Vec<f64>, f: impl Fn(f64) -> Point) -> Result<Self> {
        let points = times.iter().map(|t| f(*t)).collect();
        Self::new(space, times, points)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn space(&self) -> &SpaceHandle {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn segment_speed(&self, i: usize) -> f64 {
        self.space.distance(&self.points[i], &self.points[i + 1]) / (self.times[i + 1] - self.times[i])
    }

    /// Central asymmetric difference of the forward speed at node `i`,
    /// one-sided at the ends. A single node has speed zero.
    pub fn forward_metric_derivative(&self, i: usize) -> f64 {
        let n = self.len();
        assert!(i < n, "node {i} out of range");
        if n == 1 {
            0.0
        } else if i == 0 {
            self.segment_speed(0)
        } else if i == n - 1 {
            self.segment_speed(n - 2)
        } else {
            0.5 * (self.segment_speed(i - 1) + self.segment_speed(i))
        }
    }

    /// Forward speeds at every node.
    pub fn speeds(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.forward_metric_derivative(i)).collect()
    }

    /// Cumulative lengths `𝔰(t_i)`.
    pub fn cumulative_length(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.len());
        out.push(0.0);
        for w in self.points.windows(2) {
            acc += self.space.distance(&w[0], &w[1]);
            out.push(acc);
        }
        out
    }

    /// `Σ d(γ(t_{i−1}), γ(t_i))`.
    pub fn length(&self) -> f64 {
        *self.cumulative_length().last().unwrap()
    }

    /// The smallest time `t` with `𝔰(t) = s`, by linear interpolation on the
    /// cumulative-length table.
    pub fn inverse_length(&self, s: f64) -> f64 {
        let cum = self.cumulative_length();
        let s = s.clamp(0.0, *cum.last().unwrap());
        let j = cum.partition_point(|c| *c < s);
        if j == 0 {
            return self.times[0];
        }
        let (s0, s1) = (cum[j - 1], cum[j]);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        t0 + (t1 - t0) * (s - s0) / (s1 - s0)
    }

    /// The same nodes indexed by arc length, so every segment has forward
    /// speed one. Nodes that add no length are dropped (leftmost preimage).
    pub fn reparametrize_unit_speed(&self) -> Result<SampledCurve> {
        let cum = self.cumulative_length();
        let total = *cum.last().unwrap();
        if !(total > 0.0) {
            return Err(FlowError::Degenerate("curve has zero length".into()));
        }
        let mut times = vec![0.0];
        let mut points = vec![self.points[0].clone()];
        for i in 1..self.len() {
            if cum[i] > *times.last().unwrap() {
                times.push(cum[i]);
                points.push(self.points[i].clone());
            }
        }
        SampledCurve::new(self.space.clone(), times, points)
    }

    /// Piecewise linear interpolation in coordinates.
    pub fn eval(&self, t: f64) -> Point {
        let n = self.len();
        if t <= self.times[0] || n == 1 {
            return self.points[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1].clone();
        }
        let j = self.times.partition_point(|s| *s <= t);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        &self.points[j - 1] * (1.0 - w) + &self.points[j] * w
    }
}

/// Uniform grid of `n + 1` times on `[a, b]`.
pub fn uniform_times(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{Euclidean, FunkBall, Randers, TangentStructure};
    use nalgebra::DVector;
    use std::sync::Arc;

    fn euclid() -> SpaceHandle {
        Arc::new(Euclidean::new(2))
    }

    fn p(x: f64, y: f64) -> Point {
        Point::from_vec(vec![x, y])
    }

    #[test]
    fn constant_curve() {
        let c = SampledCurve::from_fn(euclid(), uniform_times(0.0, 1.0, 10), |_| p(0.3, 0.2)).unwrap();
        assert!(c.speeds().iter().all(|s| *s == 0.0));
        assert_eq!(c.length(), 0.0);
        assert!(matches!(c.reparametrize_unit_speed(), Err(FlowError::Degenerate(_))));
    }

    #[test]
    fn euclidean_line() {
        let c = SampledCurve::from_fn(euclid(), uniform_times(0.0, 1.0, 8), |t| p(t, 0.0)).unwrap();
        for i in 1..8 {
            assert_eq!(c.forward_metric_derivative(i), 1.0);
        }
        assert_eq!(c.length(), 1.0);
        let times = vec![0.0, 0.1, 0.15, 0.7, 1.0];
        let c = SampledCurve::from_fn(euclid(), times, |t| p(t, 0.0)).unwrap();
        assert!((c.length() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn finsler_speed_matches_norm() {
        let funk = Arc::new(FunkBall::new(2).unwrap());
        let gamma = |t: f64| p(0.5 * t.cos(), 0.3 * t.sin());
        let dgamma = |t: f64| p(-0.5 * t.sin(), 0.3 * t.cos());
        for n in [100, 200] {
            let c = SampledCurve::from_fn(funk.clone(), uniform_times(0.0, 2.0, n), gamma).unwrap();
            let dt = 2.0 / n as f64;
            for i in 1..n {
                let t = c.times()[i];
                let exact = funk.norm(&gamma(t), &dgamma(t));
                assert!((c.forward_metric_derivative(i) - exact).abs() < 2.0 * dt);
            }
        }
    }

    #[test]
    fn funk_chord_length() {
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        for n in [1, 7, 100] {
            let c = SampledCurve::from_fn(funk.clone(), uniform_times(0.0, 1.0, n), |t| p(0.5 * t, 0.0)).unwrap();
            assert!((c.length() - 2f64.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn refinement_never_decreases_length() {
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        let gamma = |t: f64| p(0.6 * t.cos(), 0.6 * t.sin());
        let mut prev = 0.0;
        for n in [2, 4, 8, 16, 32, 64] {
            let l = SampledCurve::from_fn(funk.clone(), uniform_times(0.0, 3.0, n), gamma).unwrap().length();
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn unit_speed_reparametrization() {
        let c = SampledCurve::from_fn(euclid(), uniform_times(0.0, 1.0, 10), |t| p(2.0 * t, 0.0)).unwrap();
        let u = c.reparametrize_unit_speed().unwrap();
        assert!((u.times().last().unwrap() - 2.0).abs() < 1e-15);
        for i in 0..u.len() - 1 {
            assert!((u.segment_speed(i) - 1.0).abs() < 1e-8);
        }
        let again = u.reparametrize_unit_speed().unwrap();
        for (a, b) in u.times().iter().zip(again.times()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((u.length() - c.length()).abs() < 1e-9);
    }

    #[test]
    fn unit_speed_on_non_uniform_funk_chord() {
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        let times: Vec<f64> = (0..=20).map(|i| (i as f64 / 20.0).powi(3)).collect();
        let c = SampledCurve::from_fn(funk.clone(), times, |t| p(-0.3 + 0.9 * t, 0.2 * t)).unwrap();
        let u = c.reparametrize_unit_speed().unwrap();
        for i in 0..u.len() - 1 {
            assert!((u.segment_speed(i) - 1.0).abs() < 1e-8);
        }
        let cum = c.cumulative_length();
        for (i, s) in cum.iter().enumerate() {
            assert!((&u.eval(*s) - &c.points()[i]).norm() < 1e-12);
            assert!((c.inverse_length(*s) - c.times()[i]).abs() < 1e-12);
        }
        assert!((u.length() - c.length()).abs() < 1e-9);
    }

    #[test]
    fn leftmost_preimage_on_pauses() {
        let times = vec![0.0, 1.0, 2.0, 3.0];
        let pts = vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)];
        let c = SampledCurve::new(euclid(), times, pts).unwrap();
        assert_eq!(c.inverse_length(1.0), 1.0);
        let u = c.reparametrize_unit_speed().unwrap();
        assert_eq!(u.len(), 3);
    }

    #[test]
    fn randers_segment_length_is_endpoint_distance() {
        let r: SpaceHandle = Arc::new(Randers::new(DVector::from_vec(vec![0.4, 0.3])).unwrap());
        let (a, b) = (p(-1.0, 2.0), p(3.0, 0.5));
        let c = SampledCurve::from_fn(r.clone(), uniform_times(0.0, 1.0, 13), |t| &a + (&b - &a) * t).unwrap();
        let d = r.distance(&a, &b);
        assert!((c.length() - d).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SampledCurve::new(euclid(), vec![0.0, 0.0], vec![p(0.0, 0.0), p(1.0, 0.0)]).is_err());
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        assert!(matches!(
            SampledCurve::new(funk, vec![0.0], vec![p(2.0, 0.0)]),
            Err(FlowError::Domain { .. })
        ));
    }
}
