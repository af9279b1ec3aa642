//! Trajectories and the checks run on them: convexity certificates, the ODE
//! reference integrator, energy identity, decay and regularization bounds,
//! and residuals of the doubly nonlinear equation.

mod bounds;
mod convexity;
mod dne;
mod oracle;

pub use bounds::{
    decay_exponent, monotone_slope_check, regularization_constant, verify_exponential_decay,
    verify_slope_regularization,
};
pub use convexity::{certify_convexity, largest_certified_lambda, ConvexityCertificate};
pub use dne::{dne_residual, duality_estimator_agreement, slope_subdifferential_check, DneReport};
pub use oracle::{chain_rule_residual, gradient_consistency_residual, ode_oracle, RkConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::metric::{AsymmetricSpace, Point};
use crate::potential::Potential;

/// Where a trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Mms,
    OdeOracle,
}

/// A time-sampled curve with `φ`, slope and forward speed at each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub phi_values: Vec<f64>,
    pub slope_values: Vec<f64>,
    pub speed_values: Vec<f64>,
    pub provenance: Provenance,
    /// The run left the domain and was truncated.
    pub exited: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation in coordinates, clamped to the sampled range.
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

    /// `max_i max(d(ξ_i, η(t_i)), d(η(t_i), ξ_i))` over this trajectory's
    /// samples, with `η` interpolated.
    pub fn sup_distance(&self, space: &dyn AsymmetricSpace, other: &Trajectory) -> f64 {
        self.times
            .iter()
            .zip(&self.points)
            .filter(|(t, _)| **t <= *other.times.last().unwrap())
            .map(|(t, x)| {
                let y = other.eval(*t);
                space.distance(x, &y).max(space.distance(&y, x))
            })
            .fold(0.0, f64::max)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Energy-identity residual over the whole sampled interval.
    pub fn energy_residual(&self, p: f64) -> f64 {
        energy_residual_between(self, p, 0, self.len().saturating_sub(1))
    }
}

/// Forward speeds at sampled nodes: the average of the adjacent segment
/// speeds `d(γ_i, γ_{i+1})/(t_{i+1} − t_i)`, one-sided at the ends.
pub(crate) fn central_speeds(space: &dyn AsymmetricSpace, times: &[f64], points: &[Point]) -> Vec<f64> {
    let n = times.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let seg: Vec<f64> = (0..n - 1)
        .map(|i| space.distance(&points[i], &points[i + 1]) / (times[i + 1] - times[i]))
        .collect();
    (0..n)
        .map(|i| match i {
            0 => seg[0],
            i if i == n - 1 => seg[n - 2],
            i => 0.5 * (seg[i - 1] + seg[i]),
        })
        .collect()
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `|(1/p)∫ speed^p + (1/q)∫ slope^q − (φ(ξ(s)) − φ(ξ(t)))|` between samples
/// `i0 < i1` by the trapezoid rule.
pub(crate) fn energy_residual_between(traj: &Trajectory, p: f64, i0: usize, i1: usize) -> f64 {
    if i1 <= i0 {
        return 0.0;
    }
    let q = p / (p - 1.0);
    let times = &traj.times[i0..=i1];
    let speed: Vec<f64> = traj.speed_values[i0..=i1].iter().map(|v| v.powf(p)).collect();
    let slope: Vec<f64> = traj.slope_values[i0..=i1].iter().map(|v| v.powf(q)).collect();
    let lhs = trapezoid(times, &speed) / p + trapezoid(times, &slope) / q;
    (lhs - (traj.phi_values[i0] - traj.phi_values[i1])).abs()
}

/// Largest energy-identity residual over `[0, T]` and ten random
/// subintervals.
pub fn verify_energy_identity(traj: &Trajectory, phi: &Potential) -> Result<f64> {
    let n = traj.len();
    if traj.speed_values.len() != n || traj.slope_values.len() != n || traj.phi_values.len() != n {
        return Err(FlowError::Parameter("trajectory columns have mismatched lengths".into()));
    }
    if n < 2 {
        return Ok(0.0);
    }
    let p = phi.p;
    let mut worst = energy_residual_between(traj, p, 0, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let a = rng.gen_range(0..n - 1);
        let b = rng.gen_range(a + 1..n);
        worst = worst.max(energy_residual_between(traj, p, a, b));
    }
    Ok(worst)
}
