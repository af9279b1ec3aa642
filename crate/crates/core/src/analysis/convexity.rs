//! Sampled `(p, λ)`-convexity certificates along the space's geodesics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::metric::{sample_point, AsymmetricSpace, Point};
use crate::potential::Potential;
use crate::report::Tally;

/// Outcome of [`certify_convexity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCertificate {
    pub p: f64,
    pub lambda: f64,
    pub verified: bool,
    /// Largest scaled violation over all sampled inequalities.
    pub max_violation: f64,
    pub n_samples: usize,
    /// Largest violation of `d(x₀, γ(t)) ≤ t d(x₀, x₁)`.
    pub distance_violation: f64,
}

/// Tolerance on scaled violations for a certificate to count as verified.
pub const CERTIFICATE_TOL: f64 = 1e-8;

fn sample_in_domain(phi: &Potential, space: &dyn AsymmetricSpace, rng: &mut ChaCha8Rng) -> Point {
    loop {
        let x = sample_point(space, rng);
        if phi.value(&x).is_finite() {
            return x;
        }
    }
}

/// Step sizes at which the envelope inequality is sampled: a geometric grid
/// inside `(0, λ₋^{−1/(p−1)})`.
fn tau_grid(p: f64, lambda: f64) -> Vec<f64> {
    let upper = if lambda < 0.0 {
        (-lambda).powf(-1.0 / (p - 1.0))
    } else {
        f64::INFINITY
    };
    if upper.is_finite() {
        (1..=6).map(|k| upper * (0.9 / 3f64.powi(k - 1))).collect()
    } else {
        vec![1e-2, 1e-1, 1.0, 10.0, 100.0]
    }
}

/// Samples pairs `(x₀, x₁)` and times `t` on the geodesic `γ` from `x₀` to
/// `x₁` and checks
///
/// * `φ(γ(t)) ≤ (1−t)φ(x₀) + tφ(x₁) − (λ/p) t(1 − t^{p−1}) d^p(x₀, x₁)`,
/// * the same inequality for `Φ(τ, x₀; ·)` with modulus `λ + τ^{1−p}` on a
///   grid of admissible `τ`,
/// * `d(x₀, γ(t)) ≤ t d(x₀, x₁)`,
/// * for `λ ≥ 0`, `(φ(γ(t)) − φ(x₀))/t ≤ φ(x₁) − φ(x₀) − (λ/p)(1 − t^{p−1}) d^p`.
///
/// Violations are scaled by `1 +` the magnitude of the right-hand side.
pub fn certify_convexity(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    p: f64,
    lambda: f64,
    n_pairs: usize,
    n_times: usize,
    seed: u64,
) -> Result<ConvexityCertificate> {
    if !(p > 1.0) || !lambda.is_finite() {
        return Err(FlowError::Parameter(format!("invalid (p, λ) = ({p}, {lambda})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taus = tau_grid(p, lambda);
    let mut all = Tally::default();
    let mut dist = Tally::default();
    for _ in 0..n_pairs {
        let x0 = sample_in_domain(phi, space, &mut rng);
        let x1 = sample_in_domain(phi, space, &mut rng);
        let (f0, f1) = (phi.value(&x0), phi.value(&x1));
        let dp = space.distance(&x0, &x1).powf(p);
        for j in 0..n_times {
            let t = if n_times == 1 {
                rng.gen::<f64>()
            } else {
                (j as f64 + rng.gen::<f64>()) / n_times as f64
            };
            let Some(g) = space.geodesic(&x0, &x1, t) else {
                return Err(FlowError::Unsupported(format!("space {} supplies no geodesics", space.name())));
            };
            let fg = phi.value(&g);
            let modulus = t * (1.0 - t.powf(p - 1.0)) * dp / p;

            let rhs = (1.0 - t) * f0 + t * f1 - lambda * modulus;
            all.push((fg - rhs) / (1.0 + rhs.abs()));

            let dg = space.distance(&x0, &g);
            let d01 = space.distance(&x0, &x1);
            let v = (dg - t * d01) / (1.0 + d01);
            dist.push(v);
            all.push(v);

            for tau in &taus {
                let scale = tau.powf(p - 1.0);
                let lhs = fg + dg.powf(p) / (p * scale);
                let rhs = (1.0 - t) * f0 + t * (f1 + dp / (p * scale)) - (lambda + 1.0 / scale) * modulus;
                all.push((lhs - rhs) / (1.0 + rhs.abs()));
            }

            if lambda >= 0.0 && t > 0.0 {
                let lhs = (fg - f0) / t;
                let rhs = f1 - f0 - lambda / p * (1.0 - t.powf(p - 1.0)) * dp;
                all.push(t * (lhs - rhs) / (1.0 + rhs.abs()));
            }
        }
    }
    Ok(ConvexityCertificate {
        p,
        lambda,
        verified: all.max <= CERTIFICATE_TOL,
        max_violation: all.max,
        n_samples: all.n,
        distance_violation: dist.max,
    })
}

/// The largest `λ` on `grid` whose certificate verifies, with that
/// certificate.
pub fn largest_certified_lambda(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    p: f64,
    grid: &[f64],
    n_pairs: usize,
    n_times: usize,
    seed: u64,
) -> Result<Option<ConvexityCertificate>> {
    let mut best: Option<ConvexityCertificate> = None;
    for &lambda in grid {
        let cert = certify_convexity(phi, space, p, lambda, n_pairs, n_times, seed)?;
        if cert.verified && best.as_ref().is_none_or(|b| lambda > b.lambda) {
            best = Some(cert);
        }
    }
    Ok(best)
}
