//! Decay and regularization estimates for certified potentials.

use super::Trajectory;
use crate::envelope::{moreau_yosida, SolverConfig};
use crate::error::{FlowError, Result};
use crate::metric::AsymmetricSpace;
use crate::mms::check_regime;
use crate::potential::{Certificate, Potential};
use crate::quadrature::GaussLegendre;
use crate::report::{Report, Tally};

fn certificate(phi: &Potential) -> Result<Certificate> {
    phi.certificate
        .ok_or_else(|| FlowError::Unsupported(format!("potential {} has no convexity certificate", phi.name())))
}

fn infimum(phi: &Potential) -> Result<f64> {
    phi.known_inf
        .filter(|v| v.is_finite())
        .ok_or_else(|| FlowError::Unsupported(format!("potential {} has no known infimum", phi.name())))
}

/// `sgn(λ)|λ|^{q/p}`.
fn signed_rate(lambda: f64, p: f64) -> f64 {
    let q = p / (p - 1.0);
    lambda.signum() * lambda.abs().powf(q / p)
}

/// Checks the exponential decay of `φ(ξ(t)) − inf φ` over all sample pairs
/// `0 < t₀ ≤ t`, and, for `λ > 0` with a known minimizer `x̄`, the decay of
/// `d^p(x̄, ξ(t))` and the static bounds `φ − inf ≤ |∂φ|^q/(qλ^{q/p})` and
/// `(λ/p) d^p(x̄, ξ) ≤ φ(ξ) − φ(x̄)`.
pub fn verify_exponential_decay(traj: &Trajectory, phi: &Potential, space: &dyn AsymmetricSpace) -> Result<Report> {
    let cert = certificate(phi)?;
    let inf = infimum(phi)?;
    let (p, lambda) = (cert.p, cert.lambda);
    let q = p / (p - 1.0);
    let rate = q * signed_rate(lambda, p);
    let n = traj.len();
    let excess: Vec<f64> = traj.phi_values.iter().map(|v| v - inf).collect();
    let mut tally = Tally::default();
    for i in 1..n {
        for j in i..n {
            let dt = traj.times[j] - traj.times[i];
            tally.push(excess[j] - excess[i] * (-rate * dt).exp());
        }
    }
    if lambda > 0.0 {
        if let Some(xbar) = &phi.known_minimizer {
            let dist: Vec<f64> = traj.points.iter().map(|x| space.distance(xbar, x).powf(p)).collect();
            for i in 1..n {
                for j in i..n {
                    let dt = traj.times[j] - traj.times[i];
                    tally.push(dist[j] - p / lambda * excess[i] * (-rate * dt).exp());
                }
            }
            let phi_bar = phi.value(xbar);
            for (k, d) in dist.iter().enumerate() {
                tally.push(lambda / p * d - (traj.phi_values[k] - phi_bar));
            }
        }
        for (k, e) in excess.iter().enumerate() {
            tally.push(e - traj.slope_values[k].powf(q) / (q * lambda.powf(q / p)));
        }
    }
    Ok(tally.report("exponential_decay", 1e-8))
}

/// Least-squares slope of `−log(φ(ξ(t)) − inf)` over samples with
/// `t ∈ [t_lo, t_hi]`.
pub fn decay_exponent(traj: &Trajectory, inf: f64, t_lo: f64, t_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.phi_values)
        .filter(|(t, v)| **t >= t_lo && **t <= t_hi && **v - inf > 0.0)
        .map(|(t, v)| (*t, (v - inf).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(FlowError::Degenerate("not enough samples with positive excess".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|(t, _)| t).sum::<f64>() / n;
    let my = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// `C(p, λ, t) = ∫_0^t s^{p−2} e^{qλs^{p−1}} e^{−q sgn(λ)|λ|^{q/p} s} ds`,
/// computed after substituting `u = s^{p−1}`.
pub fn regularization_constant(p: f64, lambda: f64, t: f64) -> Result<f64> {
    if !(p > 1.0) || !(t >= 0.0) {
        return Err(FlowError::Parameter(format!("need p > 1 and t >= 0, got p = {p}, t = {t}")));
    }
    let q = p / (p - 1.0);
    let sigma = signed_rate(lambda, p);
    let upper = t.powf(p - 1.0);
    let rule = GaussLegendre::new(32);
    let mut f = |u: f64| (q * lambda * u - q * sigma * u.powf(1.0 / (p - 1.0))).exp();
    Ok(rule.integrate(0.0, upper, 1e-15 * (1.0 + upper), 20, &mut f) / (p - 1.0))
}

/// Checks, at up to `max_envelope_samples` samples for the envelope bound
/// and at every sample otherwise,
///
/// * `(t/q)|∂φ|^q(ξ(t)) ≤ e^{qλ₋t^{p−1}} (φ(x₀) − Φ_t(x₀))`,
/// * `t|∂φ|^q(ξ(t)) ≤ (1 + pλ₊C(p,λ,t)) e^{−qλt^{p−1}} (φ(x₀) − inf φ)`.
pub fn verify_slope_regularization(
    traj: &Trajectory,
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    cfg: &SolverConfig,
    max_envelope_samples: usize,
) -> Result<Report> {
    let cert = certificate(phi)?;
    let inf = infimum(phi)?;
    let (p, lambda) = (cert.p, cert.lambda);
    check_regime(p, lambda)?;
    let q = p / (p - 1.0);
    let x0 = &traj.points[0];
    let phi0 = traj.phi_values[0];
    let (lp, lm) = (lambda.max(0.0), (-lambda).max(0.0));

    let mut second = Tally::default();
    for k in 1..traj.len() {
        let t = traj.times[k];
        let lhs = t * traj.slope_values[k].powf(q);
        let c = regularization_constant(p, lambda, t)?;
        let rhs = (1.0 + p * lp * c) * (-q * lambda * t.powf(p - 1.0)).exp() * (phi0 - inf);
        second.push(lhs - rhs);
    }

    let mut first = Tally::default();
    let stride = (traj.len() / max_envelope_samples.max(1)).max(1);
    for k in (1..traj.len()).step_by(stride) {
        let t = traj.times[k];
        let envelope = moreau_yosida(phi, space, t, x0, cfg)?;
        let lhs = t / q * traj.slope_values[k].powf(q);
        let rhs = (q * lm * t.powf(p - 1.0)).exp() * (phi0 - envelope);
        first.push(lhs - rhs);
    }
    Ok(Report::combine(
        "slope_regularization",
        &[
            first.report("slope_envelope_bound", 1e-6),
            second.report("slope_decay_bound", 1e-6),
        ],
    ))
}

/// Checks that `e^{λt^{p−1}}|∂φ|(ξ(t))` is non-increasing (relative slack
/// `1e−5`) and, for `λ ≥ 0`, that `φ(ξ(t))` is convex in `t` (second
/// divided differences `≥ −1e−6`).
pub fn monotone_slope_check(traj: &Trajectory, phi: &Potential) -> Result<Report> {
    let cert = certificate(phi)?;
    let (p, lambda) = (cert.p, cert.lambda);
    check_regime(p, lambda)?;
    let weighted: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.slope_values)
        .map(|(t, s)| (lambda * t.powf(p - 1.0)).exp() * s)
        .collect();
    let mut mono = Tally::default();
    for w in weighted.windows(2) {
        mono.push((w[1] - w[0]) / (1.0 + w[0]));
    }
    let mut parts = vec![mono.report("slope_monotone", 1e-5)];
    if lambda >= 0.0 {
        let mut convex = Tally::default();
        let (t, f) = (&traj.times, &traj.phi_values);
        for i in 1..traj.len().saturating_sub(1) {
            let left = (f[i] - f[i - 1]) / (t[i] - t[i - 1]);
            let right = (f[i + 1] - f[i]) / (t[i + 1] - t[i]);
            convex.push(-2.0 * (right - left) / (t[i + 1] - t[i - 1]));
        }
        parts.push(convex.report("energy_convex_in_time", 1e-6));
    }
    Ok(Report::combine("slope_monotonicity", &parts))
}

#[cfg(test)]
mod tests {
    use super::super::tests::analytic_quadratic;
    use super::*;
    use crate::metric::Point;
    use crate::spaces::Euclidean;

    fn quadratic() -> Potential {
        Potential::quadratic(Point::zeros(2)).with_certificate(1.0)
    }

    #[test]
    fn analytic_flow_attains_the_decay_bound() {
        let e = Euclidean::new(2);
        let traj = analytic_quadratic(&Point::from_vec(vec![1.0, 2.0]), 3.0, 600);
        let rep = verify_exponential_decay(&traj, &quadratic(), &e).unwrap();
        assert!(rep.pass && rep.max_violation.abs() < 1e-12, "{rep:?}");
        let rate = decay_exponent(&traj, 0.0, 0.1, 3.0).unwrap();
        assert!((rate - 2.0).abs() < 1e-10);
        let still = analytic_quadratic(&Point::zeros(2), 1.0, 10);
        assert!(verify_exponential_decay(&still, &quadratic(), &e).unwrap().pass);
    }

    #[test]
    fn regularization_constant_closed_forms() {
        for t in [0.1, 0.5, 1.0, 3.0] {
            for lambda in [-2.0, 0.5, 1.0, 3.0] {
                assert!((regularization_constant(2.0, lambda, t).unwrap() - t).abs() < 1e-10);
            }
            for p in [1.5, 2.5, 3.0] {
                let exact = t.powf(p - 1.0) / (p - 1.0);
                assert!((regularization_constant(p, 0.0, t).unwrap() - exact).abs() < 1e-10);
            }
        }
        // Continuity in λ at 0 for p = 3; the drift term scales like λ^{1/2}.
        let c0 = regularization_constant(3.0, 0.0, 0.5).unwrap();
        let c1 = regularization_constant(3.0, 1e-10, 0.5).unwrap();
        assert!((c1 - c0).abs() < 1e-5);
        assert!(regularization_constant(3.0, 1.0, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn regularization_bounds_on_analytic_flow() {
        let e = Euclidean::new(2);
        let traj = analytic_quadratic(&Point::from_vec(vec![1.0, -1.0]), 2.0, 200);
        let rep = verify_slope_regularization(&traj, &quadratic(), &e, &SolverConfig::default(), 20).unwrap();
        assert!(rep.pass, "{rep:?}");
        let bad = Potential::quadratic(Point::zeros(2)).with_exponent(3.0).with_certificate(1.0);
        assert!(matches!(
            verify_slope_regularization(&traj, &bad, &e, &SolverConfig::default(), 20),
            Err(FlowError::Unsupported(_))
        ));
    }

    #[test]
    fn monotone_weighted_slope() {
        let traj = analytic_quadratic(&Point::from_vec(vec![1.0, -1.0]), 2.0, 200);
        let rep = monotone_slope_check(&traj, &quadratic()).unwrap();
        assert!(rep.pass && rep.max_violation < 1e-12, "{rep:?}");
        let still = analytic_quadratic(&Point::zeros(2), 1.0, 10);
        assert!(monotone_slope_check(&still, &quadratic()).unwrap().pass);
    }
}
