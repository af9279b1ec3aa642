//! Residuals of the doubly nonlinear equation `𝔍_p(ξ, ξ′) = −∂°φ(ξ)` and
//! related subdifferential checks.

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::envelope::{local_slope, min_dual_subgradient, SlopeConfig};
use crate::error::{FlowError, Result};
use crate::metric::{AsymmetricSpace, Point};
use crate::potential::{Potential, Subdifferential};
use crate::report::{Report, Tally};
use crate::spaces::{duality_set_jp, TangentStructure};

/// Outcome of [`dne_residual`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DneReport {
    pub max_residual: f64,
    pub n_used: usize,
    /// Samples whose difference stencil mixes smooth and non-smooth points.
    pub n_skipped: usize,
}

fn tangent_of(space: &dyn AsymmetricSpace) -> Result<&dyn TangentStructure> {
    space
        .tangent()
        .ok_or_else(|| FlowError::Unsupported(format!("space {} has no tangent structure", space.name())))
}

fn is_kink(phi: &Potential, x: &Point) -> bool {
    !matches!(phi.subdifferential(x), Some(Subdifferential::Single(_)))
}

/// At each interior sample, with `ξ′` a central difference on the sample
/// grid and `ζ = 𝔍_p(ξ, ξ′)`, computes `min_{η ∈ ∂φ(ξ)} F*(ξ, ζ + η)`.
/// Samples whose three-point stencil is not uniformly smooth or uniformly
/// non-smooth are skipped and counted.
pub fn dne_residual(traj: &Trajectory, phi: &Potential, space: &dyn AsymmetricSpace) -> Result<DneReport> {
    let t = tangent_of(space)?;
    let p = phi.p;
    let mut report = DneReport {
        max_residual: 0.0,
        n_used: 0,
        n_skipped: 0,
    };
    for i in 1..traj.len().saturating_sub(1) {
        let (a, x, b) = (&traj.points[i - 1], &traj.points[i], &traj.points[i + 1]);
        let kinks = [is_kink(phi, a), is_kink(phi, x), is_kink(phi, b)];
        if kinks.iter().any(|k| *k != kinks[0]) || crosses_kink(phi, a, b) {
            report.n_skipped += 1;
            continue;
        }
        let Some(set) = phi.subdifferential(x) else {
            report.n_skipped += 1;
            continue;
        };
        let v = (b - a) / (traj.times[i + 1] - traj.times[i - 1]);
        let zeta = duality_set_jp(t, x, &v, p);
        // min over η of F*(ζ + η) = min over ω ∈ −(ζ + ∂φ) of F*(−ω).
        let shifted = set.translate(&zeta).negate();
        let (_, r) = min_dual_subgradient(space, x, &shifted).expect("tangent structure present");
        report.max_residual = report.max_residual.max(r);
        report.n_used += 1;
    }
    Ok(report)
}

/// Whether the segment `[a, b]` meets one of the potential's kink
/// hyperplanes without lying in it.
fn crosses_kink(phi: &Potential, a: &Point, b: &Point) -> bool {
    phi.kink_hyperplanes().iter().any(|(i, c)| {
        let (sa, sb) = (a[*i] - c, b[*i] - c);
        !(sa == 0.0 && sb == 0.0) && sa * sb <= 0.0
    })
}

/// Largest disagreement between the closed-form `𝔍_p(x, v) = F^{p−2}𝔏(v)`
/// and the maximizer of `ζ(v) − F*(ζ)^q/q` found by gradient ascent, over
/// the given samples.
pub fn duality_estimator_agreement(space: &dyn AsymmetricSpace, samples: &[(Point, Point)], p: f64) -> Result<Report> {
    let t = tangent_of(space)?;
    let q = p / (p - 1.0);
    let mut tally = Tally::default();
    for (x, v) in samples {
        let exact = duality_set_jp(t, x, v, p);
        // Maximize ζ ↦ ζ(v) − F*(ζ)^q / q; its gradient is
        // v − F*(ζ)^{q−2} 𝔏⁻¹(ζ).
        let mut zeta = t.legendre(x, v);
        let objective = |z: &Point| z.dot(v) - t.dual_norm(x, z).powf(q) / q;
        let mut value = objective(&zeta);
        let mut step = 0.5;
        for _ in 0..5000 {
            let fs = t.dual_norm(x, &zeta);
            let grad = if fs > 0.0 {
                v - t.legendre_inv(x, &zeta) * fs.powf(q - 2.0)
            } else {
                v.clone()
            };
            if grad.norm() < 1e-13 * (1.0 + v.norm()) {
                break;
            }
            let cand = &zeta + &grad * step;
            let cv = objective(&cand);
            if cv >= value {
                zeta = cand;
                value = cv;
                step *= 1.5;
            } else {
                step *= 0.5;
                if step < 1e-16 {
                    break;
                }
            }
        }
        tally.push((zeta - &exact).norm() / (1.0 + exact.norm()));
    }
    Ok(tally.report("duality_map_agreement", 1e-6))
}

/// Checks `|∂φ|(x) ≤ F*(x, −∂°φ(x))` on samples and, when `convex` is set,
/// equality within `1e−3`.
pub fn slope_subdifferential_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    points: &[Point],
    convex: bool,
) -> Result<Report> {
    tangent_of(space)?;
    let cfg = SlopeConfig::default();
    let mut upper = Tally::default();
    let mut equal = Tally::default();
    for x in points {
        let set = phi
            .subdifferential(x)
            .ok_or_else(|| FlowError::Unsupported(format!("potential {} has no subdifferential", phi.name())))?;
        let (_, dual) = min_dual_subgradient(space, x, &set).expect("tangent structure present");
        let local = local_slope(phi, space, x, &cfg);
        let scale = 1.0 + dual;
        upper.push((local - dual) / scale - 1e-6);
        if convex {
            equal.push((local - dual).abs() / scale - 1e-3);
        }
    }
    let mut parts = vec![upper.report("slope_below_dual_subgradient", 0.0)];
    if convex {
        parts.push(equal.report("slope_equals_dual_subgradient", 0.0));
    }
    Ok(Report::combine("slope_subdifferential", &parts))
}

#[cfg(test)]
mod tests {
    use super::super::tests::analytic_quadratic;
    use super::*;
    use crate::metric::sample_point;
    use crate::spaces::{Euclidean, FunkBall, Minkowski, Randers};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smooth_euclidean_flow_solves_the_equation() {
        let e = Euclidean::new(2);
        let phi = Potential::quadratic(Point::zeros(2));
        let traj = analytic_quadratic(&Point::from_vec(vec![1.0, 0.5]), 1.0, 1000);
        let rep = dne_residual(&traj, &phi, &e).unwrap();
        assert!(rep.max_residual < 1e-5 && rep.n_skipped == 0, "{rep:?}");
        let still = analytic_quadratic(&Point::zeros(2), 1.0, 10);
        assert_eq!(dne_residual(&still, &phi, &e).unwrap().max_residual, 0.0);
    }

    #[test]
    fn duality_estimators_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let funk = FunkBall::new(2).unwrap();
        let randers = Randers::new(DVector::from_vec(vec![0.4, -0.3])).unwrap();
        let lp = Minkowski::lp(2, 3.0).unwrap();
        let spaces: [&dyn AsymmetricSpace; 3] = [&funk, &randers, &lp];
        for space in spaces {
            let samples: Vec<(Point, Point)> = (0..20)
                .map(|_| (sample_point(space, &mut rng), Point::from_fn(2, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0))))
                .collect();
            for p in [1.5, 2.0, 3.0] {
                let rep = duality_estimator_agreement(space, &samples, p).unwrap();
                assert!(rep.pass, "{} p={p}: {rep:?}", space.name());
            }
        }
    }

    #[test]
    fn slope_matches_minimal_subgradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = Randers::new(DVector::from_vec(vec![0.3, 0.2])).unwrap();
        let phi = Potential::l1_split(0.5, Point::from_vec(vec![0.2, -0.1]));
        let mut points: Vec<Point> = (0..20).map(|_| sample_point(&r, &mut rng)).collect();
        points.push(Point::from_vec(vec![0.0, 0.7]));
        points.push(Point::from_vec(vec![0.0, -0.1]));
        let rep = slope_subdifferential_check(&phi, &r, &points, true).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
