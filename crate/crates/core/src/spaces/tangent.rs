//! Tangent structures: Finsler norms `F(x, ·)`, their duals, the Legendre
//! transform of `F²/2`, gradients, and the duality maps `𝔧_p`, `𝔍_p`.

use nalgebra::{DMatrix, DVector};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, Result};
use crate::metric::{sample_point, AsymmetricSpace, Point};
use crate::potential::Potential;
use crate::report::{Report, Tally};

/// A (possibly position dependent) norm on each tangent space.
///
/// Implementors must supply `norm` and `norm_grad`; the Legendre map and
/// dual norm fall back to numeric versions.
pub trait TangentStructure: Send + Sync {
    fn norm(&self, x: &Point, v: &Point) -> f64;

    /// `∂_v F(x, v)` for `v ≠ 0`.
    fn norm_grad(&self, x: &Point, v: &Point) -> Point;

    /// `F*(x, ζ) = sup_{F(x,v) ≤ 1} ζ(v)`.
    fn dual_norm(&self, x: &Point, zeta: &Point) -> f64 {
        let v = self.legendre_inv(x, zeta);
        self.norm(x, &v)
    }

    /// `𝔏(v) = F(v) ∂_v F(v)`, the differential of `F²/2`.
    fn legendre(&self, x: &Point, v: &Point) -> Point {
        if is_zero(v) {
            return Point::zeros(v.len());
        }
        self.norm_grad(x, v) * self.norm(x, v)
    }

    fn legendre_inv(&self, x: &Point, zeta: &Point) -> Point {
        numeric_legendre_inv(self, x, zeta)
    }

    /// Whether `F(x, ·)` is smooth away from zero, which the gradient and
    /// duality operations need.
    fn is_smooth(&self) -> bool {
        true
    }
}

pub(crate) fn is_zero(v: &Point) -> bool {
    v.iter().all(|c| *c == 0.0)
}

/// Newton's method on `v ↦ F(x,v)²/2 − ζ(v)`, started at `ζ` (the inverse
/// for the Euclidean proxy). The objective is strictly convex, so the
/// stationary point is the unique minimizer.
pub fn numeric_legendre_inv<T: TangentStructure + ?Sized>(t: &T, x: &Point, zeta: &Point) -> Point {
    let n = zeta.len();
    if is_zero(zeta) {
        return Point::zeros(n);
    }
    let scale = zeta.norm();
    let objective = |v: &Point| 0.5 * t.norm(x, v).powi(2) - zeta.dot(v);
    let residual = |v: &Point| t.legendre(x, v) - zeta;

    let starts = [zeta.clone(), zeta * 0.5, zeta * 2.0];
    let mut best = zeta.clone();
    let mut best_res = f64::INFINITY;
    for start in starts {
        let mut v = start;
        let mut r = residual(&v);
        for _ in 0..100 {
            let rn = r.norm();
            if rn < 1e-13 * scale {
                break;
            }
            let h = 1e-6 * v.norm().max(1e-12 * scale);
            let mut hess = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[j] += h;
                vm[j] -= h;
                let col = (t.legendre(x, &vp) - t.legendre(x, &vm)) / (2.0 * h);
                hess.set_column(j, &col);
            }
            let hess = (&hess + hess.transpose()) * 0.5;
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&r),
                None => r.clone(),
            };
            let f0 = objective(&v);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &v - &step * alpha;
                let rc = residual(&cand);
                if objective(&cand) <= f0 || rc.norm() < rn {
                    v = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let rn = r.norm();
        if rn < best_res {
            best_res = rn;
            best = v;
        }
        if best_res < 1e-12 * scale {
            break;
        }
    }
    best
}

fn require_smooth(space: &dyn AsymmetricSpace) -> Result<&dyn TangentStructure> {
    match space.tangent() {
        Some(t) if t.is_smooth() => Ok(t),
        Some(_) => Err(FlowError::Unsupported(format!(
            "{} has a non-smooth norm",
            space.name()
        ))),
        None => Err(FlowError::Unsupported(format!(
            "{} has no tangent structure",
            space.name()
        ))),
    }
}

fn smooth_differential(phi: &Potential, x: &Point) -> Result<Point> {
    phi.differential(x).ok_or_else(|| {
        FlowError::Unsupported(format!("potential {} is not differentiable", phi.name()))
    })
}

/// `∇φ(x) = 𝔏⁻¹(dφ(x))`.
pub fn gradient(space: &dyn AsymmetricSpace, phi: &Potential, x: &Point) -> Result<Point> {
    crate::metric::ensure_in_domain(space, x)?;
    let t = require_smooth(space)?;
    let d = smooth_differential(phi, x)?;
    Ok(t.legendre_inv(x, &d))
}

/// `∇(−φ)(x) = 𝔏⁻¹(−dφ(x))`, which differs from `−∇φ(x)` when the norm is
/// not reversible.
pub fn descending_gradient(space: &dyn AsymmetricSpace, phi: &Potential, x: &Point) -> Result<Point> {
    crate::metric::ensure_in_domain(space, x)?;
    let t = require_smooth(space)?;
    let d = smooth_differential(phi, x)?;
    Ok(t.legendre_inv(x, &-d))
}

/// `𝔧_p(v) = F(x,v)^{p−2} v`.
pub fn duality_map_jp(t: &dyn TangentStructure, x: &Point, v: &Point, p: f64) -> Point {
    if is_zero(v) {
        return Point::zeros(v.len());
    }
    v * t.norm(x, v).powf(p - 2.0)
}

/// The unique covector `ζ` with `ζ(v) = F(v)^p = F*(ζ)^q`, namely
/// `𝔏(𝔧_p(v)) = F(v)^{p−2} 𝔏(v)`.
pub fn duality_set_jp(t: &dyn TangentStructure, x: &Point, v: &Point, p: f64) -> Point {
    if is_zero(v) {
        return Point::zeros(v.len());
    }
    t.legendre(x, v) * t.norm(x, v).powf(p - 2.0)
}

/// Inverse of `𝔍_p(x, ·)`: the vector `v` with `𝔍_p(x, v) = ζ`, i.e.
/// `F*(ζ)^{(2−p)/(p−1)} 𝔏⁻¹(ζ)`.
pub fn duality_set_jp_inv(t: &dyn TangentStructure, x: &Point, zeta: &Point, p: f64) -> Point {
    if is_zero(zeta) {
        return Point::zeros(zeta.len());
    }
    let v = t.legendre_inv(x, zeta);
    let fv = t.norm(x, &v);
    v * fv.powf((2.0 - p) / (p - 1.0))
}

/// Reversibility bound `2e^r − 1` of the Funk ball on `B⁺_0(r)`.
pub fn funk_reversibility_profile(r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(FlowError::Parameter(format!("radius {r} must be > 0")));
    }
    Ok(2.0 * r.exp() - 1.0)
}

/// Seeded sampling check of the tangent structure: positive homogeneity,
/// the pairing `ζ(v) ≤ F(v)F*(ζ)`, `F*(𝔏v) = F(v)`, `𝔏v(v) = F(v)²` and
/// `𝔏⁻¹∘𝔏 = id`. Violations are relative to the size of the quantities.
pub fn legendre_consistency_check(space: &dyn AsymmetricSpace, n_samples: usize, seed: u64) -> Result<Report> {
    let t = space
        .tangent()
        .filter(|t| t.is_smooth())
        .ok_or_else(|| FlowError::Unsupported(format!("space {} has no smooth tangent structure", space.name())))?;
    let n = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut homogeneity, mut pairing, mut legendre, mut inverse) =
        (Tally::default(), Tally::default(), Tally::default(), Tally::default());
    for _ in 0..n_samples {
        let x = sample_point(space, &mut rng);
        let v = Point::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let zeta = Point::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let c = rng.gen_range(0.0..5.0);
        let fv = t.norm(&x, &v);
        homogeneity.push((t.norm(&x, &(&v * c)) - c * fv).abs() / (1.0 + c * fv));
        pairing.push((zeta.dot(&v) - fv * t.dual_norm(&x, &zeta)) / (1.0 + fv * zeta.norm()));
        let l = t.legendre(&x, &v);
        legendre.push((t.dual_norm(&x, &l) - fv).abs() / (1.0 + fv));
        legendre.push((l.dot(&v) - fv * fv).abs() / (1.0 + fv * fv));
        inverse.push((t.legendre_inv(&x, &l) - &v).norm() / (1.0 + v.norm()));
    }
    Ok(Report::combine(
        "legendre_consistency",
        &[
            homogeneity.report("homogeneity", 1e-12),
            pairing.report("duality_pairing", 1e-12),
            legendre.report("legendre_identities", 1e-9),
            inverse.report("legendre_inverse", 1e-8),
        ],
    ))
}

/// Maximize `ζ(v)` over `F(x, v) = 1` by brute force on a direction grid in
/// the plane, refined around the best direction. Used to cross-check the
/// closed-form and numeric dual norms in two dimensions.
pub fn dual_norm_by_search(t: &dyn TangentStructure, x: &Point, zeta: &Point) -> f64 {
    assert_eq!(zeta.len(), 2, "direction search is planar");
    let value = |a: f64| {
        let u = DVector::from_vec(vec![a.cos(), a.sin()]);
        zeta.dot(&u) / t.norm(x, &u)
    };
    let n = 3600;
    let mut best_a = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let a = std::f64::consts::TAU * i as f64 / n as f64;
        let v = value(a);
        if v > best {
            best = v;
            best_a = a;
        }
    }
    let step = std::f64::consts::TAU / n as f64;
    let (mut lo, mut hi) = (best_a - step, best_a + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if value(a) > value(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best.max(value(0.5 * (lo + hi)))
}
