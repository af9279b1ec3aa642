//! Asymmetric metric spaces: the space handle, symmetrization, the reverse
//! metric, and a sampling harness that checks the distance axioms.
//!
//! A space here is a coordinate chart `R^n ⊇ domain` together with a
//! distance oracle `d(x, y)` that need not be symmetric. The reversibility
//! of the distance on forward balls `B⁺_⋆(r) = {y : d(⋆, y) < r}` is bounded
//! by the oracle [`AsymmetricSpace::theta`], which is allowed to grow with
//! `r` (the Funk ball has unbounded reversibility).

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, Result};
use crate::spaces::TangentStructure;

/// Coordinates of a point in a chart. Functions that accept points check
/// `in_domain` at their boundary.
pub type Point = DVector<f64>;

/// An asymmetric distance on a coordinate domain.
pub trait AsymmetricSpace: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// `d(x, y)`; not necessarily equal to `d(y, x)`.
    fn distance(&self, x: &Point, y: &Point) -> f64;

    fn in_domain(&self, x: &Point) -> bool {
        x.len() == self.dim() && x.iter().all(|c| c.is_finite())
    }

    /// The marked point `⋆` of the pointed space.
    fn base_point(&self) -> Point {
        Point::zeros(self.dim())
    }

    /// Upper bound for the reversibility on the forward ball `B⁺_⋆(r)`.
    fn theta(&self, r: f64) -> f64;

    /// A global reversibility bound when the space is a θ-metric space.
    fn global_theta(&self) -> Option<f64> {
        None
    }

    fn tangent(&self) -> Option<&dyn TangentStructure> {
        None
    }

    /// Gradient of `y ↦ d(x, y)` for `y ≠ x`, when known in closed form.
    fn distance_grad(&self, _x: &Point, _y: &Point) -> Option<Point> {
        None
    }

    /// Constant forward speed minimal geodesic from `x0` to `x1`, evaluated
    /// at `t ∈ [0, 1]`.
    fn geodesic(&self, _x0: &Point, _x1: &Point, _t: f64) -> Option<Point> {
        None
    }

    /// Half-width of the coordinate box used for rejection sampling.
    fn sampling_radius(&self) -> f64 {
        2.0
    }
}

/// Shared, immutable handle to a space.
pub type SpaceHandle = Arc<dyn AsymmetricSpace>;

impl fmt::Debug for dyn AsymmetricSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(dim={})", self.name(), self.dim())
    }
}

pub fn ensure_in_domain(space: &dyn AsymmetricSpace, x: &Point) -> Result<()> {
    if space.in_domain(x) {
        Ok(())
    } else {
        Err(FlowError::domain(&space.name(), x))
    }
}

/// `(d(x, y) + d(y, x)) / 2`.
pub fn symmetrized_distance(space: &dyn AsymmetricSpace, x: &Point, y: &Point) -> Result<f64> {
    ensure_in_domain(space, x)?;
    ensure_in_domain(space, y)?;
    Ok(0.5 * (space.distance(x, y) + space.distance(y, x)))
}

/// The space with `d'(x, y) = d(y, x)`.
pub struct Reversed {
    inner: SpaceHandle,
    tangent: Option<ReversedTangent>,
}

struct ReversedTangent {
    inner: SpaceHandle,
}

impl TangentStructure for ReversedTangent {
    fn norm(&self, x: &Point, v: &Point) -> f64 {
        self.inner.tangent().unwrap().norm(x, &-v)
    }

    fn norm_grad(&self, x: &Point, v: &Point) -> Point {
        -self.inner.tangent().unwrap().norm_grad(x, &-v)
    }

    fn dual_norm(&self, x: &Point, zeta: &Point) -> f64 {
        self.inner.tangent().unwrap().dual_norm(x, &-zeta)
    }

    fn legendre(&self, x: &Point, v: &Point) -> Point {
        -self.inner.tangent().unwrap().legendre(x, &-v)
    }

    fn legendre_inv(&self, x: &Point, zeta: &Point) -> Point {
        -self.inner.tangent().unwrap().legendre_inv(x, &-zeta)
    }

    fn is_smooth(&self) -> bool {
        self.inner.tangent().is_some_and(|t| t.is_smooth())
    }
}

impl AsymmetricSpace for Reversed {
    fn name(&self) -> String {
        format!("reverse({})", self.inner.name())
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        self.inner.distance(y, x)
    }

    fn in_domain(&self, x: &Point) -> bool {
        self.inner.in_domain(x)
    }

    fn base_point(&self) -> Point {
        self.inner.base_point()
    }

    // Forward balls of the reverse are backward balls of the original, on
    // which only a global bound survives.
    fn theta(&self, _r: f64) -> f64 {
        self.inner.global_theta().unwrap_or(f64::INFINITY)
    }

    fn global_theta(&self) -> Option<f64> {
        self.inner.global_theta()
    }

    fn tangent(&self) -> Option<&dyn TangentStructure> {
        self.tangent.as_ref().map(|t| t as &dyn TangentStructure)
    }

    fn geodesic(&self, x0: &Point, x1: &Point, t: f64) -> Option<Point> {
        self.inner.geodesic(x1, x0, 1.0 - t)
    }

    fn sampling_radius(&self) -> f64 {
        self.inner.sampling_radius()
    }
}

pub fn reverse_metric(space: &SpaceHandle) -> SpaceHandle {
    let tangent = space.tangent().map(|_| ReversedTangent {
        inner: space.clone(),
    });
    Arc::new(Reversed {
        inner: space.clone(),
        tangent,
    })
}

type DistanceFn = dyn Fn(&Point, &Point) -> f64 + Send + Sync;
type DomainFn = dyn Fn(&Point) -> bool + Send + Sync;
type ThetaFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A space assembled from closures, for user-supplied distances.
pub struct FnSpace {
    name: String,
    dim: usize,
    distance: Box<DistanceFn>,
    domain: Box<DomainFn>,
    theta: Box<ThetaFn>,
    sampling_radius: f64,
}

impl FnSpace {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        distance: impl Fn(&Point, &Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnSpace {
            name: name.into(),
            dim,
            distance: Box::new(distance),
            domain: Box::new(|_| true),
            theta: Box::new(|_| 1.0),
            sampling_radius: 2.0,
        }
    }

    pub fn with_domain(mut self, f: impl Fn(&Point) -> bool + Send + Sync + 'static) -> Self {
        self.domain = Box::new(f);
        self
    }

    pub fn with_theta(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.theta = Box::new(f);
        self
    }

    pub fn with_sampling_radius(mut self, r: f64) -> Self {
        self.sampling_radius = r;
        self
    }
}

impl AsymmetricSpace for FnSpace {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        (self.distance)(x, y)
    }

    fn in_domain(&self, x: &Point) -> bool {
        x.len() == self.dim && (self.domain)(x)
    }

    fn theta(&self, r: f64) -> f64 {
        (self.theta)(r)
    }

    fn sampling_radius(&self) -> f64 {
        self.sampling_radius
    }
}

/// The constant `𝔇(p, ε)` with `(1+ε)aᵖ + 𝔇(p,ε)bᵖ ≥ (a+b)ᵖ` for `a, b ≥ 0`.
pub fn appendix_constant(p: f64, eps: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(FlowError::Parameter(format!("exponent p = {p} must be >= 1")));
    }
    if !(eps > 0.0) {
        return Err(FlowError::Parameter(format!("eps = {eps} must be > 0")));
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    // Evaluated in logarithms: (1+ε)^{1/(p−1)} overflows as p → 1.
    let l = eps.ln_1p();
    let x = l / (p - 1.0);
    let ln_root = if x > 1.0 { x + (-(-x).exp()).ln_1p() } else { x.exp_m1().ln() };
    Ok((l - (p - 1.0) * ln_root).exp())
}

/// Uniform sample in the sampling box, rejected against the domain.
pub fn sample_point(space: &dyn AsymmetricSpace, rng: &mut impl Rng) -> Point {
    let r = space.sampling_radius();
    loop {
        let x = Point::from_fn(space.dim(), |_, _| rng.gen_range(-r..r));
        if space.in_domain(&x) {
            return x;
        }
    }
}

/// Sample from `B⁺_⋆(radius)`; `None` when rejection keeps failing.
pub fn sample_in_forward_ball(
    space: &dyn AsymmetricSpace,
    radius: f64,
    rng: &mut impl Rng,
) -> Option<Point> {
    let star = space.base_point();
    (0..10_000)
        .map(|_| sample_point(space, rng))
        .find(|x| space.distance(&star, x) < radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub n_samples: usize,
    /// Largest `d(x,z) - d(x,y) - d(y,z)` beyond rounding slack.
    pub max_triangle_violation: f64,
    /// Largest `d(x,y) - θ(r) d(y,x)` over pairs in sampled forward balls.
    pub max_reversibility_violation: f64,
    /// Largest `|d(x,x)|`, or the shortfall of `d(x,y) > 0` for `x ≠ y`.
    pub max_identity_violation: f64,
    pub identity_failures: usize,
}

impl AxiomReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_triangle_violation <= tol
            && self.max_reversibility_violation <= tol
            && self.max_identity_violation <= tol
            && self.identity_failures == 0
    }
}

/// Radii of the forward balls on which reversibility is sampled.
const BALL_RADII: [f64; 3] = [0.5, 1.0, 2.0];

/// Seeded sampling check of the asymmetric-metric axioms. Violations are
/// measured relative to `1 + |d(x,y)| + |d(y,z)|` so that rounding in large
/// distances is not reported.
pub fn check_axioms(space: &dyn AsymmetricSpace, n_samples: usize, seed: u64) -> AxiomReport {
    let n_samples = n_samples.max(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AxiomReport {
        n_samples,
        max_triangle_violation: 0.0,
        max_reversibility_violation: 0.0,
        max_identity_violation: 0.0,
        identity_failures: 0,
    };

    for _ in 0..n_samples {
        let x = sample_point(space, &mut rng);
        let y = sample_point(space, &mut rng);
        let z = sample_point(space, &mut rng);
        let dxy = space.distance(&x, &y);
        let dyz = space.distance(&y, &z);
        let dxz = space.distance(&x, &z);
        let scale = 1.0 + dxy.abs() + dyz.abs();
        let excess = (dxz - dxy - dyz) / scale;
        if excess.is_nan() {
            report.max_triangle_violation = f64::INFINITY;
        } else {
            report.max_triangle_violation = report.max_triangle_violation.max(excess);
        }

        let dxx = space.distance(&x, &x);
        if dxx.abs() > 0.0 {
            report.max_identity_violation = report.max_identity_violation.max(dxx.abs());
            report.identity_failures += 1;
        }
        if x != y && !(dxy > 0.0) {
            report.max_identity_violation = report.max_identity_violation.max(-dxy);
            report.identity_failures += 1;
        }
    }

    let per_ball = (n_samples / BALL_RADII.len()).max(1);
    for &r in &BALL_RADII {
        let theta = space.theta(r);
        for _ in 0..per_ball {
            let (Some(x), Some(y)) = (
                sample_in_forward_ball(space, r, &mut rng),
                sample_in_forward_ball(space, r, &mut rng),
            ) else {
                break;
            };
            let dxy = space.distance(&x, &y);
            let dyx = space.distance(&y, &x);
            let excess = (dxy - theta * dyx) / (1.0 + dxy.abs());
            if excess.is_finite() {
                report.max_reversibility_violation = report.max_reversibility_violation.max(excess);
            }
        }
    }
    report
}
