//! Potentials `φ: X → R ∪ {+∞}` and the built-in registry.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::metric::{Point, SpaceHandle};

/// A claimed `(p, λ)`-convexity modulus along the space's geodesics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub p: f64,
    pub lambda: f64,
}

/// Convex subdifferential of a potential at a point, in coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Subdifferential {
    Single(Point),
    /// `∏ [lo_i, hi_i]`.
    Box { lo: Point, hi: Point },
    /// Closed Euclidean ball.
    Ball { center: Point, radius: f64 },
}

impl Subdifferential {
    pub fn contains_zero(&self) -> bool {
        match self {
            Subdifferential::Single(g) => g.iter().all(|c| *c == 0.0),
            Subdifferential::Box { lo, hi } => lo.iter().zip(hi.iter()).all(|(l, h)| *l <= 0.0 && *h >= 0.0),
            Subdifferential::Ball { center, radius } => center.norm() <= *radius,
        }
    }

    pub fn project(&self, g: &Point) -> Point {
        match self {
            Subdifferential::Single(c) => c.clone(),
            Subdifferential::Box { lo, hi } => Point::from_fn(g.len(), |i, _| g[i].clamp(lo[i], hi[i])),
            Subdifferential::Ball { center, radius } => {
                let d = g - center;
                let n = d.norm();
                if n <= *radius {
                    g.clone()
                } else {
                    center + d * (radius / n)
                }
            }
        }
    }

    /// Some element, used as a starting point.
    pub fn center(&self) -> Point {
        match self {
            Subdifferential::Single(c) => c.clone(),
            Subdifferential::Box { lo, hi } => (lo + hi) * 0.5,
            Subdifferential::Ball { center, .. } => center.clone(),
        }
    }

    /// `{v + ζ : ζ ∈ self}`.
    pub fn translate(&self, v: &Point) -> Self {
        match self {
            Subdifferential::Single(c) => Subdifferential::Single(c + v),
            Subdifferential::Box { lo, hi } => Subdifferential::Box { lo: lo + v, hi: hi + v },
            Subdifferential::Ball { center, radius } => Subdifferential::Ball {
                center: center + v,
                radius: *radius,
            },
        }
    }

    /// `{−ζ : ζ ∈ self}`.
    pub fn negate(&self) -> Self {
        match self {
            Subdifferential::Single(c) => Subdifferential::Single(-c),
            Subdifferential::Box { lo, hi } => Subdifferential::Box { lo: -hi, hi: -lo },
            Subdifferential::Ball { center, radius } => Subdifferential::Ball {
                center: -center,
                radius: *radius,
            },
        }
    }

    /// Euclidean distance from `-g` to the set, i.e. the smallest `|g + ζ|`.
    pub fn stationarity_gap(&self, g: &Point) -> f64 {
        let target = -g;
        (self.project(&target) - target).norm()
    }
}

/// The evaluation side of a potential.
pub trait Functional: Send + Sync {
    fn name(&self) -> String;

    /// `+∞` off the effective domain.
    fn value(&self, x: &Point) -> f64;

    /// Coordinate differential where it exists; `None` at kinks.
    fn differential(&self, x: &Point) -> Option<Point>;

    /// Whether the functional is differentiable everywhere.
    fn is_smooth(&self) -> bool {
        true
    }

    fn subdifferential(&self, x: &Point) -> Option<Subdifferential> {
        self.differential(x).map(Subdifferential::Single)
    }

    /// Hyperplanes `{x_i = c}` carrying the non-smooth set.
    fn kink_hyperplanes(&self) -> Vec<(usize, f64)> {
        Vec::new()
    }

    /// Isolated non-smooth points in `R^dim`.
    fn kink_points(&self, _dim: usize) -> Vec<Point> {
        Vec::new()
    }
}

/// A potential together with the metadata used by the diagnostics.
#[derive(Clone)]
pub struct Potential {
    inner: Arc<dyn Functional>,
    /// Exponent of the flow (`p` in `d^p / (p τ^{p−1})`).
    pub p: f64,
    pub certificate: Option<Certificate>,
    pub known_inf: Option<f64>,
    pub known_minimizer: Option<Point>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name())
            .field("p", &self.p)
            .field("certificate", &self.certificate)
            .field("known_inf", &self.known_inf)
            .finish()
    }
}

impl Potential {
    pub fn new(inner: impl Functional + 'static) -> Self {
        Potential {
            inner: Arc::new(inner),
            p: 2.0,
            certificate: None,
            known_inf: None,
            known_minimizer: None,
        }
    }

    pub fn with_exponent(mut self, p: f64) -> Self {
        self.p = p;
        if let Some(c) = &mut self.certificate {
            c.p = p;
        }
        self
    }

    pub fn with_certificate(mut self, lambda: f64) -> Self {
        self.certificate = Some(Certificate { p: self.p, lambda });
        self
    }

    pub fn without_certificate(mut self) -> Self {
        self.certificate = None;
        self
    }

    pub fn with_known_inf(mut self, inf: f64) -> Self {
        self.known_inf = Some(inf);
        self
    }

    pub fn with_known_minimizer(mut self, x: Point) -> Self {
        self.known_minimizer = Some(x);
        self
    }

    pub fn name(&self) -> String {
        self.inner.name()
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.inner.value(x)
    }

    pub fn differential(&self, x: &Point) -> Option<Point> {
        self.inner.differential(x)
    }

    pub fn is_smooth(&self) -> bool {
        self.inner.is_smooth()
    }

    pub fn subdifferential(&self, x: &Point) -> Option<Subdifferential> {
        self.inner.subdifferential(x)
    }

    pub fn kink_hyperplanes(&self) -> Vec<(usize, f64)> {
        self.inner.kink_hyperplanes()
    }

    pub fn kink_points(&self, dim: usize) -> Vec<Point> {
        self.inner.kink_points(dim)
    }

    pub fn lambda(&self) -> Option<f64> {
        self.certificate.map(|c| c.lambda)
    }

    /// `½|x − c|²`.
    pub fn quadratic(center: Point) -> Self {
        Potential::new(Quadratic {
            center: center.clone(),
        })
        .with_known_inf(0.0)
        .with_known_minimizer(center)
    }

    /// `⟨c, x⟩`.
    pub fn linear(c: Point) -> Self {
        Potential::new(Linear { c })
    }

    /// `⟨c, x⟩ + (μ/2)|x|²`, minimized at `−c/μ`.
    pub fn linear_plus_quadratic(c: Point, mu: f64) -> Self {
        let xbar = &c * (-1.0 / mu);
        let inf = -c.norm_squared() / (2.0 * mu);
        Potential::new(LinearQuadratic { c, mu })
            .with_known_inf(inf)
            .with_known_minimizer(xbar)
    }

    /// `½ d(c, ·)²`.
    pub fn squared_distance(space: SpaceHandle, center: Point) -> Self {
        Potential::new(SquaredDistance {
            space,
            center: center.clone(),
        })
        .with_known_inf(0.0)
        .with_known_minimizer(center)
    }

    /// `w · (−log(1 − |x|))`, the forward Funk distance from the origin.
    pub fn funk_log(weight: f64) -> Self {
        Potential::new(FunkLog { weight })
            .with_known_inf(0.0)
    }

    /// `w|x_0| + ½|x − c|²`.
    pub fn l1_split(weight: f64, center: Point) -> Self {
        let mut weights = DVector::zeros(center.len());
        weights[0] = weight;
        Self::l1_split_weighted(weights, center)
    }

    /// `Σ w_i|x_i| + ½|x − c|²`, minimized by soft thresholding.
    pub fn l1_split_weighted(weights: DVector<f64>, center: Point) -> Self {
        let xbar = Point::from_fn(center.len(), |i, _| {
            center[i].signum() * (center[i].abs() - weights[i]).max(0.0)
        });
        let split = L1Split { weights, center };
        let inf = split.value(&xbar);
        Potential::new(split).with_known_inf(inf).with_known_minimizer(xbar)
    }

    pub fn constant(value: f64) -> Self {
        Potential::new(Constant { value }).with_known_inf(value).with_certificate(0.0)
    }

    /// A smooth potential given by closures; the differential is taken by
    /// central differences when not supplied.
    pub fn from_fn(
        name: impl Into<String>,
        value: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        differential: Option<Box<DiffFn>>,
    ) -> Self {
        Potential::new(FnFunctional {
            name: name.into(),
            value: Box::new(value),
            differential,
        })
    }
}

struct Quadratic {
    center: Point,
}

impl Functional for Quadratic {
    fn name(&self) -> String {
        "quadratic".into()
    }

    fn value(&self, x: &Point) -> f64 {
        0.5 * (x - &self.center).norm_squared()
    }

    fn differential(&self, x: &Point) -> Option<Point> {
        Some(x - &self.center)
    }
}

struct Linear {
    c: Point,
}

impl Functional for Linear {
    fn name(&self) -> String {
        "linear".into()
    }

    fn value(&self, x: &Point) -> f64 {
        self.c.dot(x)
    }

    fn differential(&self, _x: &Point) -> Option<Point> {
        Some(self.c.clone())
    }
}

struct LinearQuadratic {
    c: Point,
    mu: f64,
}

impl Functional for LinearQuadratic {
    fn name(&self) -> String {
        "linear_quadratic".into()
    }

    fn value(&self, x: &Point) -> f64 {
        self.c.dot(x) + 0.5 * self.mu * x.norm_squared()
    }

    fn differential(&self, x: &Point) -> Option<Point> {
        Some(&self.c + x * self.mu)
    }
}

struct SquaredDistance {
    space: SpaceHandle,
    center: Point,
}

impl Functional for SquaredDistance {
    fn name(&self) -> String {
        format!("squared_distance[{}]", self.space.name())
    }

    fn value(&self, x: &Point) -> f64 {
        if !self.space.in_domain(x) {
            return f64::INFINITY;
        }
        0.5 * self.space.distance(&self.center, x).powi(2)
    }

    fn differential(&self, x: &Point) -> Option<Point> {
        if !self.space.in_domain(x) {
            return None;
        }
        let d = self.space.distance(&self.center, x);
        if d == 0.0 {
            return Some(Point::zeros(x.len()));
        }
        let g = self.space.distance_grad(&self.center, x).or_else(|| {
            let h = 1e-7 * (1.0 + x.norm());
            Some(Point::from_fn(x.len(), |i, _| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                (self.space.distance(&self.center, &xp) - self.space.distance(&self.center, &xm))
                    / (2.0 * h)
            }))
        })?;
        Some(g * d)
    }
}

struct FunkLog {
    weight: f64,
}

impl Functional for FunkLog {
    fn name(&self) -> String {
        "funk_log".into()
    }

    fn value(&self, x: &Point) -> f64 {
        let r = x.norm();
        if r >= 1.0 {
            return f64::INFINITY;
        }
        -self.weight * (-r).ln_1p()
    }

    fn differential(&self, x: &Point) -> Option<Point> {
        let r = x.norm();
        (r > 0.0 && r < 1.0).then(|| x * (self.weight / (r * (1.0 - r))))
    }

    fn is_smooth(&self) -> bool {
        false
    }

    fn subdifferential(&self, x: &Point) -> Option<Subdifferential> {
        if x.norm() == 0.0 {
            Some(Subdifferential::Ball {
                center: Point::zeros(x.len()),
                radius: self.weight,
            })
        } else {
            self.differential(x).map(Subdifferential::Single)
        }
    }

    fn kink_points(&self, dim: usize) -> Vec<Point> {
        vec![Point::zeros(dim)]
    }
}

struct L1Split {
    weights: DVector<f64>,
    center: Point,
}

impl Functional for L1Split {
    fn name(&self) -> String {
        "l1_split".into()
    }

    fn value(&self, x: &Point) -> f64 {
        self.weights.dot(&x.abs()) + 0.5 * (x - &self.center).norm_squared()
    }

    fn differential(&self, x: &Point) -> Option<Point> {
        if (0..x.len()).any(|i| self.weights[i] > 0.0 && x[i] == 0.0) {
            return None;
        }
        Some(x - &self.center + self.weights.component_mul(&x.map(f64::signum)))
    }

    fn is_smooth(&self) -> bool {
        self.weights.iter().all(|w| *w == 0.0)
    }

    fn subdifferential(&self, x: &Point) -> Option<Subdifferential> {
        let smooth = x - &self.center;
        let lo = Point::from_fn(x.len(), |i, _| {
            let w = self.weights[i];
            smooth[i] + if x[i] == 0.0 { -w } else { w * x[i].signum() }
        });
        let hi = Point::from_fn(x.len(), |i, _| {
            let w = self.weights[i];
            smooth[i] + if x[i] == 0.0 { w } else { w * x[i].signum() }
        });
        Some(Subdifferential::Box { lo, hi })
    }

    fn kink_hyperplanes(&self) -> Vec<(usize, f64)> {
        (0..self.weights.len())
            .filter(|i| self.weights[*i] > 0.0)
            .map(|i| (i, 0.0))
            .collect()
    }
}

struct Constant {
    value: f64,
}

impl Functional for Constant {
    fn name(&self) -> String {
        "constant".into()
    }

    fn value(&self, _x: &Point) -> f64 {
        self.value
    }

    fn differential(&self, x: &Point) -> Option<Point> {
        Some(Point::zeros(x.len()))
    }
}

type ValueFn = dyn Fn(&Point) -> f64 + Send + Sync;
type DiffFn = dyn Fn(&Point) -> Point + Send + Sync;

struct FnFunctional {
    name: String,
    value: Box<ValueFn>,
    differential: Option<Box<DiffFn>>,
}

impl Functional for FnFunctional {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    fn differential(&self, x: &Point) -> Option<Point> {
        if let Some(d) = &self.differential {
            return Some(d(x));
        }
        let h = 1e-6 * (1.0 + x.norm());
        let g = Point::from_fn(x.len(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            ((self.value)(&xp) - (self.value)(&xm)) / (2.0 * h)
        });
        g.iter().all(|c| c.is_finite()).then_some(g)
    }
}
