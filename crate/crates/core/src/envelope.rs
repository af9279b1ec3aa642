//! The functional `Φ(τ,x;y) = φ(y) + d(x,y)^p / (p τ^{p−1})`, its infimum
//! (the Moreau–Yosida envelope `Φ_τ`), the resolvent `J_τ`, slopes, and
//! sampled checks of the envelope calculus.

use log::debug;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::metric::{appendix_constant, ensure_in_domain, sample_point, AsymmetricSpace, Point};
use crate::optim::{minimize, NewtonConfig};
use crate::potential::{Potential, Subdifferential};
use crate::report::{Report, Tally};

/// Inner solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative stationarity gap accepted as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of starts: `x` itself plus `n_restarts − 1` perturbations.
    pub n_restarts: usize,
    /// Initial weight of the continuation term `μ d(⋆, y)`; driven to zero.
    pub barrier_strength: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 200,
            n_restarts: 8,
            barrier_strength: 0.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(FlowError::Parameter("solver tolerance must be positive".into()));
        }
        if self.n_restarts == 0 || self.max_iter == 0 {
            return Err(FlowError::Parameter("n_restarts and max_iter must be positive".into()));
        }
        if !(self.barrier_strength >= 0.0) || !self.barrier_strength.is_finite() {
            return Err(FlowError::Parameter("barrier_strength must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub restarts: usize,
    pub converged_restarts: usize,
    /// Relative stationarity gap at the reported minimizer.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ResolventResult {
    pub y_tau: Point,
    /// `Φ_τ(x) = Φ(τ, x; y_τ)`.
    pub phi_tau: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub report: SolverReport,
}

/// `Φ(τ,x;y)`. Returns `+∞` when `φ(y) = +∞`.
pub fn phi_functional(phi: &Potential, space: &dyn AsymmetricSpace, tau: f64, x: &Point, y: &Point) -> Result<f64> {
    check_tau(tau)?;
    ensure_in_domain(space, x)?;
    ensure_in_domain(space, y)?;
    Ok(raw_phi_functional(phi, space, tau, x, y))
}

fn raw_phi_functional(phi: &Potential, space: &dyn AsymmetricSpace, tau: f64, x: &Point, y: &Point) -> f64 {
    let p = phi.p;
    let v = phi.value(y);
    if v == f64::INFINITY {
        return v;
    }
    v + space.distance(x, y).powf(p) / (p * tau.powf(p - 1.0))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(FlowError::Parameter(format!("step size {tau} must be positive and finite")))
    }
}

/// Gradient of `y ↦ d(x, y)`, closed form when available and central
/// differences otherwise. Zero at `y = x`.
pub(crate) fn distance_gradient(space: &dyn AsymmetricSpace, x: &Point, y: &Point) -> Point {
    if x == y {
        return Point::zeros(y.len());
    }
    if let Some(g) = space.distance_grad(x, y) {
        return g;
    }
    let h = 1e-7 * (1.0 + y.norm());
    let d0 = space.distance(x, y);
    Point::from_fn(y.len(), |i, _| {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[i] += h;
        ym[i] -= h;
        match (space.in_domain(&yp), space.in_domain(&ym)) {
            (true, true) => (space.distance(x, &yp) - space.distance(x, &ym)) / (2.0 * h),
            (true, false) => (space.distance(x, &yp) - d0) / h,
            (false, true) => (d0 - space.distance(x, &ym)) / h,
            (false, false) => 0.0,
        }
    })
}

struct Problem<'a> {
    phi: &'a Potential,
    space: &'a dyn AsymmetricSpace,
    tau: f64,
    x: &'a Point,
    mu: f64,
    star: Point,
}

impl Problem<'_> {
    fn p(&self) -> f64 {
        self.phi.p
    }

    fn objective(&self, y: &Point) -> f64 {
        if !self.space.in_domain(y) {
            return f64::INFINITY;
        }
        let mut v = raw_phi_functional(self.phi, self.space, self.tau, self.x, y);
        if self.mu > 0.0 {
            v += self.mu * self.space.distance(&self.star, y);
        }
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Gradient of the distance part `d^p/(pτ^{p−1})` (plus the barrier).
    fn distance_part_grad(&self, y: &Point) -> Point {
        let p = self.p();
        let d = self.space.distance(self.x, y);
        let mut g = if d > 0.0 {
            distance_gradient(self.space, self.x, y) * (d / self.tau).powf(p - 1.0)
        } else {
            Point::zeros(y.len())
        };
        if self.mu > 0.0 {
            g += distance_gradient(self.space, &self.star, y) * self.mu;
        }
        g
    }

    fn phi_grad(&self, y: &Point) -> Point {
        self.phi
            .differential(y)
            .or_else(|| self.phi.subdifferential(y).map(|s| s.center()))
            .unwrap_or_else(|| Point::from_element(y.len(), f64::NAN))
    }

    fn gradient(&self, y: &Point) -> Point {
        if !self.space.in_domain(y) {
            return Point::from_element(y.len(), f64::NAN);
        }
        self.distance_part_grad(y) + self.phi_grad(y)
    }

    /// `dist(−∇D(y), ∂φ(y)) / (1 + |∇D(y)| + |ζ|)` with `ζ` the nearest
    /// subgradient, and the level of that quantity explained by rounding
    /// `y`: `∇D` varies like `(p−1)|∇D|/d` per unit of `y`, which dominates
    /// for tiny steps.
    fn gap(&self, y: &Point) -> (f64, f64) {
        if !self.space.in_domain(y) {
            return (f64::INFINITY, 0.0);
        }
        let gd = self.distance_part_grad(y);
        let set = self
            .phi
            .subdifferential(y)
            .unwrap_or_else(|| Subdifferential::Single(self.phi_grad(y)));
        let zeta = set.project(&-&gd);
        let scale = 1.0 + gd.norm() + zeta.norm();
        let gap = (&gd + &zeta).norm() / scale;
        let d = self.space.distance(self.x, y);
        let floor = if d > 0.0 {
            16.0 * f64::EPSILON * (1.0 + y.norm()) * (self.p() - 1.0).max(1.0) * gd.norm() / (d * scale)
        } else {
            0.0
        };
        if gap.is_nan() {
            (f64::INFINITY, 0.0)
        } else {
            (gap, floor)
        }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    y: Point,
    value: f64,
    gap: f64,
    floor: f64,
}

impl Candidate {
    fn new(problem: &Problem, y: Point, value: f64) -> Self {
        let (gap, floor) = problem.gap(&y);
        Candidate { y, value, gap, floor }
    }
}

fn lexicographic_lt(a: &Point, b: &Point) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn starting_points(phi: &Potential, space: &dyn AsymmetricSpace, tau: f64, x: &Point, cfg: &SolverConfig) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p = phi.p;
    let g = phi
        .differential(x)
        .or_else(|| phi.subdifferential(x).map(|s| s.center()))
        .map(|g| g.norm())
        .filter(|g| g.is_finite())
        .unwrap_or(1.0);
    let scale = 2.0 * (tau * (1.0 + g)).powf(1.0 / (p - 1.0)).min(1.0);
    let mut starts = vec![x.clone()];
    for _ in 1..cfg.n_restarts {
        let u = Point::from_fn(x.len(), |_, _| rng.gen_range(-1.0..1.0));
        let mut y = x + &u * scale;
        for _ in 0..60 {
            if space.in_domain(&y) && phi.value(&y).is_finite() {
                break;
            }
            y = x + (&y - x) * 0.5;
        }
        starts.push(y);
    }
    starts
}

/// Non-empty subsets of the kink hyperplanes to explore as faces.
fn face_subsets(planes: &[(usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let m = planes.len();
    if m == 0 {
        return Vec::new();
    }
    if m > 4 {
        return planes.iter().map(|p| vec![*p]).collect();
    }
    (1..(1usize << m))
        .map(|mask| (0..m).filter(|k| mask & (1 << k) != 0).map(|k| planes[k]).collect())
        .collect()
}

fn solve_stage(problem: &Problem, starts: &[Point], cfg: &SolverConfig, iterations: &mut usize) -> Result<Vec<Candidate>> {
    let n = problem.x.len();
    let newton = NewtonConfig {
        grad_tol: 1e-14,
        arg_tol: 1e-15,
        obj_tol: 1e-16,
        max_iter: cfg.max_iter,
    };
    let faces = face_subsets(&problem.phi.kink_hyperplanes());
    let f = |y: &Point| problem.objective(y);
    let g = |y: &Point| problem.gradient(y);
    let mut out = Vec::new();

    let mut runs: Vec<(Point, Vec<usize>)> = Vec::new();
    for s in starts {
        runs.push((s.clone(), (0..n).collect()));
        for face in &faces {
            let mut y = s.clone();
            for (i, c) in face {
                y[*i] = *c;
            }
            let free = (0..n).filter(|i| !face.iter().any(|(j, _)| j == i)).collect();
            runs.push((y, free));
        }
    }
    for (start, free) in runs {
        if !problem.objective(&start).is_finite() {
            continue;
        }
        let res = minimize(f, g, &start, &free, &newton);
        *iterations += res.iterations;
        if res.diverged {
            return Err(FlowError::Coercivity {
                tau: problem.tau,
                detail: format!("objective reached {:e} at |y| = {:e}", res.value, res.x.amax()),
            });
        }
        out.push(Candidate::new(problem, res.x, res.value));
    }
    for k in problem.phi.kink_points(n) {
        let value = problem.objective(&k);
        if value.is_finite() {
            out.push(Candidate::new(problem, k, value));
        }
    }
    Ok(out)
}

/// Computes a minimizer of `Φ(τ, x; ·)` by multi-start damped Newton.
///
/// Each start is also projected onto the faces spanned by the potential's
/// kink hyperplanes, and kink points are tried directly. The reported
/// minimizer is the converged candidate with the smallest objective, ties
/// (within `1e−12`) going to the lexicographically smallest point; `d_plus`
/// and `d_minus` bracket `d(x, ·)` over the tied candidates.
pub fn resolvent(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    tau: f64,
    x: &Point,
    cfg: &SolverConfig,
) -> Result<ResolventResult> {
    check_tau(tau)?;
    cfg.validate()?;
    ensure_in_domain(space, x)?;
    if !(phi.p > 1.0) {
        return Err(FlowError::Parameter(format!("exponent p = {} must be > 1", phi.p)));
    }

    let mut starts = starting_points(phi, space, tau, x, cfg);
    let n_starts = starts.len();
    let mut iterations = 0;
    let mut mus = Vec::new();
    if cfg.barrier_strength > 0.0 {
        mus.extend((0..4).map(|k| cfg.barrier_strength * 10f64.powi(-k)));
    }
    mus.push(0.0);

    let mut candidates = Vec::new();
    for (stage, mu) in mus.iter().enumerate() {
        let problem = Problem {
            phi,
            space,
            tau,
            x,
            mu: *mu,
            star: space.base_point(),
        };
        candidates = solve_stage(&problem, &starts, cfg, &mut iterations)?;
        if stage + 1 < mus.len() {
            starts = candidates.iter().map(|c| c.y.clone()).collect();
            starts.truncate(n_starts);
        }
    }

    if let Some(c) = candidates.iter().find(|c| c.value < -1e12) {
        return Err(FlowError::Coercivity {
            tau,
            detail: format!("objective value {:e}", c.value),
        });
    }

    let converged: Vec<&Candidate> = candidates.iter().filter(|c| c.gap <= cfg.tol.max(c.floor)).collect();
    if converged.is_empty() {
        let best = candidates
            .iter()
            .filter(|c| c.value.is_finite())
            .min_by(|a, b| a.value.total_cmp(&b.value));
        let (best, objective, gap) = match best {
            Some(c) => (c.y.clone(), c.value, c.gap),
            None => (x.clone(), f64::INFINITY, f64::INFINITY),
        };
        return Err(FlowError::Convergence {
            best,
            objective,
            gap,
            restarts: n_starts,
        });
    }

    let best_value = converged.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * (1.0 + best_value.abs());
    let tied: Vec<&&Candidate> = converged.iter().filter(|c| c.value <= best_value + tie).collect();
    let mut chosen = tied[0];
    for c in &tied[1..] {
        if lexicographic_lt(&c.y, &chosen.y) {
            chosen = c;
        }
    }
    let dists: Vec<f64> = tied.iter().map(|c| space.distance(x, &c.y)).collect();
    let d_plus = dists.iter().copied().fold(0.0, f64::max);
    let d_minus = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let y = chosen.y.clone();
    let phi_tau = raw_phi_functional(phi, space, tau, x, &y);
    debug!(
        "resolvent tau={tau:e}: {} of {} candidates converged, gap {:e}",
        converged.len(),
        candidates.len(),
        chosen.gap
    );
    Ok(ResolventResult {
        y_tau: y,
        phi_tau,
        d_plus,
        d_minus,
        report: SolverReport {
            iterations,
            restarts: n_starts,
            converged_restarts: converged.len(),
            gap: chosen.gap,
        },
    })
}

/// `Φ_τ(x)`.
pub fn moreau_yosida(phi: &Potential, space: &dyn AsymmetricSpace, tau: f64, x: &Point, cfg: &SolverConfig) -> Result<f64> {
    resolvent(phi, space, tau, x, cfg).map(|r| r.phi_tau)
}

/// Slack used by the envelope monotonicity chains.
pub const MONOTONICITY_SLACK: f64 = 1e-7;

/// Checks, for consecutive `τ₀ < τ₁` in `taus`, that `φ(x) ≥ Φ_{τ₀}(x) ≥
/// Φ_{τ₁}(x)`, `d(x, y_{τ₀}) ≤ d(x, y_{τ₁})` and `φ(y_{τ₀}) ≥ φ(y_{τ₁})`.
pub fn envelope_monotonicity_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x: &Point,
    taus: &[f64],
    cfg: &SolverConfig,
) -> Result<Report> {
    if !taus.windows(2).all(|w| w[0] < w[1]) {
        return Err(FlowError::Parameter("tau list must be increasing".into()));
    }
    let phi_x = phi.value(x);
    let results = taus
        .iter()
        .map(|t| resolvent(phi, space, *t, x, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut tally = Tally::default();
    if let Some(first) = results.first() {
        tally.push(first.phi_tau - phi_x);
    }
    for w in results.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        tally.push(b.phi_tau - a.phi_tau);
        tally.push(space.distance(x, &a.y_tau) - space.distance(x, &b.y_tau));
        tally.push(a.d_plus - b.d_minus);
        tally.push(phi.value(&b.y_tau) - phi.value(&a.y_tau));
    }
    Ok(tally.report("envelope_monotonicity", MONOTONICITY_SLACK))
}

/// Compares a central difference of `τ ↦ Φ_τ(x)` with
/// `−((p−1)/p)(d(x, y_τ)/τ)^p`.
pub fn envelope_derivative_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x: &Point,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<Report> {
    check_tau(tau)?;
    let p = phi.p;
    let h = 1e-3 * tau;
    let plus = moreau_yosida(phi, space, tau + h, x, cfg)?;
    let minus = moreau_yosida(phi, space, tau - h, x, cfg)?;
    let fd = (plus - minus) / (2.0 * h);
    let r = resolvent(phi, space, tau, x, cfg)?;
    let exact = -(p - 1.0) / p * (space.distance(x, &r.y_tau) / tau).powf(p);
    let violation = (fd - exact).abs() / (1.0 + exact.abs());
    Ok(Report::from_violation("envelope_derivative", violation, 1, 1e-4))
}

/// Local slope estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlopeConfig {
    pub n_directions: usize,
    /// Geometric sequence of radii, largest first.
    pub radii: Vec<f64>,
}

impl Default for SlopeConfig {
    fn default() -> Self {
        SlopeConfig {
            n_directions: 64,
            radii: vec![1e-2, 5e-3, 2.5e-3],
        }
    }
}

/// Quasi-uniform unit directions: equally spaced angles in the plane, a
/// Fibonacci lattice in three dimensions, seeded Gaussian samples beyond.
pub(crate) fn sphere_directions(dim: usize, count: usize) -> Vec<Point> {
    match dim {
        1 => vec![Point::from_element(1, 1.0), Point::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                Point::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    Point::from_vec(vec![r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
            (0..count)
                .map(|_| {
                    let v = Point::from_fn(dim, |_, _| {
                        let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
                        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    });
                    let n = v.norm();
                    v / n
                })
                .collect()
        }
    }
}

/// Maximizes `score` over unit directions: best of the seeds, then a
/// compass search on the sphere.
fn maximize_on_sphere(seeds: &[Point], mut score: impl FnMut(&Point) -> f64) -> (Point, f64) {
    let mut best = seeds[0].clone();
    let mut best_val = f64::NEG_INFINITY;
    for u in seeds {
        let v = score(u);
        if v > best_val {
            best_val = v;
            best = u.clone();
        }
    }
    if !best_val.is_finite() {
        return (best, best_val);
    }
    let dim = best.len();
    let mut step = 0.2;
    while step > 1e-10 {
        let mut improved = false;
        for k in 0..dim {
            for sign in [1.0, -1.0] {
                let mut u = best.clone();
                u[k] += sign * step;
                let n = u.norm();
                if n == 0.0 {
                    continue;
                }
                u /= n;
                let v = score(&u);
                if v > best_val {
                    best_val = v;
                    best = u;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, best_val)
}

fn descent_ratio(phi: &Potential, space: &dyn AsymmetricSpace, x: &Point, phi_x: f64, y: &Point) -> f64 {
    if !space.in_domain(y) {
        return f64::NEG_INFINITY;
    }
    let d = space.distance(x, y);
    let v = phi.value(y);
    if !(d > 0.0) || !v.is_finite() {
        return f64::NEG_INFINITY;
    }
    (phi_x - v) / d
}

/// Richardson extrapolation of `s(r)` to `r = 0` on a geometric sequence of
/// radii, assuming `s(r) = s₀ + a r + b r² + …`.
fn richardson(radii: &[f64], values: &[f64]) -> f64 {
    let mut table: Vec<f64> = values.to_vec();
    let mut order = 1;
    while table.len() > 1 {
        let next: Vec<f64> = (0..table.len() - 1)
            .map(|i| {
                let rho = (radii[i] / radii[i + 1]).powi(order);
                (rho * table[i + 1] - table[i]) / (rho - 1.0)
            })
            .collect();
        table = next;
        order += 1;
    }
    table[0]
}

/// `limsup_{y→x} [φ(x) − φ(y)]₊ / d(x, y)` estimated from direction samples
/// at shrinking radii with Richardson extrapolation.
pub fn local_slope(phi: &Potential, space: &dyn AsymmetricSpace, x: &Point, cfg: &SlopeConfig) -> f64 {
    let phi_x = phi.value(x);
    if !phi_x.is_finite() {
        return f64::INFINITY;
    }
    let dirs = sphere_directions(x.len(), cfg.n_directions.max(4));
    let values: Vec<f64> = cfg
        .radii
        .iter()
        .map(|&r| {
            let (_, v) = maximize_on_sphere(&dirs, |u| descent_ratio(phi, space, x, phi_x, &(x + u * r)));
            if v.is_finite() {
                v
            } else {
                0.0
            }
        })
        .collect();
    if values.iter().all(|v| *v <= 0.0) {
        return 0.0;
    }
    richardson(&cfg.radii, &values).max(0.0)
}

/// The covector `ζ ∈ ∂φ(x)` minimizing `F*(x, −ζ)`, together with that
/// minimal value.
pub fn min_dual_subgradient(space: &dyn AsymmetricSpace, x: &Point, set: &Subdifferential) -> Option<(Point, f64)> {
    let t = space.tangent()?;
    if let Subdifferential::Single(g) = set {
        return Some((g.clone(), t.dual_norm(x, &-g)));
    }
    if set.contains_zero() {
        return Some((Point::zeros(x.len()), 0.0));
    }
    let h = |z: &Point| t.dual_norm(x, &-z);
    let mut z = set.project(&Point::zeros(x.len()));
    let mut hz = h(&z);
    let mut step = 1.0;
    for _ in 0..2000 {
        let eta = -&z;
        let v = t.legendre_inv(x, &eta);
        let fs = t.dual_norm(x, &eta);
        if !(fs > 0.0) {
            break;
        }
        // ∇_ζ F*(x, −ζ) = −𝔏⁻¹(−ζ)/F*(−ζ).
        let grad = -v / fs;
        let mut moved = false;
        for _ in 0..60 {
            let cand = set.project(&(&z - &grad * step));
            let hc = h(&cand);
            if hc < hz {
                let delta = (&cand - &z).norm();
                z = cand;
                hz = hc;
                moved = delta > 1e-15 * (1.0 + z.norm());
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Some((z, hz))
}

/// `|∂φ|(x)`: `F*(x, −∂°φ(x))` when the space has a tangent structure and
/// the subdifferential is known, the numeric [`local_slope`] otherwise.
pub fn slope(phi: &Potential, space: &dyn AsymmetricSpace, x: &Point) -> f64 {
    if space.tangent().is_some() {
        if let Some(set) = phi.subdifferential(x) {
            if let Some((_, v)) = min_dual_subgradient(space, x, &set) {
                return v;
            }
        }
    }
    local_slope(phi, space, x, &SlopeConfig::default())
}

/// Sampling settings for global slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalSlopeConfig {
    pub n_directions: usize,
    pub n_random: usize,
    pub min_radius: f64,
    pub seed: u64,
}

impl Default for GlobalSlopeConfig {
    fn default() -> Self {
        GlobalSlopeConfig {
            n_directions: 64,
            n_random: 1000,
            min_radius: 1e-7,
            seed: 0,
        }
    }
}

fn sampled_sup(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x: &Point,
    cfg: &GlobalSlopeConfig,
    extra: impl Fn(f64) -> f64,
) -> f64 {
    let phi_x = phi.value(x);
    let score = |y: &Point| {
        let r = descent_ratio(phi, space, x, phi_x, y);
        if r.is_finite() {
            r + extra(space.distance(x, y))
        } else {
            f64::NEG_INFINITY
        }
    };
    let dirs = sphere_directions(x.len(), cfg.n_directions.max(4));
    let max_radius = 4.0 * space.sampling_radius();
    let mut radii = Vec::new();
    let mut r = cfg.min_radius;
    while r <= max_radius {
        radii.push(r);
        r *= 2.0;
    }
    let mut best = 0.0f64;
    let mut best_r = cfg.min_radius;
    for &r in &radii {
        for u in &dirs {
            let v = score(&(x + u * r));
            if v > best {
                best = v;
                best_r = r;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.n_random {
        let y = sample_point(space, &mut rng);
        best = best.max(score(&y));
    }
    for r in [cfg.min_radius, best_r] {
        let (_, v) = maximize_on_sphere(&dirs, |u| score(&(x + u * r)));
        best = best.max(v);
    }
    best.max(0.0)
}

/// `sup_y [(φ(x) − φ(y))/d(x,y) + (λ/p) d^{p−1}(x,y)]₊` over samples.
pub fn global_slope_formula(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x: &Point,
    cfg: &GlobalSlopeConfig,
) -> Result<f64> {
    let cert = phi
        .certificate
        .ok_or_else(|| FlowError::Unsupported(format!("potential {} has no convexity certificate", phi.name())))?;
    ensure_in_domain(space, x)?;
    let (p, lambda) = (cert.p, cert.lambda);
    Ok(sampled_sup(phi, space, x, cfg, |d| lambda / p * d.powf(p - 1.0)))
}

/// The global slope `sup_y [φ(x) − φ(y)]₊ / d(x, y)` over samples.
pub fn global_slope(phi: &Potential, space: &dyn AsymmetricSpace, x: &Point, cfg: &GlobalSlopeConfig) -> Result<f64> {
    ensure_in_domain(space, x)?;
    Ok(sampled_sup(phi, space, x, cfg, |_| 0.0))
}

/// Checks `|∂φ|^q(y_τ) ≤ (d(x, y_τ)/τ)^p` and that `(φ(x) − Φ_τ(x))/τ`
/// approaches `|∂φ|^q(x)/q` along `τ, τ/2, …, τ/16`.
pub fn slope_resolvent_bound_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x: &Point,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<Report> {
    check_tau(tau)?;
    let p = phi.p;
    let q = p / (p - 1.0);
    let r = resolvent(phi, space, tau, x, cfg)?;
    let lhs = slope(phi, space, &r.y_tau).powf(q);
    let rhs = (space.distance(x, &r.y_tau) / tau).powf(p);
    let bound = Report::from_violation("slope_resolvent_bound", lhs - rhs, 1, 1e-6);

    let phi_x = phi.value(x);
    let taus: Vec<f64> = (0..5).map(|k| tau / 2f64.powi(k)).collect();
    let quotients = taus
        .iter()
        .map(|t| moreau_yosida(phi, space, *t, x, cfg).map(|m| (phi_x - m) / t))
        .collect::<Result<Vec<_>>>()?;
    let n = quotients.len();
    let limit = 2.0 * quotients[n - 1] - quotients[n - 2];
    let target = slope(phi, space, x).powf(q) / q;
    let err = (limit - target).abs() / (1.0 + target);
    let limit_report = Report::from_violation("slope_envelope_limit", err, n, 1e-3);
    Ok(Report::combine("slope_resolvent", &[bound, limit_report]))
}

/// `τ_*(φ) ≥ λ_−^{−1/(p−1)}`, infinite when `λ ≥ 0`.
pub fn tau_star_lower_bound(phi: &Potential) -> Result<f64> {
    let cert = phi
        .certificate
        .ok_or_else(|| FlowError::Unsupported(format!("potential {} has no convexity certificate", phi.name())))?;
    if cert.lambda >= 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok((-cert.lambda).powf(-1.0 / (cert.p - 1.0)))
    }
}

/// Checks `(1+λτ^{p−1})|∂φ|^q(y_τ) ≤ q(φ(x)−Φ_τ(x))/τ ≤
/// |∂φ|^q(x)/(1+λτ^{p−1})^{q/p}` on each `τ` with `1 + λτ^{p−1} > 0`.
pub fn resolvent_chain_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x: &Point,
    taus: &[f64],
    cfg: &SolverConfig,
    tol: f64,
) -> Result<Report> {
    let cert = phi
        .certificate
        .ok_or_else(|| FlowError::Unsupported(format!("potential {} has no convexity certificate", phi.name())))?;
    let (p, lambda) = (cert.p, cert.lambda);
    let q = p / (p - 1.0);
    let slope_x = slope(phi, space, x).powf(q);
    let phi_x = phi.value(x);
    let mut tally = Tally::default();
    for &tau in taus {
        let factor = 1.0 + lambda * tau.powf(p - 1.0);
        if !(factor > 0.0) {
            continue;
        }
        let r = resolvent(phi, space, tau, x, cfg)?;
        let left = factor * slope(phi, space, &r.y_tau).powf(q);
        let middle = q * (phi_x - r.phi_tau) / tau;
        let right = slope_x / factor.powf(q / p);
        let scale = 1.0 + middle.abs();
        tally.push((left - middle) / scale);
        tally.push((middle - right) / scale);
    }
    Ok(tally.report("resolvent_chain", tol))
}

/// Checks `Φ_τ(x) ≥ Φ_{τ*}(x*) − C(p, τ*, τ) d^p(x*, x)` on the given
/// points, with `C = 𝔇(p, ε)/(p τ*^{p−1})` and `ε = (τ*^{p−1} − τ^{p−1})/(2τ^{p−1})`.
pub fn coercivity_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x_star: &Point,
    tau_star: f64,
    tau: f64,
    points: &[Point],
    cfg: &SolverConfig,
) -> Result<Report> {
    if !(0.0 < tau && tau < tau_star) {
        return Err(FlowError::Parameter(format!("need 0 < tau ({tau}) < tau_star ({tau_star})")));
    }
    let p = phi.p;
    let eps = (tau_star.powf(p - 1.0) - tau.powf(p - 1.0)) / (2.0 * tau.powf(p - 1.0));
    let c = appendix_constant(p, eps)? / (p * tau_star.powf(p - 1.0));
    let anchor = moreau_yosida(phi, space, tau_star, x_star, cfg)?;
    let mut tally = Tally::default();
    for x in points {
        let m = moreau_yosida(phi, space, tau, x, cfg)?;
        let lower = anchor - c * space.distance(x_star, x).powf(p);
        tally.push((lower - m) / (1.0 + m.abs()));
    }
    Ok(tally.report("coercivity_estimate", 1e-9))
}

/// Checks `Φ(τ,x;y_τ) ≤ Φ(τ,x;z) + tol` on sampled `z`, half drawn from the
/// sampling box and half near `y_τ`.
pub fn argmin_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x: &Point,
    tau: f64,
    n_samples: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Report> {
    let r = resolvent(phi, space, tau, x, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    let local = (space.distance(x, &r.y_tau) + tau).min(0.1);
    for k in 0..n_samples {
        let z = if k % 2 == 0 {
            sample_point(space, &mut rng)
        } else {
            let u = DVector::from_fn(x.len(), |_, _| rng.gen_range(-1.0..1.0));
            &r.y_tau + u * (local * rng.gen::<f64>())
        };
        if !space.in_domain(&z) {
            continue;
        }
        let v = raw_phi_functional(phi, space, tau, x, &z);
        tally.push((r.phi_tau - v) / (1.0 + r.phi_tau.abs()));
    }
    Ok(tally.report("resolvent_argmin", cfg.tol.max(1e-12)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::SpaceHandle;
    use crate::spaces::{Euclidean, FunkBall, Randers};
    use std::sync::Arc;

    fn p2(a: f64, b: f64) -> Point {
        Point::from_vec(vec![a, b])
    }

    #[test]
    fn phi_functional_examples() {
        let e = Euclidean::new(2);
        let x = p2(0.0, 0.0);
        let zero = Potential::constant(0.0);
        assert_eq!(phi_functional(&zero, &e, 1.0, &x, &p2(2.0, 0.0)).unwrap(), 2.0);
        let q = Potential::quadratic(p2(1.0, 1.0));
        assert_eq!(phi_functional(&q, &e, 0.3, &x, &x).unwrap(), q.value(&x));
        let five = Potential::constant(5.0).with_exponent(3.0);
        let v = phi_functional(&five, &e, 2.0, &x, &p2(0.0, 1.0)).unwrap();
        assert!((v - (5.0 + 1.0 / 12.0)).abs() < 1e-15);
        let funk = FunkBall::new(2).unwrap();
        assert!(matches!(
            phi_functional(&zero, &funk, 1.0, &x, &p2(1.0, 0.0)),
            Err(FlowError::Domain { .. })
        ));
        let inf = Potential::from_fn("wall", |y: &Point| if y[0] > 0.5 { f64::INFINITY } else { 0.0 }, None);
        assert_eq!(phi_functional(&inf, &e, 1.0, &x, &p2(1.0, 0.0)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn quadratic_resolvent_closed_form() {
        let e = Euclidean::new(2);
        let q = Potential::quadratic(Point::zeros(2));
        let x = p2(0.8, -0.6);
        for tau in [1e-3, 0.1, 1.0, 10.0] {
            let r = resolvent(&q, &e, tau, &x, &SolverConfig::default()).unwrap();
            assert!((&r.y_tau - &x / (1.0 + tau)).norm() < 1e-12);
            assert!((r.phi_tau - x.norm_squared() / (2.0 * (1.0 + tau))).abs() < 1e-13);
            assert!(r.d_minus <= r.d_plus + 1e-15);
            assert!((r.d_plus - r.d_minus).abs() < 1e-10);
        }
    }

    #[test]
    fn minimizer_is_fixed() {
        let funk = FunkBall::new(2).unwrap();
        let c = p2(0.3, 0.1);
        let phi = Potential::quadratic(c.clone());
        let r = resolvent(&phi, &funk, 0.5, &c, &SolverConfig::default()).unwrap();
        assert!((&r.y_tau - &c).norm() < 1e-12);
        assert!(r.phi_tau.abs() < 1e-20);
    }

    #[test]
    fn envelope_tends_to_potential() {
        let r = Randers::new(DVector::from_vec(vec![0.3, 0.2])).unwrap();
        let phi = Potential::quadratic(p2(1.0, 0.0));
        let x = p2(-0.5, 0.7);
        let mut prev_gap = f64::INFINITY;
        for k in 1..=5 {
            let tau = 10f64.powi(-k);
            let gap = phi.value(&x) - moreau_yosida(&phi, &r, tau, &x, &SolverConfig::default()).unwrap();
            assert!(gap >= 0.0 && gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-4);
    }

    #[test]
    fn resolvent_solves_funk_problems() {
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        let phi = Potential::squared_distance(funk.clone(), Point::zeros(2));
        let x = p2(0.6, -0.5);
        for tau in [1e-3, 0.1, 1.0] {
            let rep = argmin_check(&phi, funk.as_ref(), &x, tau, 1000, 7, &SolverConfig::default()).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn resolvent_handles_l1_kink() {
        let e = Euclidean::new(2);
        // Minimizer of w|y_0| + |y − c|²/2 + |y − x|²/(2τ) is a soft
        // threshold of (c + x/τ)/(1 + 1/τ) at level w/(1 + 1/τ).
        let c = p2(0.1, 0.4);
        let phi = Potential::l1_split(0.5, c.clone());
        for (x, tau) in [(p2(0.2, 1.0), 0.5), (p2(2.0, 0.0), 0.5), (p2(-3.0, 1.0), 0.1)] {
            let r = resolvent(&phi, &e, tau, &x, &SolverConfig::default()).unwrap();
            let a = 1.0 + 1.0 / tau;
            let z = (&c + &x / tau) / a;
            let thr = 0.5 / a;
            let expected = p2(z[0].signum() * (z[0].abs() - thr).max(0.0), z[1]);
            assert!((&r.y_tau - &expected).norm() < 1e-10, "{} vs {}", r.y_tau, expected);
        }
    }

    #[test]
    fn linear_resolvent_on_randers() {
        // For linear φ on a Minkowski-type space, y_τ − x is constant in x.
        let r = Randers::new(DVector::from_vec(vec![0.5, 0.0])).unwrap();
        let phi = Potential::linear(p2(1.0, 0.0));
        let cfg = SolverConfig::default();
        let a = resolvent(&phi, &r, 0.2, &p2(0.0, 0.0), &cfg).unwrap();
        let b = resolvent(&phi, &r, 0.2, &p2(3.0, -1.0), &cfg).unwrap();
        assert!(((&a.y_tau - p2(0.0, 0.0)) - (&b.y_tau - p2(3.0, -1.0))).norm() < 1e-10);
    }

    #[test]
    fn unbounded_problem_is_reported() {
        let e = Euclidean::new(1);
        let phi = Potential::from_fn("cubic", |y: &Point| -y[0].powi(4), Some(Box::new(|y: &Point| Point::from_element(1, -4.0 * y[0].powi(3)))));
        let err = resolvent(&phi, &e, 1.0, &Point::from_element(1, 2.0), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, FlowError::Coercivity { .. }), "{err}");
    }

    #[test]
    fn invalid_inputs() {
        let e = Euclidean::new(2);
        let q = Potential::quadratic(Point::zeros(2));
        let cfg = SolverConfig::default();
        assert!(resolvent(&q, &e, 0.0, &p2(1.0, 0.0), &cfg).is_err());
        let bad = SolverConfig { n_restarts: 0, ..cfg.clone() };
        assert!(resolvent(&q, &e, 1.0, &p2(1.0, 0.0), &bad).is_err());
    }

    #[test]
    fn monotonicity_chains() {
        let e = Euclidean::new(2);
        let taus = [0.01, 0.05, 0.2, 1.0, 3.0];
        let cfg = SolverConfig::default();
        let q = Potential::quadratic(Point::zeros(2));
        assert!(envelope_monotonicity_check(&q, &e, &p2(1.0, 2.0), &taus, &cfg).unwrap().pass);
        let c = Potential::constant(1.0);
        let rep = envelope_monotonicity_check(&c, &e, &p2(1.0, 2.0), &taus, &cfg).unwrap();
        assert!(rep.pass && rep.max_violation.abs() < 1e-15);
        let funk = FunkBall::new(2).unwrap();
        let f = Potential::funk_log(1.0);
        let rep = envelope_monotonicity_check(&f, &funk, &p2(0.5, 0.4), &taus, &cfg).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn derivative_of_envelope() {
        let e = Euclidean::new(2);
        let cfg = SolverConfig::default();
        let q = Potential::quadratic(Point::zeros(2));
        assert!(envelope_derivative_check(&q, &e, &p2(1.0, -1.0), 0.5, &cfg).unwrap().pass);
        let c = Potential::constant(2.0);
        let rep = envelope_derivative_check(&c, &e, &p2(1.0, -1.0), 0.5, &cfg).unwrap();
        assert!(rep.max_violation < 1e-10);
        let r = Randers::new(DVector::from_vec(vec![0.4, -0.2])).unwrap();
        let lin = Potential::linear(p2(0.7, 1.0));
        let rep = envelope_derivative_check(&lin, &r, &p2(1.0, -1.0), 0.3, &cfg).unwrap();
        assert!(rep.max_violation < 1e-5, "{rep:?}");
    }

    #[test]
    fn local_slope_estimates() {
        let e = Euclidean::new(2);
        let q = Potential::quadratic(Point::zeros(2));
        let x = p2(0.6, -0.3);
        assert!((local_slope(&q, &e, &x, &SlopeConfig::default()) - x.norm()).abs() < 1e-6);
        let c = Potential::constant(3.0);
        assert_eq!(local_slope(&c, &e, &x, &SlopeConfig::default()), 0.0);
        let r = Randers::new(DVector::from_vec(vec![0.5, 0.0])).unwrap();
        let lin = Potential::linear(p2(1.0, 0.0));
        let exact = r.tangent().unwrap().dual_norm(&x, &p2(-1.0, 0.0));
        assert!((local_slope(&lin, &r, &x, &SlopeConfig::default()) - exact).abs() < 1e-4);
        assert!((slope(&lin, &r, &x) - exact).abs() < 1e-12);
    }

    #[test]
    fn smooth_local_slope_matches_dual_norm() {
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        let phi = Potential::squared_distance(funk.clone(), p2(0.1, 0.2));
        let x = p2(-0.4, 0.3);
        let exact = slope(&phi, funk.as_ref(), &x);
        let est = local_slope(&phi, funk.as_ref(), &x, &SlopeConfig::default());
        assert!((est - exact).abs() < 1e-5, "{est} vs {exact}");
    }

    #[test]
    fn slope_at_kinks() {
        let e = Euclidean::new(2);
        let phi = Potential::l1_split(0.5, p2(0.2, 1.0));
        // At (0, 1): ∂φ = [-0.7, 0.3] × {0}; the minimal element is 0.
        assert_eq!(slope(&phi, &e, &p2(0.0, 1.0)), 0.0);
        // At (0, 0): ∂φ = [-0.7, 0.3] × {-1}; minimal norm 1.
        assert!((slope(&phi, &e, &p2(0.0, 0.0)) - 1.0).abs() < 1e-12);
        let r = Randers::new(DVector::from_vec(vec![0.3, 0.4])).unwrap();
        let x = p2(0.0, 0.0);
        let s = slope(&phi, &r, &x);
        let numeric = local_slope(&phi, &r, &x, &SlopeConfig::default());
        assert!((s - numeric).abs() < 1e-3, "{s} vs {numeric}");
    }

    #[test]
    fn global_slope_formula_matches_local() {
        let e = Euclidean::new(2);
        let q = Potential::quadratic(Point::zeros(2)).with_certificate(1.0);
        let x = p2(0.5, 0.5);
        let cfg = GlobalSlopeConfig::default();
        let g = global_slope_formula(&q, &e, &x, &cfg).unwrap();
        assert!((g - x.norm()).abs() < 1e-3);
        assert!(global_slope_formula(&q, &e, &Point::zeros(2), &cfg).unwrap() < 1e-12);
        let plain = global_slope(&q, &e, &x, &cfg).unwrap();
        assert!((plain - x.norm()).abs() < 1e-3);
        let uncertified = Potential::quadratic(Point::zeros(2));
        assert!(matches!(
            global_slope_formula(&uncertified, &e, &x, &cfg),
            Err(FlowError::Unsupported(_))
        ));
    }

    #[test]
    fn tau_star_bounds() {
        let q = Potential::quadratic(Point::zeros(2));
        assert_eq!(tau_star_lower_bound(&q.clone().with_certificate(1.0)).unwrap(), f64::INFINITY);
        assert!((tau_star_lower_bound(&q.clone().with_certificate(-1.0)).unwrap() - 1.0).abs() < 1e-15);
        let t = tau_star_lower_bound(&q.clone().with_exponent(3.0).with_certificate(-4.0)).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert!(tau_star_lower_bound(&q).is_err());
    }

    #[test]
    fn slope_bounds_along_resolvents() {
        let cfg = SolverConfig::default();
        let e = Euclidean::new(2);
        let q = Potential::quadratic(Point::zeros(2));
        assert!(slope_resolvent_bound_check(&q, &e, &p2(1.0, 0.5), 0.01, &cfg).unwrap().pass);
        let rep = slope_resolvent_bound_check(&q, &e, &Point::zeros(2), 0.01, &cfg).unwrap();
        assert!(rep.pass && rep.max_violation <= 1e-12, "{rep:?}");
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        let phi = Potential::squared_distance(funk.clone(), Point::zeros(2));
        let rep = slope_resolvent_bound_check(&phi, funk.as_ref(), &p2(0.4, 0.3), 0.01, &cfg).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn resolvent_chain_on_certified_tests() {
        let cfg = SolverConfig::default();
        let taus: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
        let e = Euclidean::new(2);
        let q = Potential::quadratic(Point::zeros(2)).with_certificate(1.0);
        assert!(resolvent_chain_check(&q, &e, &p2(1.0, -2.0), &taus, &cfg, 1e-5).unwrap().pass);
        let r = Randers::new(DVector::from_vec(vec![0.3, 0.0])).unwrap();
        let q = Potential::quadratic(Point::zeros(2)).with_certificate(1.0 / 1.69);
        let rep = resolvent_chain_check(&q, &r, &p2(1.0, -2.0), &taus, &cfg, 1e-5).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn coercivity_estimate_holds() {
        let cfg = SolverConfig::default();
        let r = Randers::new(DVector::from_vec(vec![0.3, 0.1])).unwrap();
        let phi = Potential::linear(p2(1.0, -0.5));
        let pts: Vec<Point> = (0..10).map(|k| p2(k as f64 * 0.3 - 1.0, 0.5)).collect();
        let rep = coercivity_check(&phi, &r, &p2(0.0, 0.0), 1.0, 0.3, &pts, &cfg).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn barrier_continuation_reaches_the_same_minimizer() {
        let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
        let phi = Potential::squared_distance(funk.clone(), Point::zeros(2));
        let x = p2(0.7, 0.1);
        let plain = resolvent(&phi, funk.as_ref(), 0.2, &x, &SolverConfig::default()).unwrap();
        let cfg = SolverConfig {
            barrier_strength: 1.0,
            ..SolverConfig::default()
        };
        let cont = resolvent(&phi, funk.as_ref(), 0.2, &x, &cfg).unwrap();
        assert!((&plain.y_tau - &cont.y_tau).norm() < 1e-10);
    }

    #[test]
    fn sphere_directions_are_unit() {
        for dim in 1..6 {
            for u in sphere_directions(dim, 64) {
                assert!((u.norm() - 1.0).abs() < 1e-14);
            }
        }
    }
}
