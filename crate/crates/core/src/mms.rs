//! The minimizing-movement scheme `Ξ^k ∈ J_{τ_k}[Ξ^{k−1}]`, De Giorgi's
//! variational interpolation, discrete diagnostics and step-size sweeps.

use std::collections::HashMap;
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{central_speeds, Provenance, Trajectory};
use crate::envelope::{moreau_yosida, resolvent, slope, tau_star_lower_bound, SolverConfig};
use crate::error::{FlowError, Result};
use crate::metric::{ensure_in_domain, AsymmetricSpace, Point};
use crate::potential::Potential;
use crate::quadrature::GaussLegendre;
use crate::report::{Report, Tally};
use crate::spaces::descending_gradient;

/// Time steps `τ_1, …, τ_N` and the nodes `t^0 = 0, t^k = t^{k−1} + τ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    steps: Vec<f64>,
    times: Vec<f64>,
}

impl Partition {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(FlowError::Parameter("partition needs at least one step".into()));
        }
        if let Some(t) = steps.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(FlowError::Parameter(format!("step {t} must be positive and finite")));
        }
        let mut times = Vec::with_capacity(steps.len() + 1);
        times.push(0.0);
        for t in &steps {
            times.push(times.last().unwrap() + t);
        }
        Ok(Partition { steps, times })
    }

    pub fn uniform(tau: f64, n: usize) -> Result<Self> {
        Self::new(vec![tau; n])
    }

    /// Uniform steps `τ` covering `[0, t_end]`.
    pub fn uniform_until(tau: f64, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(FlowError::Parameter(format!("final time {t_end} must be positive and finite")));
        }
        let n = ((t_end / tau) - 1e-9).ceil().max(1.0) as usize;
        Self::uniform(tau, n)
    }

    /// Number of steps `N`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// `t^0, …, t^N`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `τ_k` for `k = 1..=N`.
    pub fn step(&self, k: usize) -> f64 {
        self.steps[k - 1]
    }

    /// `‖τ‖ = max τ_k`.
    pub fn norm(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// The step `k` and offset `δ ∈ (0, τ_k]` with `t = t^{k−1} + δ`.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        if !(t > 0.0) || t > self.end() {
            return None;
        }
        let k = self.times.partition_point(|s| *s < t).max(1);
        Some((k, (t - self.times[k - 1]).min(self.steps[k - 1])))
    }

    fn prefix(&self, n: usize) -> Partition {
        Partition {
            steps: self.steps[..n].to_vec(),
            times: self.times[..=n].to_vec(),
        }
    }
}

/// A run of the scheme.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub partition: Partition,
    /// `Ξ^0, …, Ξ^N`.
    pub xs: Vec<Point>,
    /// `G_τ(t^k) = d⁺_{τ_k}(Ξ^{k−1})/τ_k` for `k = 1..=N`.
    pub g_tau: Vec<f64>,
    /// `|Ξ′_τ| = d(Ξ^{k−1}, Ξ^k)/τ_k` for `k = 1..=N`.
    pub speed: Vec<f64>,
    /// `φ(Ξ^0), …, φ(Ξ^N)`.
    pub phis: Vec<f64>,
}

impl DiscreteSolution {
    /// Piecewise constant interpolant: `Ξ^k` on `(t^{k−1}, t^k]`, `Ξ^0` at 0.
    pub fn piecewise_constant(&self, t: f64) -> &Point {
        match self.partition.locate(t) {
            Some((k, _)) => &self.xs[k],
            None if t <= 0.0 => &self.xs[0],
            None => self.xs.last().unwrap(),
        }
    }
}

/// Runs the recursion on `partition` starting from `x0`.
pub fn run_scheme(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x0: &Point,
    partition: &Partition,
    cfg: &SolverConfig,
) -> Result<DiscreteSolution> {
    ensure_in_domain(space, x0)?;
    let phi0 = phi.value(x0);
    if !phi0.is_finite() {
        return Err(FlowError::Parameter("initial point lies outside the effective domain of the potential".into()));
    }
    if phi.certificate.is_some() {
        let bound = tau_star_lower_bound(phi)?;
        if partition.norm() >= bound {
            return Err(FlowError::Parameter(format!(
                "step {} is not below the coercivity bound {bound}",
                partition.norm()
            )));
        }
    }
    let mut sol = DiscreteSolution {
        partition: partition.clone(),
        xs: vec![x0.clone()],
        g_tau: Vec::with_capacity(partition.len()),
        speed: Vec::with_capacity(partition.len()),
        phis: vec![phi0],
    };
    for k in 1..=partition.len() {
        let tau = partition.step(k);
        let prev = &sol.xs[k - 1];
        match resolvent(phi, space, tau, prev, cfg) {
            Ok(r) => {
                sol.speed.push(space.distance(prev, &r.y_tau) / tau);
                sol.g_tau.push(r.d_plus / tau);
                sol.phis.push(phi.value(&r.y_tau));
                sol.xs.push(r.y_tau);
            }
            Err(source) => {
                sol.partition = partition.prefix(k - 1);
                return Err(FlowError::Scheme {
                    step: k,
                    partial: Box::new(sol),
                    source: Box::new(source),
                });
            }
        }
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy)]
struct Interpolated {
    d_plus: f64,
}

/// De Giorgi interpolation of a discrete solution with a cache of the
/// interpolation resolvents keyed by `(k, δ)`.
pub struct DeGiorgi<'a> {
    phi: &'a Potential,
    space: &'a dyn AsymmetricSpace,
    sol: &'a DiscreteSolution,
    cfg: &'a SolverConfig,
    cache: Mutex<HashMap<(usize, u64), (Point, Interpolated)>>,
}

impl<'a> DeGiorgi<'a> {
    pub fn new(phi: &'a Potential, space: &'a dyn AsymmetricSpace, sol: &'a DiscreteSolution, cfg: &'a SolverConfig) -> Self {
        DeGiorgi {
            phi,
            space,
            sol,
            cfg,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn solve(&self, k: usize, delta: f64) -> Result<(Point, Interpolated)> {
        let key = (k, delta.to_bits());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let r = resolvent(self.phi, self.space, delta, &self.sol.xs[k - 1], self.cfg)?;
        let out = (r.y_tau, Interpolated { d_plus: r.d_plus });
        self.cache.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        self.sol.partition.locate(t).ok_or_else(|| {
            FlowError::Parameter(format!("time {t} outside (0, {}]", self.sol.partition.end()))
        })
    }

    /// `Ξ̃_τ(t)`: an element of `J_δ[Ξ^{k−1}]` for `t = t^{k−1} + δ`, and
    /// `Ξ^k` at the nodes.
    pub fn interpolant(&self, t: f64) -> Result<Point> {
        if t == 0.0 {
            return Ok(self.sol.xs[0].clone());
        }
        let (k, delta) = self.locate(t)?;
        if t == self.sol.partition.times()[k] {
            return Ok(self.sol.xs[k].clone());
        }
        Ok(self.solve(k, delta)?.0)
    }

    /// `G_τ(t) = d⁺_δ(Ξ^{k−1})/δ`.
    pub fn g(&self, t: f64) -> Result<f64> {
        let (k, delta) = self.locate(t)?;
        if t == self.sol.partition.times()[k] {
            return Ok(self.sol.g_tau[k - 1]);
        }
        Ok(self.solve(k, delta)?.1.d_plus / delta)
    }

    /// `∫_{t^{k−1}}^{t^k} G_τ^p` by adaptive Gauss–Legendre quadrature.
    pub fn g_power_integral(&self, k: usize, order: usize) -> Result<f64> {
        let p = self.phi.p;
        let tau = self.sol.partition.step(k);
        let rule = GaussLegendre::new(order);
        let mut failure = None;
        let mut f = |delta: f64| match self.solve(k, delta) {
            Ok((_, r)) => (r.d_plus / delta).powf(p),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let scale = 1.0 + self.sol.phis[k - 1].abs();
        let value = rule.integrate(0.0, tau, 1e-13 * scale, 4, &mut f);
        match failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }

    /// `|(1/p)∫|Ξ′|^p + (1/q)∫G^p + φ(Ξ^l) − φ(Ξ^k)|` over `[t^k, t^l]`.
    pub fn energy_identity(&self, k: usize, l: usize, order: usize) -> Result<f64> {
        if !(k < l && l <= self.sol.partition.len()) {
            return Err(FlowError::Parameter(format!("need 0 <= k < l <= N, got k = {k}, l = {l}")));
        }
        let p = self.phi.p;
        let q = p / (p - 1.0);
        let per_step = ((k + 1)..=l)
            .into_par_iter()
            .map(|i| {
                let tau = self.sol.partition.step(i);
                let kinetic = tau * self.sol.speed[i - 1].powf(p) / p;
                self.g_power_integral(i, order).map(|g| kinetic + g / q)
            })
            .collect::<Result<Vec<f64>>>()?;
        let lhs: f64 = per_step.iter().sum::<f64>() + self.sol.phis[l];
        Ok((lhs - self.sol.phis[k]).abs())
    }
}

/// `Ξ̃_τ(t)`; see [`DeGiorgi::interpolant`].
pub fn de_giorgi_interpolant(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    sol: &DiscreteSolution,
    t: f64,
    cfg: &SolverConfig,
) -> Result<Point> {
    DeGiorgi::new(phi, space, sol, cfg).interpolant(t)
}

/// `G_τ(t)`; see [`DeGiorgi::g`].
pub fn g_tau(phi: &Potential, space: &dyn AsymmetricSpace, sol: &DiscreteSolution, t: f64, cfg: &SolverConfig) -> Result<f64> {
    DeGiorgi::new(phi, space, sol, cfg).g(t)
}

/// Residual of the discrete energy identity between nodes `k < l`.
pub fn discrete_energy_identity(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    sol: &DiscreteSolution,
    k: usize,
    l: usize,
    order: usize,
    cfg: &SolverConfig,
) -> Result<f64> {
    DeGiorgi::new(phi, space, sol, cfg).energy_identity(k, l, order)
}

/// Checks that `φ(Ξ^k)` is non-increasing.
pub fn energy_monotonicity_check(sol: &DiscreteSolution, slack: f64) -> Report {
    let mut tally = Tally::default();
    for w in sol.phis.windows(2) {
        tally.push(w[1] - w[0]);
    }
    tally.report("discrete_energy_monotone", slack)
}

/// Checks the a priori estimates for a run started within the bound
/// `S` (`φ(Ξ^0) ≤ S`, `d^p(x_*, Ξ^0) ≤ S`) up to time `T`.
///
/// The constants are the explicit ones from the proof: `C_1 = B e^{βT}` and
/// `C_2 = (Θ(d(⋆,x_*) + C_1^{1/p}) + 1)^p p C_1`. When the potential has no
/// finite coercivity bound the smallest admissible `τ_*(φ)` (at least 1) is
/// used. The interpolant gap is sampled at the midpoint of up to 50 steps.
pub fn a_priori_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    sol: &DiscreteSolution,
    x_star: &Point,
    s_bound: f64,
    t_bound: f64,
    cfg: &SolverConfig,
) -> Result<Report> {
    let p = phi.p;
    let part = &sol.partition;
    let n = part.len();
    let norm = part.norm();
    if sol.phis[0] > s_bound || space.distance(x_star, &sol.xs[0]).powf(p) > s_bound {
        return Err(FlowError::Parameter(format!("initial data exceed the bound S = {s_bound}")));
    }
    if n >= 1 && part.times()[n - 1] > t_bound {
        return Err(FlowError::Parameter(format!("run extends past T = {t_bound}")));
    }
    let factor = 2f64.powf(p / (p - 1.0)) * p * p;
    let tau_star_phi = match phi.certificate {
        Some(_) => tau_star_lower_bound(phi)?,
        None => f64::INFINITY,
    };
    let tau_star_phi = if tau_star_phi.is_finite() {
        tau_star_phi
    } else {
        (norm * factor).max(1.0)
    };
    if norm > tau_star_phi / factor {
        return Err(FlowError::Parameter(format!(
            "step {norm} exceeds the a priori bound {}",
            tau_star_phi / factor
        )));
    }
    let tau_star = tau_star_phi / p;
    let envelope = moreau_yosida(phi, space, tau_star, x_star, cfg)?;
    let a = 2.0 * s_bound + p * tau_star.powf(p - 1.0) * (s_bound - envelope);
    let alpha = 2f64.powf(p / (p - 1.0)) * (p - 1.0) / tau_star;
    let m = alpha * norm;
    let b = a / (1.0 - m);
    let beta = alpha / (1.0 - m);
    let c1 = b * (beta * t_bound).exp();

    let mut telescoping = Tally::default();
    let mut bounded = Tally::default();
    let mut sum = 0.0;
    for k in 1..=n {
        let tau = part.step(k);
        sum += space.distance(&sol.xs[k - 1], &sol.xs[k]).powf(p) / (p * tau.powf(p - 1.0));
        let drop = sol.phis[0] - sol.phis[k];
        telescoping.push(sum - drop);
        bounded.push(drop - c1);
        bounded.push(space.distance(x_star, &sol.xs[k]).powf(p) - c1);
    }

    let star = space.base_point();
    let theta = space.theta(space.distance(&star, x_star) + c1.powf(1.0 / p));
    let c2 = (theta + 1.0).powf(p) * p * c1;
    let stride = (n / 50).max(1);
    let interp = DeGiorgi::new(phi, space, sol, cfg);
    let mut gap = Tally::default();
    for k in (1..=n).step_by(stride) {
        let t = part.times()[k - 1] + 0.5 * part.step(k);
        let y = interp.interpolant(t)?;
        let d = space.distance(&sol.xs[k], &y).max(space.distance(&y, &sol.xs[k]));
        gap.push(d.powf(p) / norm.powf(p - 1.0) - c2);
    }
    info!("a priori constants C1 = {c1:e}, C2 = {c2:e}");
    Ok(Report::combine(
        "a_priori_estimates",
        &[
            telescoping.report("a_priori_telescoping", 1e-6),
            bounded.report("a_priori_bounded", 1e-6),
            gap.report("a_priori_interpolant_gap", 1e-6),
        ],
    ))
}

/// Checks that `e^{λ_τ (t^k)^{p−1}} |∂φ|(Ξ^k)` is non-increasing, with
/// `λ_τ = log(1 + λ‖τ‖^{p−1})/‖τ‖^{p−1}`.
pub fn discrete_slope_monotonicity_check(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    sol: &DiscreteSolution,
    slack: f64,
) -> Result<Report> {
    let cert = phi
        .certificate
        .ok_or_else(|| FlowError::Unsupported(format!("potential {} has no convexity certificate", phi.name())))?;
    let (p, lambda) = (cert.p, cert.lambda);
    check_regime(p, lambda)?;
    let h = sol.partition.norm().powf(p - 1.0);
    if !(lambda * h > -1.0) {
        return Err(FlowError::Parameter("need λ‖τ‖^{p−1} > −1".into()));
    }
    let lambda_tau = (lambda * h).ln_1p() / h;
    let weighted: Vec<f64> = sol
        .xs
        .par_iter()
        .zip(sol.partition.times())
        .map(|(x, t)| (lambda_tau * t.powf(p - 1.0)).exp() * slope(phi, space, x))
        .collect();
    let mut tally = Tally::default();
    for w in weighted.windows(2) {
        tally.push((w[1] - w[0]) / (1.0 + w[0]));
    }
    Ok(tally.report("discrete_slope_monotone", slack))
}

/// The `(p, λ)` regimes in which the slope estimates hold.
pub(crate) fn check_regime(p: f64, lambda: f64) -> Result<()> {
    let ok = (p > 1.0 && p < 2.0 && lambda >= 0.0) || p == 2.0 || (p > 2.0 && lambda == 0.0);
    if ok {
        Ok(())
    } else {
        Err(FlowError::Unsupported(format!("(p, λ) = ({p}, {lambda}) is outside the supported regimes")))
    }
}

/// Per-step residual of the discrete Euler–Lagrange relation on a
/// Minkowski-type space: `(Ξ^k − Ξ^{k−1})/τ_k = F^{(2−p)/(p−1)}(∇(−φ)(Ξ^k)) ∇(−φ)(Ξ^k)`.
pub fn euler_lagrange_residual(phi: &Potential, space: &dyn AsymmetricSpace, sol: &DiscreteSolution) -> Result<f64> {
    let t = space
        .tangent()
        .ok_or_else(|| FlowError::Unsupported(format!("space {} has no tangent structure", space.name())))?;
    let p = phi.p;
    let mut worst = 0.0f64;
    for k in 1..sol.xs.len() {
        let x = &sol.xs[k];
        let g = descending_gradient(space, phi, x)?;
        let f = t.norm(x, &g);
        let rhs = if f > 0.0 { &g * f.powf((2.0 - p) / (p - 1.0)) } else { g };
        let lhs = (x - &sol.xs[k - 1]) / sol.partition.step(k);
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// Outcome of a step-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub taus: Vec<f64>,
    /// Sup-distance between the piecewise constant interpolants of
    /// consecutive sweep members on a common grid.
    pub cauchy_distances: Vec<f64>,
    pub cauchy_monotone: bool,
    /// Energy-identity residual of the finest run over `[0, T]`.
    pub energy_residual: f64,
    pub warning: Option<String>,
}

/// Runs the scheme for every step size of a decreasing sweep, reports the
/// empirical Cauchy behaviour and returns the finest run as a trajectory.
pub fn limit_trajectory(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x0: &Point,
    t_end: f64,
    taus: &[f64],
    cfg: &SolverConfig,
) -> Result<(Trajectory, ConvergenceReport)> {
    if taus.is_empty() || !taus.windows(2).all(|w| w[0] > w[1]) {
        return Err(FlowError::Parameter("step-size sweep must be non-empty and decreasing".into()));
    }
    let runs = sweep_runs(phi, space, x0, t_end, taus, cfg)?;
    Ok(limit_from_runs(phi, space, t_end, &runs))
}

/// The finest of `runs` as a trajectory, with the Cauchy report of the
/// sweep they form.
pub fn limit_from_runs(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    t_end: f64,
    runs: &[DiscreteSolution],
) -> (Trajectory, ConvergenceReport) {
    let grid: Vec<f64> = (0..=200).map(|i| t_end * i as f64 / 200.0).collect();
    let cauchy: Vec<f64> = runs
        .windows(2)
        .map(|w| {
            grid.iter()
                .map(|t| {
                    let (a, b) = (w[0].piecewise_constant(*t), w[1].piecewise_constant(*t));
                    space.distance(a, b).max(space.distance(b, a))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let monotone = cauchy.windows(2).all(|w| w[1] <= w[0]);
    let warning = (!monotone).then(|| {
        let msg = format!("sweep distances are not decreasing: {cauchy:?}");
        warn!("{msg}");
        msg
    });
    let finest = runs.last().unwrap();
    let traj = trajectory_from_solution(phi, space, finest);
    let energy_residual = traj.energy_residual(phi.p);
    (
        traj,
        ConvergenceReport {
            taus: runs.iter().map(|r| r.partition.norm()).collect(),
            cauchy_distances: cauchy,
            cauchy_monotone: monotone,
            energy_residual,
            warning,
        },
    )
}

/// Runs the scheme once per step size, concurrently, in sweep order.
pub fn sweep_runs(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x0: &Point,
    t_end: f64,
    taus: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<DiscreteSolution>> {
    taus.par_iter()
        .map(|tau| run_scheme(phi, space, x0, &Partition::uniform_until(*tau, t_end)?, cfg))
        .collect()
}

/// The nodes of a run with `φ`, slope and forward speed at each node.
pub fn trajectory_from_solution(phi: &Potential, space: &dyn AsymmetricSpace, sol: &DiscreteSolution) -> Trajectory {
    let times = sol.partition.times().to_vec();
    let slopes = sol.xs.par_iter().map(|x| slope(phi, space, x)).collect();
    let speeds = central_speeds(space, &times, &sol.xs);
    Trajectory {
        times,
        points: sol.xs.clone(),
        phi_values: sol.phis.clone(),
        slope_values: slopes,
        speed_values: speeds,
        provenance: Provenance::Mms,
        exited: false,
    }
}
