//! Reference integrator for the smooth flow
//! `ξ′ = F(∇(−φ)(ξ))^{(2−p)/(p−1)} ∇(−φ)(ξ)`.

use log::debug;
use serde::{Deserialize, Serialize};

use super::{Provenance, Trajectory};
use crate::error::{FlowError, Result};
use crate::metric::{ensure_in_domain, AsymmetricSpace, Point};
use crate::potential::Potential;
use crate::spaces::{descending_gradient, TangentStructure};

/// Integrator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RkConfig {
    /// Output spacing; also the initial internal step.
    pub h: f64,
    /// Local error tolerance of the step-doubling control, relative to
    /// `1 + |ξ|`.
    pub tol: f64,
    /// Runs stop once `F(∇(−φ))` drops below this.
    pub critical_tol: f64,
    pub max_substeps: usize,
}

impl Default for RkConfig {
    fn default() -> Self {
        RkConfig {
            h: 1e-3,
            tol: 1e-12,
            critical_tol: 1e-10,
            max_substeps: 1_000_000,
        }
    }
}

struct Field<'a> {
    phi: &'a Potential,
    space: &'a dyn AsymmetricSpace,
    tangent: &'a dyn TangentStructure,
}

impl Field<'_> {
    /// The velocity at `x` and `F(∇(−φ)(x))`; `None` outside the domain.
    fn eval(&self, x: &Point) -> Option<Result<(Point, f64)>> {
        if !self.space.in_domain(x) {
            return None;
        }
        let p = self.phi.p;
        Some(descending_gradient(self.space, self.phi, x).map(|g| {
            let f = self.tangent.norm(x, &g);
            if f > 0.0 {
                (&g * f.powf((2.0 - p) / (p - 1.0)), f)
            } else {
                (Point::zeros(x.len()), 0.0)
            }
        }))
    }

    fn rk4(&self, x: &Point, h: f64) -> Option<Result<Point>> {
        let stage = |y: &Point| self.eval(y).map(|r| r.map(|(v, _)| v));
        let k1 = match stage(x)? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let k2 = match stage(&(x + &k1 * (0.5 * h)))? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let k3 = match stage(&(x + &k2 * (0.5 * h)))? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let k4 = match stage(&(x + &k3 * h))? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if self.space.in_domain(&next) {
            Some(Ok(next))
        } else {
            None
        }
    }

    /// Advances `x` by `span` with step-doubling error control. `None` when
    /// the step collapses below `1e−9 span`, which happens when the run
    /// approaches the boundary of the domain.
    fn advance(&self, x: &Point, span: f64, h: &mut f64, tol: f64, budget: &mut usize) -> Option<Result<Point>> {
        let mut x = x.clone();
        let mut done = 0.0;
        while done < span {
            if *budget == 0 {
                return Some(Err(FlowError::Degenerate("ODE step budget exhausted".into())));
            }
            *budget -= 1;
            let step = h.min(span - done);
            let full = self.rk4(&x, step);
            let half = self.rk4(&x, 0.5 * step).and_then(|r| match r {
                Ok(m) => self.rk4(&m, 0.5 * step),
                Err(e) => Some(Err(e)),
            });
            match (full, half) {
                (Some(Ok(a)), Some(Ok(b))) => {
                    let err = (&a - &b).norm() / 15.0;
                    let scale = tol * (1.0 + b.norm());
                    if err <= scale {
                        x = &b + (&b - &a) / 15.0;
                        if !self.space.in_domain(&x) {
                            x = b;
                        }
                        done += step;
                        let grow = if err > 0.0 { 0.9 * (scale / err).powf(0.2) } else { 2.0 };
                        *h = (step * grow.clamp(0.2, 2.0)).max(*h);
                    } else {
                        *h = step * (0.9 * (scale / err).powf(0.2)).clamp(0.1, 0.5);
                    }
                }
                (Some(Err(e)), _) | (_, Some(Err(e))) => return Some(Err(e)),
                _ => *h = 0.25 * step,
            }
            if *h < 1e-9 * span {
                return None;
            }
        }
        Some(Ok(x))
    }
}

/// Integrates the flow from `x0` on `[0, T]` with classical Runge–Kutta and
/// step doubling, recording samples every `cfg.h`. A run that reaches a
/// critical point stays there; one that cannot continue inside the domain
/// is truncated and flagged.
pub fn ode_oracle(
    phi: &Potential,
    space: &dyn AsymmetricSpace,
    x0: &Point,
    t_end: f64,
    cfg: &RkConfig,
) -> Result<Trajectory> {
    ensure_in_domain(space, x0)?;
    if !(t_end > 0.0) || !(cfg.h > 0.0) {
        return Err(FlowError::Parameter("final time and step must be positive".into()));
    }
    let tangent = space
        .tangent()
        .filter(|t| t.is_smooth())
        .ok_or_else(|| FlowError::Unsupported(format!("space {} has no smooth tangent structure", space.name())))?;
    if !phi.is_smooth() {
        return Err(FlowError::Unsupported(format!("potential {} is not smooth", phi.name())));
    }
    let field = Field { phi, space, tangent };
    let n = (t_end / cfg.h - 1e-9).ceil().max(1.0) as usize;
    let span = t_end / n as f64;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        points: Vec::with_capacity(n + 1),
        phi_values: Vec::with_capacity(n + 1),
        slope_values: Vec::with_capacity(n + 1),
        speed_values: Vec::with_capacity(n + 1),
        provenance: Provenance::OdeOracle,
        exited: false,
    };
    let mut x = x0.clone();
    let mut h = span;
    let mut budget = cfg.max_substeps;
    let mut stopped = false;
    for i in 0..=n {
        let (_, f) = field.eval(&x).expect("sample lies in the domain")?;
        let p = phi.p;
        traj.times.push(i as f64 * span);
        traj.phi_values.push(phi.value(&x));
        traj.slope_values.push(f);
        traj.speed_values.push(if stopped { 0.0 } else { f.powf(1.0 / (p - 1.0)) });
        traj.points.push(x.clone());
        if i == n {
            break;
        }
        if !stopped && f < cfg.critical_tol {
            debug!("oracle reached a critical point at t = {}", i as f64 * span);
            stopped = true;
        }
        if stopped {
            continue;
        }
        match field.advance(&x, span, &mut h, cfg.tol, &mut budget) {
            Some(Ok(next)) => x = next,
            Some(Err(e)) => return Err(e),
            None => {
                traj.exited = true;
                break;
            }
        }
    }
    Ok(traj)
}

/// Largest `|dφ(ξ)(ξ′) + F(ξ′)^p|` over the samples, with `ξ′` the flow
/// field at the sample.
pub fn chain_rule_residual(traj: &Trajectory, phi: &Potential, space: &dyn AsymmetricSpace) -> Result<f64> {
    let tangent = space
        .tangent()
        .ok_or_else(|| FlowError::Unsupported(format!("space {} has no tangent structure", space.name())))?;
    let field = Field { phi, space, tangent };
    let mut worst = 0.0f64;
    for x in &traj.points {
        let (v, _) = field.eval(x).ok_or_else(|| FlowError::domain(&space.name(), x))??;
        let d = phi
            .differential(x)
            .ok_or_else(|| FlowError::Unsupported(format!("potential {} is not differentiable", phi.name())))?;
        worst = worst.max((d.dot(&v) + tangent.norm(x, &v).powf(phi.p)).abs());
    }
    Ok(worst)
}

/// Largest `|∇(−φ)(ξ) − 𝔏⁻¹(−dφ_fd(ξ))|` over the samples, where `dφ_fd` is
/// a central difference of `φ`.
pub fn gradient_consistency_residual(traj: &Trajectory, phi: &Potential, space: &dyn AsymmetricSpace) -> Result<f64> {
    let tangent = space
        .tangent()
        .ok_or_else(|| FlowError::Unsupported(format!("space {} has no tangent structure", space.name())))?;
    let mut worst = 0.0f64;
    for x in &traj.points {
        let g = descending_gradient(space, phi, x)?;
        let h = 1e-6 * (1.0 + x.norm());
        let fd = Point::from_fn(x.len(), |i, _| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            (phi.value(&a) - phi.value(&b)) / (2.0 * h)
        });
        let g_fd = tangent.legendre_inv(x, &-fd);
        worst = worst.max((&g - g_fd).norm() / (1.0 + g.norm()));
    }
    Ok(worst)
}
