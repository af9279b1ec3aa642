//! Damped Newton minimization with finite-difference Hessians.
//!
//! The objective may return `+∞` outside its domain; line searches simply
//! back off. A subset of coordinates can be frozen, which is how the
//! resolvent solver explores the faces of piecewise smooth potentials.

use nalgebra::{DMatrix, DVector};

use crate::metric::Point;

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    /// Stop when the free gradient norm is below this.
    pub grad_tol: f64,
    /// Stop when a step moves less than `arg_tol (1 + |x|)`...
    pub arg_tol: f64,
    /// ...and the objective changes less than `obj_tol (1 + |f|)`.
    pub obj_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            grad_tol: 1e-13,
            arg_tol: 1e-14,
            obj_tol: 1e-15,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Point,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// The iterate escaped to infinity or the objective to `−∞`.
    pub diverged: bool,
}

const DIVERGENCE: f64 = 1e12;

fn restrict(v: &Point, free: &[usize]) -> DVector<f64> {
    DVector::from_iterator(free.len(), free.iter().map(|&i| v[i]))
}

/// Minimizes `f` over the coordinates listed in `free`, starting at `x0`.
pub fn minimize<F, G>(f: F, grad: G, x0: &Point, free: &[usize], cfg: &NewtonConfig) -> NewtonOutcome
where
    F: Fn(&Point) -> f64,
    G: Fn(&Point) -> Point,
{
    let m = free.len();
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut g = restrict(&grad(&x), free);
    let mut iterations = 0;
    let diverged = |x: &Point, fx: f64| fx < -DIVERGENCE || x.amax() > DIVERGENCE;

    if m == 0 || !fx.is_finite() {
        return NewtonOutcome {
            grad_norm: g.norm(),
            x,
            value: fx,
            iterations,
            diverged: fx == f64::NEG_INFINITY,
        };
    }

    while iterations < cfg.max_iter {
        let gn = g.norm();
        if !gn.is_finite() || gn <= cfg.grad_tol {
            break;
        }
        iterations += 1;

        let dir = newton_direction(&grad, &x, &g, free);
        let slope = g.dot(&dir);
        let (dir, slope) = if slope < 0.0 { (dir, slope) } else { (-&g, -gn * gn) };

        let mut accepted = None;
        let mut alpha = 1.0;
        let resolvable = -slope > 1e-13 * (1.0 + fx.abs());
        for _ in 0..if resolvable { 60 } else { 0 } {
            let cand = step(&x, &dir, alpha, free);
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * alpha * slope {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= 0.5;
        }
        if accepted.is_none() {
            // Near the optimum the decrease drowns in rounding; fall back
            // to accepting any step that shrinks the gradient.
            let mut alpha = 1.0;
            for _ in 0..30 {
                let cand = step(&x, &dir, alpha, free);
                let fc = f(&cand);
                if fc.is_finite() && fc <= fx + 1e-12 * (1.0 + fx.abs()) {
                    let gc = restrict(&grad(&cand), free);
                    if gc.norm() < gn {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((cand, fc)) = accepted else { break };

        let moved = (&cand - &x).norm();
        let change = (fx - fc).abs();
        x = cand;
        fx = fc;
        g = restrict(&grad(&x), free);
        if diverged(&x, fx) {
            return NewtonOutcome {
                grad_norm: g.norm(),
                x,
                value: fx,
                iterations,
                diverged: true,
            };
        }
        if moved <= cfg.arg_tol * (1.0 + x.norm()) && change <= cfg.obj_tol * (1.0 + fx.abs()) {
            break;
        }
    }

    NewtonOutcome {
        grad_norm: g.norm(),
        diverged: diverged(&x, fx),
        x,
        value: fx,
        iterations,
    }
}

fn step(x: &Point, dir: &DVector<f64>, alpha: f64, free: &[usize]) -> Point {
    let mut out = x.clone();
    for (k, &i) in free.iter().enumerate() {
        out[i] += alpha * dir[k];
    }
    out
}

fn newton_direction<G: Fn(&Point) -> Point>(grad: &G, x: &Point, g: &DVector<f64>, free: &[usize]) -> DVector<f64> {
    let m = free.len();
    let mut h = DMatrix::zeros(m, m);
    for (j, &i) in free.iter().enumerate() {
        let eps = 1e-7 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += eps;
        xm[i] -= eps;
        let gp = restrict(&grad(&xp), free);
        let gm = restrict(&grad(&xm), free);
        let col = if gp.iter().chain(gm.iter()).all(|c| c.is_finite()) {
            (gp - gm) / (2.0 * eps)
        } else if gm.iter().all(|c| c.is_finite()) {
            (g - gm) / eps
        } else if gp.iter().all(|c| c.is_finite()) {
            (gp - g) / eps
        } else {
            return -g.clone();
        };
        h.set_column(j, &col);
    }
    let h = (&h + h.transpose()) * 0.5;
    let diag = h.diagonal().amax().max(1e-300);
    let mut mu = 0.0;
    for _ in 0..20 {
        let mut reg = h.clone();
        for k in 0..m {
            reg[(k, k)] += mu;
        }
        if let Some(ch) = reg.cholesky() {
            return -ch.solve(g);
        }
        mu = if mu == 0.0 { 1e-10 * diag } else { mu * 10.0 };
    }
    -g.clone()
}
