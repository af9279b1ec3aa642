//! Gauss–Legendre quadrature with interval bisection.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// A fixed-order rule applied adaptively.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Single application on `[a, b]`.
    pub fn rule<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: &mut F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Bisects until the two halves agree with the whole to within `tol`
    /// (absolute, scaled by the interval's share) or `max_depth` is hit.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, tol: f64, max_depth: usize, f: &mut F) -> f64 {
        let whole = self.rule(a, b, f);
        self.refine(a, b, whole, tol, max_depth, f)
    }

    fn refine<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, whole: f64, tol: f64, depth: usize, f: &mut F) -> f64 {
        let m = 0.5 * (a + b);
        let left = self.rule(a, m, f);
        let right = self.rule(m, b, f);
        let err = (left + right - whole).abs();
        if depth == 0 || err <= tol || !err.is_finite() {
            return left + right;
        }
        self.refine(a, m, left, 0.5 * tol, depth - 1, f) + self.refine(m, b, right, 0.5 * tol, depth - 1, f)
    }
}
