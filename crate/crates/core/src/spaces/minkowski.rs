use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, Result};
use crate::metric::{AsymmetricSpace, Point};
use crate::spaces::TangentStructure;

type NormFn = dyn Fn(&Point) -> f64 + Send + Sync;

/// Norms accepted by [`Minkowski`].
#[derive(Clone)]
pub enum MinkowskiNorm {
    /// `sqrt(vᵀ A v) + ⟨b, v⟩` with `A` symmetric positive definite and
    /// `|b|_{A⁻¹} < 1`.
    EllipticRanders { a: DMatrix<f64>, b: DVector<f64> },
    /// `(Σ |v_i|^p)^{1/p}`; smooth only for `1 < p < ∞`.
    Lp { p: f64 },
    /// A user norm. `smooth` declares differentiability away from zero.
    Custom {
        name: String,
        norm: Arc<NormFn>,
        smooth: bool,
    },
}

impl fmt::Debug for MinkowskiNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MinkowskiNorm::EllipticRanders { a, b } => {
                write!(f, "EllipticRanders {{ a: {a:?}, b: {b:?} }}")
            }
            MinkowskiNorm::Lp { p } => write!(f, "Lp {{ p: {p} }}"),
            MinkowskiNorm::Custom { name, smooth, .. } => {
                write!(f, "Custom {{ name: {name}, smooth: {smooth} }}")
            }
        }
    }
}

/// `R^n` with a translation-invariant distance `d(x, y) = F(y − x)`.
#[derive(Debug, Clone)]
pub struct Minkowski {
    dim: usize,
    norm: MinkowskiNorm,
    reversibility: f64,
}

impl Minkowski {
    pub fn new(dim: usize, norm: MinkowskiNorm) -> Result<Self> {
        if dim == 0 {
            return Err(FlowError::Parameter("Minkowski dimension must be positive".into()));
        }
        let reversibility = match &norm {
            MinkowskiNorm::EllipticRanders { a, b } => {
                if a.nrows() != dim || a.ncols() != dim || b.len() != dim {
                    return Err(FlowError::Parameter("norm data has the wrong shape".into()));
                }
                if (a - a.transpose()).amax() > 1e-12 * a.amax() {
                    return Err(FlowError::Parameter("matrix A must be symmetric".into()));
                }
                let chol = a
                    .clone()
                    .cholesky()
                    .ok_or_else(|| FlowError::Parameter("matrix A must be positive definite".into()))?;
                let beta = b.dot(&chol.solve(b)).sqrt();
                if !(beta < 1.0) {
                    return Err(FlowError::Parameter(format!(
                        "drift has A-dual norm {beta}, must be < 1"
                    )));
                }
                (1.0 + beta) / (1.0 - beta)
            }
            MinkowskiNorm::Lp { p } => {
                if !(*p >= 1.0) {
                    return Err(FlowError::Parameter(format!("lp exponent {p} must be >= 1")));
                }
                1.0
            }
            MinkowskiNorm::Custom { norm, .. } => sampled_reversibility(dim, norm.as_ref())?,
        };
        Ok(Minkowski {
            dim,
            norm,
            reversibility,
        })
    }

    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        Self::new(dim, MinkowskiNorm::Lp { p })
    }

    pub fn elliptic_randers(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(b.len(), MinkowskiNorm::EllipticRanders { a, b })
    }

    pub fn custom(
        dim: usize,
        name: impl Into<String>,
        smooth: bool,
        norm: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(
            dim,
            MinkowskiNorm::Custom {
                name: name.into(),
                norm: Arc::new(norm),
                smooth,
            },
        )
    }

    pub fn norm_kind(&self) -> &MinkowskiNorm {
        &self.norm
    }

    fn eval(&self, v: &Point) -> f64 {
        match &self.norm {
            MinkowskiNorm::EllipticRanders { a, b } => v.dot(&(a * v)).max(0.0).sqrt() + b.dot(v),
            MinkowskiNorm::Lp { p } => lp_norm(v, *p),
            MinkowskiNorm::Custom { norm, .. } => norm(v),
        }
    }
}

fn lp_norm(v: &Point, p: f64) -> f64 {
    if p.is_infinite() {
        return v.amax();
    }
    let m = v.amax();
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|c| (c.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Worst ratio `F(−u)/F(u)` over sampled unit directions, with a small
/// margin for unsampled directions.
fn sampled_reversibility(dim: usize, norm: &NormFn) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 1.0;
    let axes = (0..dim).map(|i| Point::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 }));
    let random: Vec<Point> = (0..20_000)
        .map(|_| Point::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)))
        .filter(|u| u.norm() > 0.0)
        .collect();
    for u in axes.chain(random.iter().cloned()) {
        let (f, g) = (norm(&u), norm(&-&u));
        if !(f > 0.0 && g > 0.0 && f.is_finite() && g.is_finite()) {
            return Err(FlowError::Parameter("norm must be positive and finite off the origin".into()));
        }
        worst = worst.max(g / f);
    }
    for pair in random.chunks_exact(2) {
        let (u, w) = (&pair[0], &pair[1]);
        if norm(&(u + w)) > (norm(u) + norm(w)) * (1.0 + 1e-10) {
            return Err(FlowError::Parameter("norm violates the triangle inequality".into()));
        }
    }
    Ok(worst * 1.01)
}

impl TangentStructure for Minkowski {
    fn norm(&self, _x: &Point, v: &Point) -> f64 {
        self.eval(v)
    }

    fn norm_grad(&self, _x: &Point, v: &Point) -> Point {
        match &self.norm {
            MinkowskiNorm::EllipticRanders { a, b } => {
                let av = a * v;
                av / v.dot(&(a * v)).sqrt() + b
            }
            MinkowskiNorm::Lp { p } if p.is_finite() => {
                let f = lp_norm(v, *p);
                v.map(|c| c.signum() * (c.abs() / f).powf(p - 1.0))
            }
            _ => {
                let h = 1e-7 * v.norm();
                Point::from_fn(self.dim, |i, _| {
                    let mut vp = v.clone();
                    let mut vm = v.clone();
                    vp[i] += h;
                    vm[i] -= h;
                    (self.eval(&vp) - self.eval(&vm)) / (2.0 * h)
                })
            }
        }
    }

    fn dual_norm(&self, x: &Point, zeta: &Point) -> f64 {
        match &self.norm {
            MinkowskiNorm::Lp { p } => {
                let q = if *p == 1.0 {
                    f64::INFINITY
                } else if p.is_infinite() {
                    1.0
                } else {
                    p / (p - 1.0)
                };
                lp_norm(zeta, q)
            }
            _ => {
                let v = self.legendre_inv(x, zeta);
                self.eval(&v)
            }
        }
    }

    fn is_smooth(&self) -> bool {
        match &self.norm {
            MinkowskiNorm::EllipticRanders { .. } => true,
            MinkowskiNorm::Lp { p } => *p > 1.0 && p.is_finite(),
            MinkowskiNorm::Custom { smooth, .. } => *smooth,
        }
    }
}

impl AsymmetricSpace for Minkowski {
    fn name(&self) -> String {
        match &self.norm {
            MinkowskiNorm::EllipticRanders { .. } => format!("minkowski{}-elliptic", self.dim),
            MinkowskiNorm::Lp { p } => format!("minkowski{}-l{p}", self.dim),
            MinkowskiNorm::Custom { name, .. } => format!("minkowski{}-{name}", self.dim),
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        self.eval(&(y - x))
    }

    fn theta(&self, _r: f64) -> f64 {
        self.reversibility
    }

    fn global_theta(&self) -> Option<f64> {
        Some(self.reversibility)
    }

    fn tangent(&self) -> Option<&dyn TangentStructure> {
        Some(self)
    }

    fn distance_grad(&self, x: &Point, y: &Point) -> Option<Point> {
        let v = y - x;
        (self.is_smooth() && v.norm() > 0.0).then(|| self.norm_grad(x, &v))
    }

    fn geodesic(&self, x0: &Point, x1: &Point, t: f64) -> Option<Point> {
        Some(x0 + (x1 - x0) * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{check_axioms, sample_point};

    #[test]
    fn translation_invariance_is_exact() {
        let m = Minkowski::lp(3, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let x = sample_point(&m, &mut rng);
            let y = sample_point(&m, &mut rng);
            let h = Point::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let shifted = m.distance(&(&x + &h), &(&y + &h));
            let base = m.distance(&x, &y);
            // Translation only perturbs `y − x` by rounding.
            assert!((shifted - base).abs() <= 1e-14 * (1.0 + base));
        }
    }

    #[test]
    fn elliptic_randers_axioms_and_reversibility() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![0.4, -0.3]);
        let m = Minkowski::elliptic_randers(a, b).unwrap();
        assert!(check_axioms(&m, 2000, 3).passes(1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst: f64 = 0.0;
        for _ in 0..5000 {
            let u = Point::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            worst = worst.max(m.eval(&-&u) / m.eval(&u));
        }
        assert!(worst <= m.reversibility * (1.0 + 1e-12));
        assert!(worst > 0.99 * m.reversibility);
    }

    #[test]
    fn rejects_invalid_norm_data() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Minkowski::elliptic_randers(a, DVector::zeros(2)).is_err());
        let a = DMatrix::identity(2, 2);
        assert!(Minkowski::elliptic_randers(a, DVector::from_vec(vec![1.0, 0.0])).is_err());
        assert!(Minkowski::lp(2, 0.5).is_err());
        assert!(Minkowski::custom(2, "bad", true, |v: &Point| v[0].abs()).is_err());
    }

    #[test]
    fn non_smooth_norms_are_flagged() {
        assert!(!Minkowski::lp(2, 1.0).unwrap().is_smooth());
        assert!(!Minkowski::lp(2, f64::INFINITY).unwrap().is_smooth());
        assert!(Minkowski::lp(2, 1.5).unwrap().is_smooth());
        let l1 = Minkowski::lp(2, 1.0).unwrap();
        assert!(l1.distance_grad(&Point::zeros(2), &Point::from_vec(vec![1.0, 2.0])).is_none());
    }

    #[test]
    fn custom_norm_matches_builtin() {
        let custom = Minkowski::custom(2, "hex", true, |v: &Point| lp_norm(v, 4.0)).unwrap();
        let builtin = Minkowski::lp(2, 4.0).unwrap();
        let x = Point::zeros(2);
        let zeta = Point::from_vec(vec![0.3, -1.2]);
        let d1 = custom.dual_norm(&x, &zeta);
        let d2 = builtin.dual_norm(&x, &zeta);
        assert!((d1 - d2).abs() < 1e-7, "{d1} vs {d2}");
        assert!((custom.reversibility - 1.01).abs() < 1e-12);
    }
}
