//! Experiment configuration: parsing, validation and construction of the
//! space and potential it describes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use asymflow_core::analysis::RkConfig;
use asymflow_core::envelope::SolverConfig;
use asymflow_core::metric::FnSpace;
use asymflow_core::spaces::{Euclidean, FunkBall, Minkowski, Randers};
use asymflow_core::{Point, Potential, SpaceHandle};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p: f64,
    pub lambda: Option<f64>,
    pub x0: Vec<f64>,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub tau_sweep: Vec<f64>,
    pub space: SpaceConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: RkConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_p() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Euclidean,
    Randers,
    Minkowski,
    Funk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Lp,
    EllipticRanders,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: SpaceKind,
    pub dim: usize,
    /// Randers drift, or the linear part `b` of an elliptic Randers norm.
    pub drift: Option<Vec<f64>>,
    pub norm: Option<NormKind>,
    /// Exponent of an `ℓ^p` norm.
    pub exponent: Option<f64>,
    /// Row-major matrix `A` of an elliptic Randers norm.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Subtracted from every distance. Produces an invalid metric for
    /// exercising the axiom checks.
    #[serde(default)]
    pub distance_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    Quadratic,
    Linear,
    LinearPlusQuadratic,
    SquaredDistance,
    FunkLog,
    L1Split,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub name: PotentialName,
    pub center: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    MetricAxioms,
    Legendre,
    EnvelopeMonotonicity,
    DiscreteEnergy,
    Convexity,
    Decay,
    Regularization,
    Sweep,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::MetricAxioms,
        Check::Legendre,
        Check::EnvelopeMonotonicity,
        Check::DiscreteEnergy,
        Check::Convexity,
        Check::Decay,
        Check::Regularization,
        Check::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::MetricAxioms => "metric_axioms",
            Check::Legendre => "legendre",
            Check::EnvelopeMonotonicity => "envelope_monotonicity",
            Check::DiscreteEnergy => "discrete_energy",
            Check::Convexity => "convexity",
            Check::Decay => "decay",
            Check::Regularization => "regularization",
            Check::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub checks: Vec<Check>,
    /// Sample count of the sampled property checks.
    pub samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            checks: Check::ALL.to_vec(),
            samples: 500,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub trajectory: String,
    pub oracle: String,
    pub summary: String,
    pub verify: String,
    pub sweep: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            trajectory: "trajectory.csv".into(),
            oracle: "oracle.csv".into(),
            summary: "summary.json".into(),
            verify: "verify.json".into(),
            sweep: "sweep.csv".into(),
        }
    }
}

/// A validated configuration with its space and potential built.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub space: SpaceHandle,
    pub phi: Potential,
    pub x0: Point,
}

impl Experiment {
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| anyhow!("invalid config {}: {e}", path.display()))?;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        if let Some(out) = out {
            cfg.output.dir = out;
        }
        cfg.solver.seed = cfg.seed;
        Self::build(cfg).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn build(cfg: ExperimentConfig) -> Result<Self> {
        validate(&cfg)?;
        let space = build_space(&cfg.space)?;
        let phi = build_potential(&cfg, &space)?;
        let x0 = Point::from_vec(cfg.x0.clone());
        if !space.in_domain(&x0) {
            bail!("x0: point {:?} lies outside the domain of {}", cfg.x0, space.name());
        }
        if !phi.value(&x0).is_finite() {
            bail!("x0: potential {} is not finite at {:?}", phi.name(), cfg.x0);
        }
        Ok(Experiment { cfg, space, phi, x0 })
    }

    pub fn output_path(&self, file: &str) -> PathBuf {
        self.cfg.output.dir.join(file)
    }

    /// Whether the smooth reference integrator applies.
    pub fn is_smooth(&self) -> bool {
        self.phi.is_smooth() && self.space.tangent().is_some_and(|t| t.is_smooth())
    }
}

fn finite(field: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) if values.len() > 1 => bail!("{field}[{i}]: value must be finite"),
        Some(_) => bail!("{field}: value must be finite"),
        None => Ok(()),
    }
}

fn length(field: &str, values: &[f64], dim: usize) -> Result<()> {
    if values.len() != dim {
        bail!("{field}: expected {dim} entries, got {}", values.len());
    }
    finite(field, values)
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let dim = cfg.space.dim;
    if dim == 0 {
        bail!("space.dim: must be positive");
    }
    finite("p", &[cfg.p])?;
    if cfg.p <= 1.0 {
        bail!("p: must exceed 1, got {}", cfg.p);
    }
    if let Some(l) = cfg.lambda {
        finite("lambda", &[l])?;
    }
    length("x0", &cfg.x0, dim)?;
    finite("T", &[cfg.t_end])?;
    if cfg.t_end <= 0.0 {
        bail!("T: must be positive, got {}", cfg.t_end);
    }
    finite("tau_sweep", &cfg.tau_sweep)?;
    if cfg.tau_sweep.is_empty() {
        bail!("tau_sweep: must not be empty");
    }
    if let Some(i) = cfg.tau_sweep.iter().position(|t| *t <= 0.0 || *t > cfg.t_end) {
        bail!("tau_sweep[{i}]: step sizes must lie in (0, T]");
    }
    if !cfg.tau_sweep.windows(2).all(|w| w[0] > w[1]) {
        bail!("tau_sweep: step sizes must be strictly decreasing");
    }
    finite("space.distance_offset", &[cfg.space.distance_offset])?;
    for (field, v) in [("space.exponent", cfg.space.exponent), ("potential.mu", cfg.potential.mu), ("potential.weight", cfg.potential.weight)] {
        if let Some(v) = v {
            finite(field, &[v])?;
        }
    }
    finite("solver.tol", &[cfg.solver.tol])?;
    cfg.solver.validate().map_err(|e| anyhow!("solver: {e}"))?;
    finite("oracle", &[cfg.oracle.h, cfg.oracle.tol, cfg.oracle.critical_tol])?;
    if !(cfg.oracle.h > 0.0 && cfg.oracle.tol > 0.0 && cfg.oracle.critical_tol >= 0.0) {
        bail!("oracle: h and tol must be positive and critical_tol nonnegative");
    }
    if cfg.verify.samples < 3 {
        bail!("verify.samples: must be at least 3");
    }
    Ok(())
}

fn required<'a, T>(field: &str, value: &'a Option<T>) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| anyhow!("{field}: required for this selection"))
}

fn vector(field: &str, value: &Option<Vec<f64>>, dim: usize) -> Result<DVector<f64>> {
    let v = required(field, value)?;
    length(field, v, dim)?;
    Ok(DVector::from_column_slice(v))
}

fn build_space(cfg: &SpaceConfig) -> Result<SpaceHandle> {
    let dim = cfg.dim;
    let base: SpaceHandle = match cfg.kind {
        SpaceKind::Euclidean => Arc::new(Euclidean::new(dim)),
        SpaceKind::Randers => Arc::new(Randers::new(vector("space.drift", &cfg.drift, dim)?).map_err(|e| anyhow!("space.drift: {e}"))?),
        SpaceKind::Funk => Arc::new(FunkBall::new(dim).map_err(|e| anyhow!("space.dim: {e}"))?),
        SpaceKind::Minkowski => match required("space.norm", &cfg.norm)? {
            NormKind::Lp => {
                let q = *required("space.exponent", &cfg.exponent)?;
                Arc::new(Minkowski::lp(dim, q).map_err(|e| anyhow!("space.exponent: {e}"))?)
            }
            NormKind::EllipticRanders => {
                let rows = required("space.matrix", &cfg.matrix)?;
                if rows.len() != dim {
                    bail!("space.matrix: expected {dim} rows, got {}", rows.len());
                }
                for (i, row) in rows.iter().enumerate() {
                    length(&format!("space.matrix[{i}]"), row, dim)?;
                }
                let a = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                let b = match &cfg.drift {
                    Some(_) => vector("space.drift", &cfg.drift, dim)?,
                    None => DVector::zeros(dim),
                };
                Arc::new(Minkowski::elliptic_randers(a, b).map_err(|e| anyhow!("space.matrix: {e}"))?)
            }
        },
    };
    if cfg.distance_offset == 0.0 {
        return Ok(base);
    }
    let offset = cfg.distance_offset;
    let (d, dom, th) = (base.clone(), base.clone(), base.clone());
    Ok(Arc::new(
        FnSpace::new(format!("{} (offset {offset})", base.name()), dim, move |x, y| d.distance(x, y) - offset)
            .with_domain(move |x| dom.in_domain(x))
            .with_theta(move |r| th.theta(r))
            .with_sampling_radius(base.sampling_radius()),
    ))
}

fn build_potential(cfg: &ExperimentConfig, space: &SpaceHandle) -> Result<Potential> {
    let pc = &cfg.potential;
    let dim = cfg.space.dim;
    let center = || match &pc.center {
        Some(_) => vector("potential.center", &pc.center, dim),
        None => Ok(DVector::zeros(dim)),
    };
    let phi = match pc.name {
        PotentialName::Quadratic => Potential::quadratic(center()?),
        PotentialName::Linear => Potential::linear(vector("potential.c", &pc.c, dim)?),
        PotentialName::LinearPlusQuadratic => {
            let mu = *required("potential.mu", &pc.mu)?;
            if mu <= 0.0 {
                bail!("potential.mu: must be positive");
            }
            Potential::linear_plus_quadratic(vector("potential.c", &pc.c, dim)?, mu)
        }
        PotentialName::SquaredDistance => {
            let c = center()?;
            if !space.in_domain(&c) {
                bail!("potential.center: outside the domain of {}", space.name());
            }
            Potential::squared_distance(space.clone(), c)
        }
        PotentialName::FunkLog => {
            if cfg.space.kind != SpaceKind::Funk {
                bail!("potential.name: funk_log requires space.kind = \"funk\"");
            }
            Potential::funk_log(pc.weight.unwrap_or(1.0))
        }
        PotentialName::L1Split => Potential::l1_split(*required("potential.weight", &pc.weight)?, center()?),
    };
    let phi = phi.with_exponent(cfg.p);
    Ok(match cfg.lambda {
        Some(l) => phi.with_certificate(l),
        None => phi,
    })
}
