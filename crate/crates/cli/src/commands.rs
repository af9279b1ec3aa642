//! The `run`, `verify` and `sweep` commands. Each returns whether every
//! check passed; errors are runtime or usage failures.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use asymflow_core::analysis::{
    certify_convexity, ode_oracle, verify_exponential_decay, verify_slope_regularization, Trajectory,
};
use asymflow_core::envelope::envelope_monotonicity_check;
use asymflow_core::metric::check_axioms;
use asymflow_core::mms::{
    a_priori_check, discrete_energy_identity, energy_monotonicity_check, limit_from_runs, run_scheme, sweep_runs,
    trajectory_from_solution, ConvergenceReport, Partition,
};
use asymflow_core::spaces::legendre_consistency_check;
use asymflow_core::{FlowError, Report};

use crate::config::{Check, Experiment};
use crate::output::{read_sweep_csv, sweep_csv, trajectory_csv, write_atomic, write_json, SweepRow, SCHEMA_VERSION};

/// Energy-identity residual accepted on the finest sweep member.
pub const ENERGY_TOL: f64 = 1e-3;
/// Per-step discrete energy-identity residual at quadrature order 32.
pub const DISCRETE_ENERGY_TOL: f64 = 1e-4;
pub const AXIOM_TOL: f64 = 1e-12;
pub const CERTIFICATE_TOL: f64 = 1e-8;
/// Noise floor for monotonicity of the sweep error column.
pub const SWEEP_NOISE: f64 = 1e-9;
/// Envelope evaluations used by the regularization check.
const ENVELOPE_SAMPLES: usize = 20;
const QUADRATURE_ORDER: usize = 32;
const CERTIFICATE_PAIRS: usize = 200;
const CERTIFICATE_TIMES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub status: Status,
    pub max_violation: Option<f64>,
    pub n_samples: usize,
    pub detail: String,
}

impl CheckRow {
    fn from_report(name: &str, report: &Report, detail: impl Into<String>) -> Self {
        CheckRow {
            name: name.into(),
            status: if report.pass { Status::Pass } else { Status::Fail },
            max_violation: Some(report.max_violation),
            n_samples: report.n_samples,
            detail: detail.into(),
        }
    }

    fn skipped(name: &str, detail: impl Into<String>) -> Self {
        CheckRow {
            name: name.into(),
            status: Status::Skipped,
            max_violation: None,
            n_samples: 0,
            detail: detail.into(),
        }
    }

    /// Unsupported checks are skipped and violated preconditions fail; any
    /// other error aborts the command.
    fn from_result(name: &str, result: asymflow_core::Result<Report>) -> Result<Self> {
        match result {
            Ok(r) => Ok(Self::from_report(name, &r, "")),
            Err(FlowError::Unsupported(msg)) => Ok(Self::skipped(name, msg)),
            Err(FlowError::Parameter(msg)) => Ok(CheckRow {
                name: name.into(),
                status: Status::Fail,
                max_violation: None,
                n_samples: 0,
                detail: msg,
            }),
            Err(e) => Err(e.into()),
        }
    }
}

fn all_pass(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.status != Status::Fail)
}

fn print_table(rows: &[CheckRow]) {
    println!("{:<24} {:<8} {:>14} {:>8}  detail", "check", "status", "max_violation", "samples");
    for r in rows {
        let v = r.max_violation.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
        println!("{:<24} {:<8} {:>14} {:>8}  {}", r.name, r.status, v, r.n_samples, r.detail);
    }
}

fn oracle(exp: &Experiment) -> Result<Option<Trajectory>> {
    if !exp.is_smooth() {
        return Ok(None);
    }
    let traj = ode_oracle(&exp.phi, exp.space.as_ref(), &exp.x0, exp.cfg.t_end, &exp.cfg.oracle)?;
    if traj.exited {
        info!("oracle left the domain at t = {}", traj.final_time());
    }
    Ok(Some(traj))
}

fn certificate_row(exp: &Experiment, name: &str) -> Result<CheckRow> {
    let Some(lambda) = exp.cfg.lambda else {
        return Ok(CheckRow::skipped(name, "no lambda requested"));
    };
    let cert = certify_convexity(
        &exp.phi,
        exp.space.as_ref(),
        exp.cfg.p,
        lambda,
        CERTIFICATE_PAIRS,
        CERTIFICATE_TIMES,
        exp.cfg.seed,
    );
    let row = CheckRow::from_result(
        name,
        cert.map(|c| Report::from_violation(name, c.max_violation, c.n_samples, CERTIFICATE_TOL)),
    )?;
    Ok(CheckRow {
        detail: format!("p = {}, lambda = {lambda}", exp.cfg.p),
        ..row
    })
}

fn bound_rows(exp: &Experiment, oracle: Option<&Trajectory>, decay: bool, regularization: bool) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let (space, phi) = (exp.space.as_ref(), &exp.phi);
    match oracle {
        None => {
            let why = "requires a smooth space and potential";
            rows.extend(decay.then(|| CheckRow::skipped("decay", why)));
            rows.extend(regularization.then(|| CheckRow::skipped("regularization", why)));
        }
        Some(traj) => {
            if decay {
                rows.push(CheckRow::from_result("decay", verify_exponential_decay(traj, phi, space))?);
            }
            if regularization {
                let r = verify_slope_regularization(traj, phi, space, &exp.cfg.solver, ENVELOPE_SAMPLES);
                rows.push(CheckRow::from_result("regularization", r)?);
            }
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct OracleSummary {
    samples: usize,
    final_time: f64,
    exited: bool,
    sup_distance_to_mms: f64,
}

#[derive(Serialize)]
struct TrajectorySummary {
    samples: usize,
    final_time: f64,
    initial_phi: f64,
    final_phi: f64,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    schema: u32,
    command: &'static str,
    space: String,
    potential: String,
    p: f64,
    lambda: Option<f64>,
    seed: u64,
    #[serde(rename = "T")]
    t_end: f64,
    x0: &'a [f64],
    convergence: ConvergenceReport,
    trajectory: TrajectorySummary,
    oracle: Option<OracleSummary>,
    checks: Vec<CheckRow>,
    pass: bool,
}

/// Runs the sweep, writes the finest trajectory, the oracle trajectory and
/// the JSON summary.
pub fn run(exp: &Experiment) -> Result<bool> {
    let cfg = &exp.cfg;
    let (space, phi) = (exp.space.as_ref(), &exp.phi);
    let runs = sweep_runs(phi, space, &exp.x0, cfg.t_end, &cfg.tau_sweep, &cfg.solver)?;
    let (traj, convergence) = limit_from_runs(phi, space, cfg.t_end, &runs);
    write_atomic(&exp.output_path(&cfg.output.trajectory), &trajectory_csv(&traj)?)?;
    let oracle = oracle(exp)?;
    if let Some(o) = &oracle {
        write_atomic(&exp.output_path(&cfg.output.oracle), &trajectory_csv(o)?)?;
    }

    let mut checks = vec![CheckRow::from_report(
        "energy_identity",
        &Report::from_violation("energy_identity", convergence.energy_residual, traj.len(), ENERGY_TOL),
        format!("finest tau = {}", cfg.tau_sweep.last().unwrap()),
    )];
    let s_bound = phi.value(&exp.x0).max(0.0) + 1.0;
    let finest = runs.last().unwrap();
    checks.push(CheckRow::from_result(
        "a_priori",
        a_priori_check(phi, space, finest, &exp.x0, s_bound, cfg.t_end, &cfg.solver),
    )?);
    checks.push(certificate_row(exp, "convexity_certificate")?);
    if phi.certificate.is_some() {
        checks.extend(bound_rows(exp, oracle.as_ref(), true, true)?);
    }
    let pass = all_pass(&checks);
    print_table(&checks);

    let summary = RunSummary {
        schema: SCHEMA_VERSION,
        command: "run",
        space: space.name(),
        potential: phi.name(),
        p: cfg.p,
        lambda: cfg.lambda,
        seed: cfg.seed,
        t_end: cfg.t_end,
        x0: &cfg.x0,
        trajectory: TrajectorySummary {
            samples: traj.len(),
            final_time: traj.final_time(),
            initial_phi: traj.phi_values[0],
            final_phi: *traj.phi_values.last().unwrap(),
        },
        oracle: oracle.as_ref().map(|o| OracleSummary {
            samples: o.len(),
            final_time: o.final_time(),
            exited: o.exited,
            sup_distance_to_mms: traj.sup_distance(space, o),
        }),
        convergence,
        checks,
        pass,
    };
    write_json(&exp.output_path(&cfg.output.summary), &summary)?;
    Ok(pass)
}

fn sweep_rows(exp: &Experiment, oracle: Option<&Trajectory>) -> Result<Vec<CheckRow>> {
    let cfg = &exp.cfg;
    let (space, phi) = (exp.space.as_ref(), &exp.phi);
    let runs = sweep_runs(phi, space, &exp.x0, cfg.t_end, &cfg.tau_sweep, &cfg.solver)?;
    let (traj, conv) = limit_from_runs(phi, space, cfg.t_end, &runs);
    let increase = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut rows = vec![
        CheckRow::from_report(
            "sweep_cauchy",
            &Report::from_violation("sweep_cauchy", increase(&conv.cauchy_distances), conv.cauchy_distances.len(), SWEEP_NOISE),
            format!("distances {:?}", conv.cauchy_distances),
        ),
        CheckRow::from_report(
            "sweep_energy",
            &Report::from_violation("sweep_energy", conv.energy_residual, traj.len(), ENERGY_TOL),
            "",
        ),
    ];
    rows.push(match oracle {
        Some(o) => {
            let errors: Vec<f64> = runs
                .iter()
                .map(|r| trajectory_from_solution(phi, space, r).sup_distance(space, o))
                .collect();
            CheckRow::from_report(
                "sweep_oracle",
                &Report::from_violation("sweep_oracle", increase(&errors), errors.len(), SWEEP_NOISE),
                format!("errors {errors:?}"),
            )
        }
        None => CheckRow::skipped("sweep_oracle", "requires a smooth space and potential"),
    });
    Ok(rows)
}

fn discrete_energy_row(exp: &Experiment) -> Result<CheckRow> {
    let cfg = &exp.cfg;
    let (space, phi) = (exp.space.as_ref(), &exp.phi);
    let tau = cfg.tau_sweep[0];
    let sol = run_scheme(phi, space, &exp.x0, &Partition::uniform_until(tau, cfg.t_end)?, &cfg.solver)?;
    let n = sol.partition.len();
    let stride = (n / 10).max(1);
    let residuals = (1..=n)
        .step_by(stride)
        .map(|k| discrete_energy_identity(phi, space, &sol, k - 1, k, QUADRATURE_ORDER, &cfg.solver))
        .collect::<asymflow_core::Result<Vec<f64>>>()?;
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let identity = Report::from_violation("discrete_energy_identity", worst, residuals.len(), DISCRETE_ENERGY_TOL);
    let monotone = energy_monotonicity_check(&sol, 1e-9);
    Ok(CheckRow::from_report(
        "discrete_energy",
        &Report::combine("discrete_energy", &[identity, monotone]),
        format!("tau = {tau}, identity residual {worst:.3e}"),
    ))
}

#[derive(Serialize)]
struct VerifySummary {
    schema: u32,
    command: &'static str,
    space: String,
    potential: String,
    seed: u64,
    checks: Vec<CheckRow>,
    pass: bool,
}

/// Runs the selected property checks and prints a pass/fail table.
pub fn verify(exp: &Experiment) -> Result<bool> {
    let cfg = &exp.cfg;
    let (space, phi) = (exp.space.as_ref(), &exp.phi);
    let selected = |c: Check| cfg.verify.checks.contains(&c);
    let n = cfg.verify.samples;
    let needs_oracle = selected(Check::Decay) || selected(Check::Regularization) || selected(Check::Sweep);
    let oracle = if needs_oracle { oracle(exp)? } else { None };
    let mut rows = Vec::new();
    for check in Check::ALL.into_iter().filter(|c| selected(*c)) {
        match check {
            Check::MetricAxioms => {
                let a = check_axioms(space, n, cfg.seed);
                let worst = a.max_triangle_violation.max(a.max_reversibility_violation).max(a.max_identity_violation);
                rows.push(CheckRow {
                    name: check.name().into(),
                    status: if a.passes(AXIOM_TOL) { Status::Pass } else { Status::Fail },
                    max_violation: Some(worst),
                    n_samples: a.n_samples,
                    detail: format!(
                        "triangle {:.1e}, reversibility {:.1e}, identity {:.1e} ({} failures)",
                        a.max_triangle_violation, a.max_reversibility_violation, a.max_identity_violation, a.identity_failures
                    ),
                });
            }
            Check::Legendre => {
                rows.push(CheckRow::from_result(check.name(), legendre_consistency_check(space, n, cfg.seed))?);
            }
            Check::EnvelopeMonotonicity => {
                let taus: Vec<f64> = cfg.tau_sweep.iter().rev().copied().collect();
                let r = envelope_monotonicity_check(phi, space, &exp.x0, &taus, &cfg.solver);
                rows.push(CheckRow::from_result(check.name(), r)?);
            }
            Check::DiscreteEnergy => rows.push(discrete_energy_row(exp)?),
            Check::Convexity => rows.push(certificate_row(exp, check.name())?),
            Check::Decay => rows.extend(bound_rows(exp, oracle.as_ref(), true, false)?),
            Check::Regularization => rows.extend(bound_rows(exp, oracle.as_ref(), false, true)?),
            Check::Sweep => rows.extend(sweep_rows(exp, oracle.as_ref())?),
        }
    }
    let pass = all_pass(&rows);
    print_table(&rows);
    write_json(
        &exp.output_path(&cfg.output.verify),
        &VerifySummary {
            schema: SCHEMA_VERSION,
            command: "verify",
            space: space.name(),
            potential: phi.name(),
            seed: cfg.seed,
            checks: rows,
            pass,
        },
    )?;
    Ok(pass)
}

/// Runs every sweep member concurrently, writes one row file per member and
/// merges them in sweep order into the error table. The reference is the
/// oracle when the problem is smooth and the finest member otherwise.
pub fn sweep(exp: &Experiment) -> Result<bool> {
    let cfg = &exp.cfg;
    if cfg.tau_sweep.len() < 2 {
        bail!("tau_sweep: the sweep command needs at least 2 step sizes, got {}", cfg.tau_sweep.len());
    }
    let (space, phi) = (exp.space.as_ref(), &exp.phi);
    let members = cfg
        .tau_sweep
        .par_iter()
        .map(|tau| {
            let start = Instant::now();
            let sol = run_scheme(phi, space, &exp.x0, &Partition::uniform_until(*tau, cfg.t_end)?, &cfg.solver)?;
            let traj = trajectory_from_solution(phi, space, &sol);
            let energy = traj.energy_residual(cfg.p);
            Ok((traj, energy, start.elapsed()))
        })
        .collect::<Result<Vec<_>>>()?;
    let oracle = oracle(exp)?;
    let reference = oracle.as_ref().unwrap_or_else(|| &members.last().unwrap().0);

    let dir = exp.output_path(&format!("{}.members", cfg.output.sweep));
    let paths = members
        .par_iter()
        .zip(&cfg.tau_sweep)
        .enumerate()
        .map(|(i, ((traj, energy, elapsed), tau))| {
            let start = Instant::now();
            let row = SweepRow {
                tau: *tau,
                sup_error: traj.sup_distance(space, reference),
                energy_residual: *energy,
                runtime_ms: (*elapsed + start.elapsed()).as_millis() as u64,
            };
            let path = dir.join(format!("member_{i:03}.csv"));
            write_atomic(&path, &sweep_csv(&[row])?)?;
            Ok(path)
        })
        .collect::<Result<Vec<PathBuf>>>()?;
    let mut rows = Vec::with_capacity(paths.len());
    for path in &paths {
        rows.extend(read_sweep_csv(path)?);
    }
    write_atomic(&exp.output_path(&cfg.output.sweep), &sweep_csv(&rows)?)?;

    println!("{:>12} {:>14} {:>16} {:>10}", "tau", "sup_error", "energy_residual", "runtime_ms");
    for r in &rows {
        println!("{:>12} {:>14.6e} {:>16.6e} {:>10}", r.tau, r.sup_error, r.energy_residual, r.runtime_ms);
    }
    let monotone = rows.windows(2).all(|w| w[1].sup_error <= w[0].sup_error + SWEEP_NOISE);
    if !monotone {
        eprintln!("sup_error is not decreasing along the sweep");
    }
    Ok(monotone)
}
