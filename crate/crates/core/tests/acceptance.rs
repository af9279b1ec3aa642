//! Acceptance suite: runs every criterion, prints one line per criterion and
//! exits non-zero if any of them fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asymflow_core::analysis::{
    certify_convexity, decay_exponent, dne_residual, monotone_slope_check, ode_oracle, regularization_constant,
    verify_exponential_decay, verify_slope_regularization, RkConfig, Trajectory,
};
use asymflow_core::envelope::{envelope_monotonicity_check, resolvent_chain_check, SolverConfig};
use asymflow_core::metric::{appendix_constant, symmetrized_distance};
use asymflow_core::mms::{
    discrete_energy_identity, discrete_slope_monotonicity_check, energy_monotonicity_check, limit_trajectory,
    run_scheme, sweep_runs, trajectory_from_solution, Partition,
};
use asymflow_core::spaces::{Euclidean, FunkBall, Randers};
use asymflow_core::{AsymmetricSpace, Point, Potential, SpaceHandle};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn p2(a: f64, b: f64) -> Point {
    Point::from_vec(vec![a, b])
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

/// A certified smooth convex test problem.
struct Case {
    name: &'static str,
    space: SpaceHandle,
    phi: Potential,
    x0: Point,
}

fn cases() -> Vec<Case> {
    let euclid: SpaceHandle = Arc::new(Euclidean::new(2));
    let randers: SpaceHandle = Arc::new(Randers::new(DVector::from_vec(vec![0.3, 0.0])).unwrap());
    let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
    vec![
        Case {
            name: "euclidean quadratic",
            space: euclid,
            phi: Potential::quadratic(Point::zeros(2)).with_certificate(1.0),
            x0: p2(1.0, 0.5),
        },
        Case {
            name: "randers quadratic",
            space: randers,
            phi: Potential::quadratic(Point::zeros(2)).with_certificate(1.0 / 1.69),
            x0: p2(1.0, -0.5),
        },
        Case {
            name: "funk squared distance",
            phi: Potential::squared_distance(funk.clone(), Point::zeros(2)).with_certificate(1.0),
            space: funk,
            x0: p2(0.4, 0.2),
        },
    ]
}

fn oracle(case: &Case, t_end: f64) -> Trajectory {
    ode_oracle(&case.phi, case.space.as_ref(), &case.x0, t_end, &RkConfig::default()).expect("oracle run")
}

fn ensure(cond: bool, msg: String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit: Duration) -> std::result::Result<(), String> {
    ensure(elapsed < limit, format!("runtime {:.2?} exceeds {:?}", elapsed, limit))
}

fn funk_closed_forms() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let funk = FunkBall::new(n).unwrap();
        let o = Point::zeros(n);
        for _ in 0..500 {
            let dir = Point::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)).normalize();
            let x = dir * rng.gen_range(0.0..0.999);
            let r = x.norm();
            worst = worst.max((funk.distance(&o, &x) + (-r).ln_1p()).abs());
            worst = worst.max((funk.distance(&x, &o) - r.ln_1p()).abs());
        }
    }
    let funk = FunkBall::new(2).unwrap();
    let o = Point::zeros(2);
    let mut boundary: f64 = 0.0;
    for k in 0..=60 {
        let r = 1.0 - 10f64.powf(-(k as f64) / 10.0);
        let r = r.min(1.0 - 1e-6);
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        boundary = boundary.max(funk.distance(&p2(r * theta.cos(), r * theta.sin()), &o));
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-12, format!("closed-form error {worst:e} > 1e-12"))?;
    ensure(
        boundary <= 2f64.ln() + 1e-9,
        format!("d_F(x,0) = {boundary} exceeds log 2 + 1e-9"),
    )?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "max error {worst:.1e} (tol 1e-12), max d_F(x,0) near boundary {boundary:.9} <= log 2, {elapsed:.2?}"
    ))
}

/// Hilbert distance `½ log((|x−b||y−a|)/(|x−a||y−b|))` with `a`, `b` the
/// endpoints of the chord through `x` and `y` on the unit sphere, `a` beyond
/// `x` and `b` beyond `y`.
fn hilbert_cross_ratio(x: &Point, y: &Point) -> f64 {
    let u = (y - x).normalize();
    let bx = x.dot(&u);
    let disc = (bx * bx - x.norm_squared() + 1.0).sqrt();
    let (s_a, s_b) = (-bx - disc, -bx + disc);
    let a = x + &u * s_a;
    let b = x + &u * s_b;
    0.5 * (((x - &b).norm() * (y - &a).norm()) / ((x - &a).norm() * (y - &b).norm())).ln()
}

fn hilbert_symmetrization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let funk = FunkBall::new(n).unwrap();
        let sample = |rng: &mut ChaCha8Rng| {
            let dir = Point::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)).normalize();
            dir * rng.gen_range(0.0f64..0.95).sqrt()
        };
        for _ in 0..1000 {
            let (x, y) = (sample(&mut rng), sample(&mut rng));
            let sym = symmetrized_distance(&funk, &x, &y).map_err(|e| e.to_string())?;
            let hil = hilbert_cross_ratio(&x, &y);
            worst = worst.max((sym - hil).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-10, format!("cross-ratio disagreement {worst:e} > 1e-10"))?;
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("max |sym − hilbert| {worst:.1e} on 2×1000 pairs (tol 1e-10), {elapsed:.2?}"))
}

fn quadratic_recursion() -> Outcome {
    let start = Instant::now();
    let e = Euclidean::new(2);
    let phi = Potential::quadratic(Point::zeros(2));
    let x0 = p2(1.0, 2.0);
    let sol = run_scheme(&phi, &e, &x0, &Partition::uniform(0.1, 100).unwrap(), &cfg()).map_err(|e| e.to_string())?;
    let worst = sol
        .xs
        .iter()
        .enumerate()
        .map(|(k, x)| (x - &x0 / 1.1f64.powi(k as i32)).norm())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    ensure(worst <= 1e-8, format!("max deviation {worst:e} > 1e-8"))?;
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("max |Ξ^k − x0/(1+τ)^k| {worst:.1e} over 100 steps (tol 1e-8), {elapsed:.2?}"))
}

fn energy_identity() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (case, tol) in cases().iter().zip([1e-4, 1e-3, 1e-3]) {
        let (_, rep) =
            limit_trajectory(&case.phi, case.space.as_ref(), &case.x0, 1.0, &[1e-3], &cfg()).map_err(|e| e.to_string())?;
        ensure(
            rep.energy_residual <= tol,
            format!("{}: residual {:e} > {tol:e}", case.name, rep.energy_residual),
        )?;
        parts.push(format!("{} {:.1e} (tol {tol:.0e})", case.name, rep.energy_residual));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!("{}, {elapsed:.2?}", parts.join(", ")))
}

fn discrete_energy() -> Outcome {
    let e = Euclidean::new(2);
    let quad = Potential::quadratic(Point::zeros(2));
    let sol = run_scheme(&quad, &e, &p2(1.0, 2.0), &Partition::uniform(0.1, 10).unwrap(), &cfg()).map_err(|e| e.to_string())?;
    let mut closed: f64 = 0.0;
    for k in 1..=sol.partition.len() {
        closed = closed.max(discrete_energy_identity(&quad, &e, &sol, k - 1, k, 32, &cfg()).map_err(|e| e.to_string())?);
    }
    ensure(closed <= 1e-5, format!("closed-form step residual {closed:e} > 1e-5"))?;

    let mut numeric: f64 = 0.0;
    for case in cases().iter().skip(1) {
        let sol = run_scheme(&case.phi, case.space.as_ref(), &case.x0, &Partition::uniform(0.05, 10).unwrap(), &cfg())
            .map_err(|e| e.to_string())?;
        for k in 1..=sol.partition.len() {
            let r = discrete_energy_identity(&case.phi, case.space.as_ref(), &sol, k - 1, k, 32, &cfg())
                .map_err(|e| e.to_string())?;
            ensure(r <= 1e-4, format!("{} step {k}: residual {r:e} > 1e-4", case.name))?;
            numeric = numeric.max(r);
        }
    }
    Ok(format!(
        "max step residual closed form {closed:.1e} (tol 1e-5), numeric {numeric:.1e} (tol 1e-4), order 32"
    ))
}

fn exponential_decay() -> Outcome {
    let e = Euclidean::new(2);
    let quad = Potential::quadratic(Point::zeros(2)).with_certificate(1.0);
    let x0 = p2(1.0, 0.5);
    let sol = run_scheme(&quad, &e, &x0, &Partition::uniform_until(1e-3, 3.0).unwrap(), &cfg()).map_err(|e| e.to_string())?;
    let mms = trajectory_from_solution(&quad, &e, &sol);
    let rate = decay_exponent(&mms, 0.0, 0.1, 3.0).map_err(|e| e.to_string())?;
    ensure((rate - 2.0).abs() <= 0.04, format!("MMS decay exponent {rate} not within 2% of 2"))?;
    let flow = ode_oracle(&quad, &e, &x0, 3.0, &RkConfig::default()).map_err(|e| e.to_string())?;
    let oracle_rate = decay_exponent(&flow, 0.0, 0.1, 3.0).map_err(|e| e.to_string())?;
    ensure(
        (oracle_rate - 2.0).abs() <= 0.04,
        format!("oracle decay exponent {oracle_rate} not within 2% of 2"),
    )?;

    let mut worst: f64 = f64::NEG_INFINITY;
    for case in cases() {
        let lambda = case.phi.lambda().unwrap();
        let cert = certify_convexity(&case.phi, case.space.as_ref(), 2.0, lambda, 200, 5, 7).map_err(|e| e.to_string())?;
        ensure(cert.verified, format!("{}: certificate λ = {lambda} not verified", case.name))?;
        let rep = verify_exponential_decay(&oracle(&case, 1.0), &case.phi, case.space.as_ref()).map_err(|e| e.to_string())?;
        ensure(rep.pass, format!("{}: decay bound violated by {:e}", case.name, rep.max_violation))?;
        worst = worst.max(rep.max_violation);
    }
    Ok(format!(
        "decay exponent MMS {rate:.4}, oracle {oracle_rate:.6} (target 2 ± 2%); max bound violation {worst:.1e} (tol 1e-8)"
    ))
}

fn slope_regularization() -> Outcome {
    let mut closed: f64 = 0.0;
    for t in [0.1, 0.5, 1.0, 2.0, 3.0] {
        for lambda in [-2.0, -0.5, 0.0, 0.5, 1.0, 3.0] {
            closed = closed.max((regularization_constant(2.0, lambda, t).map_err(|e| e.to_string())? - t).abs());
        }
        for p in [1.5, 2.5, 3.0, 4.0] {
            let exact = t.powf(p - 1.0) / (p - 1.0);
            closed = closed.max((regularization_constant(p, 0.0, t).map_err(|e| e.to_string())? - exact).abs());
        }
    }
    ensure(closed <= 1e-10, format!("C(p,λ,t) closed forms off by {closed:e}"))?;
    let mut worst: f64 = f64::NEG_INFINITY;
    for case in cases() {
        let rep = verify_slope_regularization(&oracle(&case, 1.0), &case.phi, case.space.as_ref(), &cfg(), 50)
            .map_err(|e| e.to_string())?;
        ensure(rep.pass, format!("{}: violation {:e}", case.name, rep.max_violation))?;
        worst = worst.max(rep.max_violation);
    }
    Ok(format!("max violation {worst:.1e} (tol 1e-6); C closed forms {closed:.1e} (tol 1e-10)"))
}

fn resolvent_chain() -> Outcome {
    let taus: Vec<f64> = (0..20).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 19.0)).collect();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut n = 0;
    for case in cases() {
        let rep = resolvent_chain_check(&case.phi, case.space.as_ref(), &case.x0, &taus, &cfg(), 1e-5)
            .map_err(|e| e.to_string())?;
        ensure(rep.pass, format!("{}: violation {:e}", case.name, rep.max_violation))?;
        worst = worst.max(rep.max_violation);
        n += rep.n_samples;
    }
    Ok(format!("max violation {worst:.1e} over {n} inequalities on 20 step sizes (tol 1e-5)"))
}

fn oracle_convergence() -> Outcome {
    let start = Instant::now();
    let sweep = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let mut parts = Vec::new();
    for case in cases() {
        let reference = oracle(&case, 1.0);
        let runs = sweep_runs(&case.phi, case.space.as_ref(), &case.x0, 1.0, &sweep, &cfg()).map_err(|e| e.to_string())?;
        let errors: Vec<f64> = runs
            .iter()
            .map(|sol| trajectory_from_solution(&case.phi, case.space.as_ref(), sol).sup_distance(case.space.as_ref(), &reference))
            .collect();
        ensure(
            errors.windows(2).all(|w| w[1] < w[0]),
            format!("{}: errors not decreasing {errors:?}", case.name),
        )?;
        let last = *errors.last().unwrap();
        ensure(last <= 5e-3, format!("{}: final error {last:e} > 5e-3", case.name))?;
        parts.push(format!("{} {:.1e}→{last:.1e}", case.name, errors[0]));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!("sup errors {} (final tol 5e-3), {elapsed:.2?}", parts.join(", ")))
}

fn dne() -> Outcome {
    let e = Euclidean::new(2);
    let quad = Potential::quadratic(Point::zeros(2));
    let flow = ode_oracle(&quad, &e, &p2(1.0, 0.5), 1.0, &RkConfig::default()).map_err(|e| e.to_string())?;
    let smooth = dne_residual(&flow, &quad, &e).map_err(|e| e.to_string())?;
    ensure(smooth.max_residual <= 1e-5, format!("smooth residual {:e} > 1e-5", smooth.max_residual))?;

    let r = Randers::new(DVector::from_vec(vec![0.3, 0.2])).unwrap();
    let split = Potential::l1_split(0.5, p2(0.2, -0.1));
    let sol = run_scheme(&split, &r, &p2(1.0, 0.5), &Partition::uniform_until(1e-3, 1.5).unwrap(), &cfg())
        .map_err(|e| e.to_string())?;
    let traj = trajectory_from_solution(&split, &r, &sol);
    let rep = dne_residual(&traj, &split, &r).map_err(|e| e.to_string())?;
    ensure(rep.max_residual <= 1e-2, format!("Randers split residual {:e} > 1e-2", rep.max_residual))?;
    Ok(format!(
        "smooth Euclidean {:.1e} (tol 1e-5); Randers split {:.1e} (tol 1e-2, {} samples used, {} kink-adjacent skipped)",
        smooth.max_residual, rep.max_residual, rep.n_used, rep.n_skipped
    ))
}

fn appendix_inequality() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 100_000,
        failure_persistence: None,
        rng_algorithm: proptest::test_runner::RngAlgorithm::ChaCha,
        ..Config::default()
    });
    let strategy = (0.0f64..10.0, 1e-6f64..10.0, -6.0f64..6.0, 1.0f64..8.0);
    runner
        .run(&strategy, |(a, b, log_eps, p)| {
            let eps = 10f64.powf(log_eps);
            let d = appendix_constant(p, eps).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let lhs = (1.0 + eps) * a.powf(p) + d * b.powf(p);
            let rhs = (a + b).powf(p);
            prop_assert!(lhs >= rhs * (1.0 - 1e-12), "a={a} b={b} eps={eps} p={p}: {lhs} < {rhs}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("100000 random (a, b, ε, p) tuples, zero violations at 1e-12 relative slack".into())
}

fn monotonicity_suite() -> Outcome {
    let mut reports = Vec::new();
    let taus = [0.01, 0.03, 0.1, 0.3, 1.0];
    let funk: SpaceHandle = Arc::new(FunkBall::new(2).unwrap());
    let e = Euclidean::new(2);
    reports.push(
        envelope_monotonicity_check(&Potential::funk_log(1.0), funk.as_ref(), &p2(0.3, -0.4), &taus, &cfg())
            .map_err(|e| e.to_string())?,
    );
    reports.push(
        envelope_monotonicity_check(&Potential::constant(1.0), &e, &p2(0.3, -0.4), &taus, &cfg()).map_err(|e| e.to_string())?,
    );
    for case in cases() {
        let space = case.space.as_ref();
        reports.push(envelope_monotonicity_check(&case.phi, space, &case.x0, &taus, &cfg()).map_err(|e| e.to_string())?);
        let sol = run_scheme(&case.phi, space, &case.x0, &Partition::uniform_until(0.01, 1.0).unwrap(), &cfg())
            .map_err(|e| e.to_string())?;
        reports.push(energy_monotonicity_check(&sol, 1e-10));
        reports.push(discrete_slope_monotonicity_check(&case.phi, space, &sol, 1e-5).map_err(|e| e.to_string())?);
        reports.push(monotone_slope_check(&oracle(&case, 1.0), &case.phi).map_err(|e| e.to_string())?);
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} ({:e})", r.check_name, r.max_violation))
        .collect();
    ensure(failed.is_empty(), format!("failed: {}", failed.join(", ")))?;
    let n: usize = reports.iter().map(|r| r.n_samples).sum();
    Ok(format!("{} checks, {n} sampled inequalities, zero violations beyond slack", reports.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("Funk closed forms", funk_closed_forms),
        ("symmetrized Funk is the Hilbert metric", hilbert_symmetrization),
        ("quadratic proximal recursion", quadratic_recursion),
        ("energy identity of the limit", energy_identity),
        ("discrete energy identity", discrete_energy),
        ("exponential decay", exponential_decay),
        ("slope regularization", slope_regularization),
        ("resolvent chain", resolvent_chain),
        ("MMS converges to the ODE oracle", oracle_convergence),
        ("doubly nonlinear equation residual", dne),
        ("power-sum inequality", appendix_inequality),
        ("monotonicity suite", monotonicity_suite),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
