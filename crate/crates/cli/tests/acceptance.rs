//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p knet-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use knet::hash::{
    check_ranges, lambda_exponent, psi_all, random_points, separation_check, separation_trials,
};
use knet::inner::verify_inner;
use knet::network::{eval_batch, load, save, NetworkError};
use knet::outer::{cube_grid, fit_exact_with_cap, merge_report, FitError};
use knet::{ExactRational, HashParams, IncidenceSystem, InnerSpec, KNetModel, Point, SampleSet};
use knet_cli::{cmd_fit, FitArgs, Mode, NetArgs, Target};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SEED: u64 = 20_241;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Path) -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn setup() -> (HashParams, InnerSpec) {
    (
        HashParams::new(2, 6).unwrap(),
        InnerSpec::default_for(6).unwrap(),
    )
}

fn r(n: i64, d: i64) -> ExactRational {
    ExactRational::ratio(n, d)
}

fn big(x: &ExactRational) -> BigRational {
    x.as_big().clone()
}

fn write_samples(path: &Path, points: &[Point], targets: &[ExactRational]) {
    let mut text = String::from("x1,x2,f\n");
    for (x, f) in points.iter().zip(targets) {
        let cells: Vec<String> = x
            .coords()
            .iter()
            .chain(std::iter::once(f))
            .map(ExactRational::to_fraction_string)
            .collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn fit_args(input: Option<PathBuf>, out: PathBuf) -> FitArgs {
    FitArgs {
        net: NetArgs { d: 2, gamma: 6 },
        depth: 30,
        mode: Mode::Exact,
        grid_level: 1,
        tolerance: r(1, 1_000_000_000),
        max_iter: 20,
        damping: r(1, 2),
        no_finalize: false,
        seed: SEED,
        input,
        target: None,
        n: 300,
        out,
        report: None,
        timestamp: false,
    }
}

/// Writes the samples, runs the fit command on them and loads the model back.
fn fit_through_cli(
    dir: &Path,
    name: &str,
    points: &[Point],
    targets: &[ExactRational],
) -> Result<(KNetModel, Value, Duration), String> {
    let csv = dir.join(format!("{name}.csv"));
    let model_path = dir.join(format!("{name}.json"));
    write_samples(&csv, points, targets);
    let started = Instant::now();
    let report = cmd_fit(&fit_args(Some(csv), model_path.clone())).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let model = load(&std::fs::read_to_string(&model_path).unwrap()).map_err(|e| e.to_string())?;
    Ok((model, report, elapsed))
}

fn model_depth(model: &KNetModel) -> usize {
    model.meta().depth.expect("fit records its depth")
}

/// Largest exact |w(x_j) − f(x_j)| over the samples.
fn exact_residual(model: &KNetModel, points: &[Point], targets: &[ExactRational]) -> ExactRational {
    eval_batch(model, points, model_depth(model))
        .unwrap()
        .iter()
        .zip(targets)
        .map(|(e, f)| (&e.value - f).abs())
        .max()
        .unwrap_or_default()
}

fn random_set(n: usize, seed: u64) -> Vec<Point> {
    random_points(2, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn criterion_1(dir: &Path) -> Outcome {
    let points = random_set(300, SEED);
    let targets: Vec<ExactRational> = points
        .iter()
        .map(|x| ExactRational::from_big(big(&x.coords()[0]) * big(&x.coords()[1])))
        .collect();
    let (model, _, elapsed) = fit_through_cli(dir, "c1", &points, &targets)?;
    let exact = exact_residual(&model, &points, &targets);
    ensure(exact.is_zero(), || format!("exact residual {exact}"))?;
    let fast = model.fast();
    let depth = model_depth(&model);
    let fast_residual = points
        .iter()
        .zip(&targets)
        .map(|(x, f)| (fast.eval(&x.to_f64(), depth).unwrap().value - f.to_f64()).abs())
        .fold(0.0, f64::max);
    ensure(fast_residual <= 1e-9, || {
        format!("fast residual {fast_residual:e}")
    })?;
    ensure(elapsed.as_secs_f64() <= 60.0, || {
        format!("fit took {elapsed:?}")
    })?;
    Ok(format!(
        "n=300 exact residual 0, fast residual {fast_residual:.2e}, fit {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_2(dir: &Path) -> Outcome {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let threshold = r(1, 5) - r(1, 1_000_000);
    let mut jumps = Vec::new();
    for n in [100, 300, 1000] {
        let points = random_set(n, SEED + n as u64);
        let targets: Vec<ExactRational> = points
            .iter()
            .map(|x| {
                if big(&x.coords()[0]) < half {
                    r(1, 1)
                } else {
                    r(0, 1)
                }
            })
            .collect();
        let (model, _, _) = fit_through_cli(dir, &format!("c2_{n}"), &points, &targets)?;
        let exact = exact_residual(&model, &points, &targets);
        ensure(exact.is_zero(), || format!("n={n}: exact residual {exact}"))?;
        let jump = merge_report(model.outer()).max_jump;
        ensure(jump >= threshold, || {
            format!("n={n}: max jump {jump} below 1/5")
        })?;
        jumps.push(format!("{:.4}", jump.to_f64()));
    }
    Ok(format!(
        "residual 0 at n=100/300/1000, max jumps {}",
        jumps.join("/")
    ))
}

fn criterion_3(dir: &Path) -> Outcome {
    let points = random_set(300, SEED + 3);
    let eps = BigRational::new(BigInt::one(), BigInt::from(1000));
    let targets: Vec<ExactRational> = points
        .iter()
        .map(|x| {
            let s = big(&x.coords()[0]) + big(&x.coords()[1]) + &eps;
            ExactRational::from_big(s.recip())
        })
        .collect();
    let (model, _, _) = fit_through_cli(dir, "c3", &points, &targets)?;
    let exact = exact_residual(&model, &points, &targets);
    ensure(exact.is_zero(), || format!("exact residual {exact}"))?;
    let f_max = targets.iter().map(ExactRational::abs).max().unwrap();
    let g_max = merge_report(model.outer()).max_abs_value;
    ensure(g_max >= &f_max / &r(5, 1), || {
        format!("max |g| {g_max} < max |f| / 5")
    })?;
    Ok(format!(
        "residual 0, max |f| = {:.1}, max |g| = {:.1}",
        f_max.to_f64(),
        g_max.to_f64()
    ))
}

fn criterion_4(_: &Path) -> Outcome {
    let (params, inner) = setup();
    let trials =
        separation_trials(&params, &inner, 100, 50, 30, SEED).map_err(|e| e.to_string())?;
    ensure(trials.failures == 0, || {
        format!("{} failed trials", trials.failures)
    })?;

    let unit_mu = vec![BigInt::one(), -BigInt::one()];
    let x = random_set(1, SEED + 4).remove(0);
    let values: Vec<ExactRational> = psi_all(&params, &inner, &x, 30)
        .unwrap()
        .into_iter()
        .map(|b| b.value)
        .collect();
    let system = IncidenceSystem::from_branch_values(
        vec![x.clone(), x.clone()],
        vec![values.clone(), values],
        30,
    );
    let witness = separation_check(&system).witness();
    ensure(witness.as_ref() == Some(&unit_mu), || {
        format!("duplicate row witness {witness:?}")
    })?;

    // Two points agreeing in their first 30 digits are duplicates at depth 30.
    let nudged = Point::new(vec![
        &x.coords()[0] + &ExactRational::inverse_power(6, 60),
        x.coords()[1].clone(),
    ]);
    let samples = SampleSet::new(vec![x, nudged], vec![r(0, 1), r(1, 1)]).unwrap();
    match fit_exact_with_cap(&samples, &params, &inner, 30, 30) {
        Err(FitError::SeparationFailure { mu, .. }) if mu == unit_mu => {}
        other => return Err(format!("near-duplicate fit gave {other:?}")),
    }
    Ok(format!(
        "100/100 trials separated (max knots {}), duplicate witness mu = (1, -1)",
        trials.max_knots
    ))
}

fn criterion_5(_: &Path) -> Outcome {
    let (params, inner) = setup();
    let report = check_ranges(&params, &inner, 2, 30).map_err(|e| e.to_string())?;
    for b in &report.branches {
        let lo = r(5 * b.q as i64, 1);
        let hi = &lo + &r(4, 1);
        ensure(b.lower == lo && b.upper == hi, || {
            format!("branch {} interval", b.q)
        })?;
        ensure(
            b.violations == 0 && b.observed_min >= lo && b.observed_max <= hi,
            || format!("branch {} leaves [{lo}, {hi}]", b.q),
        )?;
    }
    ensure(report.min_gap >= r(1, 1), || {
        format!("gap {}", report.min_gap)
    })?;
    ensure(report.passed, || "range report failed".into())?;
    Ok(format!(
        "{} grid points, 0 violations, min inter-branch gap {:.4}",
        report.points,
        report.min_gap.to_f64()
    ))
}

fn criterion_6(_: &Path) -> Outcome {
    let (_, inner) = setup();
    let report = verify_inner(&inner, 10_000, 30, SEED).map_err(|e| e.to_string())?;
    let m = &report.monotonicity;
    ensure(m.violations == 0 && m.checked >= 9_999, || {
        format!("monotonicity {m:?}")
    })?;
    let h = &report.holder;
    ensure(h.violations == 0 && h.checked == 10_000, || {
        format!("holder {h:?}")
    })?;
    let s = &report.shift_identity;
    ensure(s.violations == 0 && s.checked == 1_000, || {
        format!("shift {s:?}")
    })?;
    ensure(report.unit_range.passed, || "unit range".into())?;
    let phi0 = inner.phi_exact(&r(0, 1), 30).unwrap();
    let phi1 = inner.phi_exact(&r(1, 1), 30).unwrap();
    ensure(phi0.is_zero() && phi1 == r(1, 1), || {
        format!("phi(0) = {phi0}, phi(1) = {phi1}")
    })?;
    let alpha = (2f64).ln() / (6f64).ln();
    ensure((report.holder_exponent - alpha).abs() < 1e-15, || {
        "exponent".into()
    })?;
    Ok(format!(
        "0 violations on {} monotone pairs, {} Holder pairs (worst ratio {:.3} <= 4), {} shifts",
        m.checked,
        h.checked,
        h.measured.unwrap_or(0.0),
        s.checked
    ))
}

fn criterion_7(_: &Path) -> Outcome {
    let (params, _) = setup();
    ensure(params.lambda()[0] == r(1, 1), || "lambda_1 != 1".into())?;
    let six = BigRational::from_integer(BigInt::from(6));
    let partial = |terms: u32| -> BigRational {
        (1..=terms).fold(BigRational::zero(), |acc, k| {
            let e: u32 = 2u32.pow(k) - 1;
            acc + Pow::pow(&six, e).recip()
        })
    };
    let tol = BigRational::new(BigInt::one(), BigInt::from(10u64).pow(18u32));
    let lambda2 = big(&params.lambda()[1]);
    let tail = big(&params.lambda_tail()[1]);
    ensure(tail <= tol, || format!("tail bound {tail} exceeds 1e-18"))?;
    let reference = partial(7);
    let gap = &reference - &lambda2;
    ensure(gap >= BigRational::zero() && gap <= tail, || {
        format!("oracle gap {gap} vs tail {tail}")
    })?;
    let exps: Vec<u64> = (1..=5).map(|k| lambda_exponent(2, 2, k).unwrap()).collect();
    let d = 2u64;
    let expected: Vec<u64> = (1..=5u32).map(|k| (d.pow(k) - 1) / (d - 1)).collect();
    ensure(exps == expected && exps == [1, 3, 7, 15, 31], || {
        format!("exponents {exps:?}")
    })?;
    Ok(format!(
        "lambda_2 = {:.15} within tail {:.1e} of oracle, exponents {exps:?}",
        to_f64(&lambda2),
        to_f64(&tail)
    ))
}

fn to_f64(x: &BigRational) -> f64 {
    ExactRational::from_big(x.clone()).to_f64()
}

fn criterion_8(dir: &Path) -> Outcome {
    let model_path = dir.join("c8.json");
    let mut args = fit_args(None, model_path.clone());
    args.mode = Mode::Iterative;
    args.target = Some(Target::Sum);
    let report = cmd_fit(&args).map_err(|e| e.to_string())?;
    let history: Vec<ExactRational> = report["fit"]["convergence_history"]
        .as_array()
        .ok_or("no convergence history")?
        .iter()
        .map(|v| v.as_str().unwrap().parse().unwrap())
        .collect();
    ensure(history.len() >= 2, || "history too short".into())?;
    ensure(history.windows(2).all(|w| w[1] <= w[0]), || {
        "history increases".into()
    })?;
    ensure(report["fit"]["finalized"] == Value::Bool(true), || {
        "not finalized".into()
    })?;

    let model = load(&std::fs::read_to_string(&model_path).unwrap()).map_err(|e| e.to_string())?;
    let grid = cube_grid(2, 6, 1).unwrap();
    let targets: Vec<ExactRational> = grid
        .iter()
        .map(|x| ExactRational::from_big(big(&x.coords()[0]) + big(&x.coords()[1])))
        .collect();
    let residual = exact_residual(&model, &grid, &targets);
    ensure(residual.is_zero(), || format!("grid residual {residual}"))?;
    Ok(format!(
        "{} rounds, residual {:.3e} -> {:.3e} non-increasing, finalized grid residual 0 on {} points",
        history.len() - 1,
        history[0].to_f64(),
        history.last().unwrap().to_f64(),
        grid.len()
    ))
}

fn criterion_9(dir: &Path) -> Outcome {
    let points = random_set(60, SEED + 9);
    let targets: Vec<ExactRational> = points
        .iter()
        .map(|x| ExactRational::from_big(big(&x.coords()[0]) * big(&x.coords()[1])))
        .collect();
    let (model, _, _) = fit_through_cli(dir, "c9", &points, &targets)?;
    let text = save(&model);
    let back = load(&text).map_err(|e| e.to_string())?;
    let probes = random_set(100, SEED + 99);
    let a = eval_batch(&model, &probes, 30).unwrap();
    let b = eval_batch(&back, &probes, 30).unwrap();
    ensure(a == b, || {
        "exact evaluations differ after round trip".into()
    })?;
    let (fa, fb) = (model.fast(), back.fast());
    for x in &probes {
        let (u, v) = (
            fa.eval(&x.to_f64(), 30).unwrap(),
            fb.eval(&x.to_f64(), 30).unwrap(),
        );
        ensure(u.value.to_bits() == v.value.to_bits(), || {
            "fast evaluations differ".into()
        })?;
    }

    let truncated = load(&text[..text.len() / 3]);
    ensure(matches!(truncated, Err(NetworkError::Parse { .. })), || {
        format!("truncated file gave {truncated:?}")
    })?;
    let future = load(&text.replacen("\"format_version\": 1", "\"format_version\": 2", 1));
    ensure(
        matches!(future, Err(NetworkError::Version { found: 2, .. })),
        || format!("future version gave {future:?}"),
    )?;
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["branches"][1]["knots"][0]["y"] = Value::from("seven");
    let bad = load(&doc.to_string());
    ensure(
        matches!(&bad, Err(NetworkError::Number { path, .. }) if path == "branches[1].knots[0].y"),
        || format!("bad number gave {bad:?}"),
    )?;
    Ok("100 probes bit-identical (exact and fast); truncated, future-version and bad-number files rejected".into())
}

fn criterion_10(dir: &Path) -> Outcome {
    let first = dir.join("c10a.json");
    let second = dir.join("c10b.json");
    let mut reports = Vec::new();
    for out in [&first, &second] {
        let mut args = fit_args(None, out.clone());
        args.target = Some(Target::Product);
        args.n = 200;
        let mut report = cmd_fit(&args).map_err(|e| e.to_string())?;
        report["model"] = Value::Null;
        report["config"]["out"] = Value::Null;
        reports.push(report);
    }
    let (a, b) = (
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap(),
    );
    ensure(a == b, || "model files differ".into())?;
    ensure(reports[0] == reports[1], || "reports differ".into())?;
    Ok(format!(
        "two runs wrote byte-identical {}-byte model files",
        a.len()
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: [Criterion; 10] = [
        ("exact representation, continuous class", criterion_1),
        (
            "exact representation, discontinuous bounded class",
            criterion_2,
        ),
        ("exact representation, unbounded-type class", criterion_3),
        ("separation and closed-path witness", criterion_4),
        ("range structure", criterion_5),
        ("inner-function properties", criterion_6),
        ("lambda constants", criterion_7),
        ("iterative fit", criterion_8),
        ("serialization", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(|| run(dir.path()))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(reason) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {reason} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
