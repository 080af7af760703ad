//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test --release --test acceptance -- --nocapture` to see the report.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{classical_recursion, max_abs, random_matrix, random_spd, run_path, scalar_random_walk, trace_deviation};
use pcrb::baselines::Baseline;
use pcrb::blocks::{estimate_c, ExpectationEstimator};
use pcrb::linalg::{eig_range, max_rel_elementwise};
use pcrb::models::{LinearGaussianModel, MaTrackingModel, RangeBearingModel};
use pcrb::noise::{select_case, CaseTag, CorrelationProfile};
use pcrb::oracle::{lemma1_inverse, lemma2_contract, verify};
use pcrb::recursion::{run, FaultInjection, RecursionPath};
use pcrb::selection::{sweep, AVERAGE_WINDOW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn worst_oracle(model: &dyn pcrb::noise::SystemModel, est: &ExpectationEstimator) -> f64 {
    verify(model, est, 12, FaultInjection::None)
        .unwrap()
        .iter()
        .map(|d| d.max_rel)
        .fold(0.0, f64::max)
}

fn oracle_equivalence() -> Check {
    let mut worst = worst_oracle(&MaTrackingModel::example1(), &ExpectationEstimator::analytic());
    let profiles = [
        (0, 0, 3, 0),
        (1, 1, 3, 2),
        (2, 0, 3, 1),
        (0, 2, 0, 0),
        (1, 3, 1, 1),
        (3, 2, 2, 0),
        (2, 3, 2, 3),
        (1, 1, 2, 1),
        (0, 2, 3, 0),
        (3, 0, 2, 2),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut seen = Vec::new();
    for (i, (l1, l2, l3, l4)) in profiles.into_iter().enumerate() {
        let p = CorrelationProfile::new(l1, l2, l3, l4).unwrap();
        seen.push(select_case(&p));
        let m = LinearGaussianModel::random(p, 1 + i % 3, 1 + (i + 1) % 3, &mut rng).unwrap();
        worst = worst.max(worst_oracle(&m, &ExpectationEstimator::analytic()));
    }
    for case in [CaseTag::GreaterCase, CaseTag::LessCase, CaseTag::EqualCase] {
        ensure(seen.contains(&case), || format!("{case:?} not covered"))?;
    }
    ensure(worst < 1e-8, || format!("max relative deviation {worst:e}"))?;
    Ok(format!("max relative deviation {worst:.1e} over 11 models, k <= 12"))
}

fn reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31415);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let m = LinearGaussianModel::random(CorrelationProfile::independent(), 1 + i % 3, 1 + i % 2, &mut rng)
            .unwrap();
        let unified = run_path(&m, RecursionPath::Unified, 20);
        let cor4 = run_path(&m, RecursionPath::Corollary4, 20);
        worst = worst.max(trace_deviation(&unified, &cor4));
        for (e, j) in unified.entries.iter().zip(classical_recursion(&m, 20)) {
            worst = worst.max(max_rel_elementwise(&e.info, &j));
        }
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e} over 10 models"))
}

fn corollaries() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1618);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (path, max_l) in [
        (RecursionPath::Corollary2, 3),
        (RecursionPath::Corollary3, 2),
        (RecursionPath::Corollary4, 2),
    ] {
        for l in 0..=max_l {
            let p = match path {
                RecursionPath::Corollary2 => CorrelationProfile::new(0, 0, l, 0),
                RecursionPath::Corollary3 => CorrelationProfile::new(0, l, 0, 0),
                _ => CorrelationProfile::new(l, 0, 0, 0),
            }
            .unwrap();
            let m = LinearGaussianModel::random(p, 2, 2, &mut rng).unwrap();
            let dev = trace_deviation(&run_path(&m, RecursionPath::Unified, 20), &run_path(&m, path, 20));
            ensure(dev < 1e-12, || format!("{path:?} {p}: {dev:e}"))?;
            worst = worst.max(dev);
            count += 1;
        }
    }
    Ok(format!("{count} profiles, max deviation {worst:.1e} over 20 steps"))
}

fn golden_ratio() -> Check {
    let t = run(&scalar_random_walk(1.0, 1.0, 1.0), &ExpectationEstimator::analytic(), 40).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let err = (t.last().info[(0, 0)] - phi).abs();
    ensure(err < 1e-10, || format!("|J_40 - phi| = {err:e}"))?;
    Ok(format!("|J_40 - phi| = {err:.1e}"))
}

fn example1_convergence() -> Check {
    let model = MaTrackingModel::example1();
    let exact = run(&model, &ExpectationEstimator::analytic(), 40).unwrap();
    let change = exact.final_relative_change();
    ensure(change < 1e-6, || format!("unified relative change {change:e}"))?;
    let e = exact.last().sqrt_bound(0);
    let mut gaps = Vec::new();
    for b in Baseline::ALL {
        let t = b.run(model.params(), 40).unwrap();
        let c = t.final_relative_change();
        ensure(c < 1e-6, || format!("{b} relative change {c:e}"))?;
        let gap = (t.last().sqrt_bound(0) - e).abs() / e;
        ensure(gap > 0.01, || format!("{b} gap {gap}"))?;
        gaps.push(format!("{} {:.1}%", b.column(), 100.0 * gap));
    }
    Ok(format!("change {change:.1e}; gaps {}", gaps.join(", ")))
}

fn monte_carlo_soundness() -> Check {
    let m = RangeBearingModel::example2();
    let k = 10;
    let entries = [(0, 0), (0, 2), (2, 2)];
    let runs: Vec<_> = (0..20u64)
        .map(|seed| estimate_c(&m, k, &ExpectationEstimator::monte_carlo(100_000, seed)).unwrap())
        .collect();
    let mut worst_cv = 0.0f64;
    for &(i, j) in &entries {
        let v: Vec<f64> = runs.iter().map(|r| r.mean.as_dense()[(i, j)]).collect();
        let mean = v.iter().sum::<f64>() / 20.0;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
        worst_cv = worst_cv.max(sd / mean.abs());
    }
    ensure(worst_cv < 0.02, || format!("coefficient of variation {worst_cv}"))?;
    // Entries outside the position rows are exactly zero for every seed.
    for r in &runs {
        let c = r.mean.as_dense();
        ensure((0..4).all(|i| c[(i, 1)] == 0.0 && c[(i, 3)] == 0.0), || "velocity entries nonzero".into())?;
    }

    let reference = estimate_c(&m, k, &ExpectationEstimator::monte_carlo(1_000_000, 1_000_003)).unwrap();
    let ref_se = reference.std_err.as_ref().unwrap();
    let mut worst_z = 0.0f64;
    for r in &runs[..1] {
        let se = r.std_err.as_ref().unwrap();
        for &(i, j) in &entries {
            let diff = (r.mean.as_dense()[(i, j)] - reference.mean.as_dense()[(i, j)]).abs();
            let z = diff / (se[(i, j)].powi(2) + ref_se[(i, j)].powi(2)).sqrt();
            worst_z = worst_z.max(z);
        }
    }
    ensure(worst_z < 3.0, || format!("{worst_z:.2} standard errors from the reference"))?;

    let t = run(&m, &ExpectationEstimator::monte_carlo(100_000, 7), 40).unwrap();
    for e in &t.entries {
        let (lo, hi) = eig_range(&e.info);
        ensure(lo > -1e-10 * hi, || format!("J_{} not PSD: {lo:e}", e.k))?;
    }
    Ok(format!("cv {:.2}%, reference gap {worst_z:.2} se, 40 PSD steps", 100.0 * worst_cv))
}

fn lemmas() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let at = rng.random_range(1..n);
        let a = random_spd(n, &mut rng);
        let direct = a.clone().try_inverse().unwrap();
        let f = lemma1_inverse(&a, at).unwrap();
        worst = worst.max(max_abs(&(&f - &direct)) / max_abs(&direct));
    }
    ensure(worst < 1e-10, || format!("inverse reconstruction {worst:e}"))?;
    let lemma1 = worst;
    worst = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let at = rng.random_range(1..n);
        let a = random_spd(n, &mut rng);
        let b = random_matrix(rng.random_range(1..=3), n, &mut rng);
        let c = random_matrix(n, rng.random_range(1..=3), &mut rng);
        let (d, f) = lemma2_contract(&b, &a, &c, at).unwrap();
        worst = worst.max(max_abs(&(&f - &d)) / max_abs(&d).max(1.0));
    }
    ensure(worst < 1e-10, || format!("contraction {worst:e}"))?;
    Ok(format!("inverse {lemma1:.1e}, contraction {worst:.1e}"))
}

fn sensor_sweeps() -> Check {
    let strict = |r: &pcrb::selection::SensorSweepResult| {
        r.points.windows(2).all(|w| w[0].avg_bound - w[1].avg_bound > 1e-12)
    };
    let a = sweep(MaTrackingModel::example1_sensors, 16, AVERAGE_WINDOW, 0, &ExpectationEstimator::analytic())
        .unwrap();
    ensure(strict(&a), || "tracking family not strictly decreasing".into())?;
    let est = ExpectationEstimator::monte_carlo(20_000, 0);
    let b = sweep(RangeBearingModel::example2_sensors, 16, AVERAGE_WINDOW, 0, &est).unwrap();
    ensure(strict(&b), || "range-azimuth family not strictly decreasing".into())?;
    let w1 = worst_oracle(&MaTrackingModel::example1_sensors(2).unwrap(), &ExpectationEstimator::analytic());
    let w2 = worst_oracle(&RangeBearingModel::example2_sensors(2).unwrap(), &est);
    ensure(w1.max(w2) < 1e-8, || format!("m=2 oracle deviation {:e}", w1.max(w2)))?;
    Ok(format!(
        "avg bound {:.2} -> {:.2} and {:.2} -> {:.2}; m=2 oracle {:.1e}",
        a.points[0].avg_bound,
        a.points[15].avg_bound,
        b.points[0].avg_bound,
        b.points[15].avg_bound,
        w1.max(w2)
    ))
}

fn determinism() -> Check {
    let cli = |threads: &str, args: &[&str]| -> Vec<u8> {
        let out = Command::new(env!("CARGO_BIN_EXE_pcrb"))
            .args(["--threads", threads])
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let commands: [&[&str]; 4] = [
        &["run", "--model", "example2", "--samples", "100000", "--seed", "7"],
        &["compare", "--model", "example1"],
        &["oracle-verify", "--model", "example2", "--samples", "20000", "--seed", "3"],
        &["sensors", "--model", "example2", "--max-m", "4", "--target", "100", "--samples", "5000", "--seed", "1"],
    ];
    for args in commands {
        let first = cli("1", args);
        ensure(cli("1", args) == first, || format!("{args:?} differs on repeat"))?;
        ensure(cli("4", args) == first, || format!("{args:?} differs across worker counts"))?;
    }
    Ok(format!("{} commands bit-identical on repeat and at 1 or 4 workers", commands.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check, Option<Duration>); 9] = [
        ("oracle equivalence", oracle_equivalence, Some(Duration::from_secs(30))),
        ("reduction to the white-noise recursion", reduction, None),
        ("specialized recursions", corollaries, None),
        ("scalar golden-ratio fixed point", golden_ratio, None),
        ("tracking model convergence and baseline gaps", example1_convergence, Some(Duration::from_secs(5))),
        ("range-azimuth Monte Carlo soundness", monte_carlo_soundness, Some(Duration::from_secs(120))),
        ("block inverse and contraction identities", lemmas, None),
        ("sensor sweep monotonicity", sensor_sweeps, None),
        ("determinism", determinism, None),
    ];
    println!();
    let mut failed = Vec::new();
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = started.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (o, _) => o,
        };
        match &outcome {
            Ok(detail) => println!("PASS {} {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(why) => {
                println!("FAIL {} {name} ({elapsed:.2?}): {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
