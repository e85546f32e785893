//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use corrshift::datagen::{best_accuracy, frontier, generate_synthetic, make_test_resampled, SyntheticSpec};
use corrshift::dataset::{joint_ratios, JointRatios};
use corrshift::harness::{records_to_csv, run_experiment, run_misspecification, run_range_sweep, ExperimentConfig, RunRecord};
use corrshift::ratio::{grid_oracle, optimize, ratios_with, RatioProblem, DEFAULT_RESOLUTION};
use corrshift::resample::{preprocess, wasserstein_cost, PreprocessOptions};
use corrshift::shift::{coverage_experiment, required_samples, ShiftRange};
use corrshift::stats::{correlation, correlation_constant, disparities, dpeo_bound_lhs, eopp_bound_lhs, ppdp_bound_lhs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_ratios(rng: &mut ChaCha8Rng, floor: f64) -> JointRatios {
    let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(floor..1.0));
    let s: f64 = a.iter().sum();
    JointRatios::from_array(a.map(|v| v / s)).unwrap()
}

fn lemma_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let w = random_ratios(&mut rng, 1e-3);
        let r = correlation(&w).unwrap();
        let (py, pz) = (w.py(), w.pz());
        let scaled = r.c * (pz * (1.0 - pz) / (py * (1.0 - py))).sqrt();
        worst = worst.max((r.rho - scaled).abs());
    }
    outcome(worst <= 1e-9, format!("10000 tables, max |rho - scaled c| = {worst:.2e}"))
}

/// Random (y, z, ŷ) vectors of length n with every (y, z, ŷ) combination present.
fn random_triple(rng: &mut ChaCha8Rng, n: usize) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    loop {
        let cell: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
        let total: f64 = cell.iter().sum();
        let rate: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..0.95));
        let (mut y, mut z, mut p) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let mut u = rng.random_range(0.0..total);
            let mut k = 3;
            for (j, c) in cell.iter().enumerate() {
                if u < *c {
                    k = j;
                    break;
                }
                u -= c;
            }
            let (yy, zz) = corrshift::dataset::CELLS[k];
            y.push(yy);
            z.push(zz);
            p.push(u8::from(rng.random_bool(rate[k])));
        }
        let mut seen = [[[false; 2]; 2]; 2];
        for i in 0..n {
            seen[y[i] as usize][z[i] as usize][p[i] as usize] = true;
        }
        if seen.iter().flatten().flatten().all(|&s| s) {
            return (y, z, p);
        }
    }
}

fn bound_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut slack = [f64::INFINITY; 3];
    for _ in 0..1000 {
        let (y, z, p) = random_triple(&mut rng, 200);
        let d = disparities(&y, &z, &p).unwrap();
        let s = [
            2.0 * d.dp_pairwise.max(d.eo_pairwise) - dpeo_bound_lhs(&y, &z, &p).unwrap(),
            d.pp_pairwise.max(d.dp_pairwise) - ppdp_bound_lhs(&y, &z, &p).unwrap(),
            d.eo_pairwise.max(d.pp_pairwise) - eopp_bound_lhs(&y, &z, &p).unwrap(),
        ];
        for k in 0..3 {
            slack[k] = slack[k].min(s[k]);
        }
    }
    outcome(
        slack.iter().all(|&s| s >= -1e-9),
        format!(
            "1000 instances each, min slack dpeo {:.3e} ppdp {:.3e} eopp {:.3e}",
            slack[0], slack[1], slack[2]
        ),
    )
}

fn coverage() -> Outcome {
    let w = JointRatios::new(0.3, 0.2, 0.2, 0.3).unwrap();
    let cov = coverage_experiment(&w, 4000, 0.1, 1000, 3).unwrap();
    let n = required_samples(0.1, 0.05).unwrap();
    outcome(
        cov.rate >= 0.87 && n == 876,
        format!("coverage {:.3} over {} trials (need >= 0.87), required_samples(0.1, 0.05) = {n}", cov.rate, cov.trials),
    )
}

fn sdp_vs_grid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut instances, mut below, mut tight) = (0, 0, 0);
    let mut attempts = 0;
    while instances < 50 {
        attempts += 1;
        let w = random_ratios(&mut rng, 0.02);
        let width = rng.random_range(0.01..0.2);
        let lo = rng.random_range(-0.6..0.6);
        let range = ShiftRange::given(lo, lo + width).unwrap();
        let problem = RatioProblem::new(w, range, 0.1, 0.1).unwrap();
        let Ok(grid) = grid_oracle(&problem, DEFAULT_RESOLUTION) else {
            continue;
        };
        instances += 1;
        let Ok(sol) = optimize(&problem) else {
            continue;
        };
        if sol.relaxation_lower_bound.is_none_or(|lb| lb <= grid.objective + 1e-6) {
            below += 1;
        }
        if (sol.objective - grid.objective).abs() <= (0.05 * grid.objective).max(2e-4) {
            tight += 1;
        }
    }
    let hand = RatioProblem::new(
        JointRatios::new(0.35, 0.15, 0.15, 0.35).unwrap(),
        ShiftRange::exact(0.0).unwrap(),
        0.1,
        0.1,
    )
    .unwrap();
    let sol = optimize(&hand).unwrap();
    let uniform = sol.ratios.as_array().iter().all(|v| (v - 0.25).abs() <= 1e-3);
    let hand_ok = (sol.objective - 0.04).abs() <= 1e-4 && uniform;
    outcome(
        below == 50 && tight >= 45 && hand_ok,
        format!(
            "{instances} feasible of {attempts} drawn, lower bound <= grid {below}/50, near-tight {tight}/50; \
             hand instance objective {:.6} ratios {:?}",
            sol.objective,
            sol.ratios.as_array().map(|v| (v * 1e4).round() / 1e4)
        ),
    )
}

fn alignment() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in 0..5u64 {
        let train = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, seed)).unwrap();
        let raw = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, seed + 1000)).unwrap();
        for (k, target) in [0.036, 0.180, 0.359].into_iter().enumerate() {
            let range = ShiftRange::exact(target).unwrap();
            let pre = preprocess(&train, range, 0.1, 0.1, seed, &PreprocessOptions::default()).unwrap();
            let c_pre = correlation_constant(&joint_ratios(&pre.data).unwrap()).unwrap();
            let mut ok = (c_pre - target).abs() <= 0.01;
            let mut note = format!("seed {seed} target {target}: c_pre {c_pre:.4}");
            if k < 2 {
                let test = make_test_resampled(&raw, target, seed).unwrap();
                let w_pre = wasserstein_cost(&pre.data, &test, 2000, seed).unwrap().cost;
                let w_train = wasserstein_cost(&train, &test, 2000, seed).unwrap().cost;
                ok &= w_pre <= w_train;
                note += &format!(" W(pre,test) {w_pre:.4} W(train,test) {w_train:.4}");
            }
            pass &= ok;
            if !ok {
                lines.push(note);
            }
        }
    }
    let detail = if lines.is_empty() {
        "5 seeds x 3 targets within 0.01, W(pre,test) <= W(train,test) on all 10 shifted cases".to_string()
    } else {
        lines.join("; ")
    };
    outcome(pass, detail)
}

fn find<'a>(records: &'a [RunRecord], name: &str) -> &'a RunRecord {
    records.iter().find(|r| r.pipeline.to_string() == name).unwrap()
}

fn table_direction(records: &[RunRecord]) -> Outcome {
    let lr = find(records, "lr");
    let dp = |n: &str| find(records, n).dp.mean;
    let a = (lr.accuracy.mean - 0.865).abs() <= 0.03 && (lr.dp.mean - 0.173).abs() <= 0.04;
    let b = dp("ours+fb_lite") < dp("fb_lite") && dp("ours+fb_lite") < dp("rw+fb_lite");
    let c = dp("ours+fc") < dp("fc");
    let failed: usize = records.iter().map(|r| r.failed).sum();
    outcome(
        a && b && c && failed == 0,
        format!(
            "lr acc {:.3} dp {:.3}; dp fb_lite {:.3} rw+fb_lite {:.3} ours+fb_lite {:.3}; fc {:.3} ours+fc {:.3}; failed cells {failed}",
            lr.accuracy.mean,
            lr.dp.mean,
            dp("fb_lite"),
            dp("rw+fb_lite"),
            dp("ours+fb_lite"),
            dp("fc"),
            dp("ours+fc")
        ),
    )
}

fn frontier_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut pairs, mut violations) = (0, 0);
    while pairs < 20 {
        let py = rng.random_range(0.2..0.8);
        let pz = rng.random_range(0.2..0.8);
        let mut c = [rng.random_range(0.0..0.8), rng.random_range(0.0..0.8)];
        c.sort_by(f64::total_cmp);
        if c[1] - c[0] < 0.05 {
            continue;
        }
        let (Ok(low), Ok(high)) = (ratios_with(py, pz, c[0]), ratios_with(py, pz, c[1])) else {
            continue;
        };
        pairs += 1;
        let fl = frontier(&low, 0.1).unwrap();
        let fh = frontier(&high, 0.1).unwrap();
        for tau in [0.02, 0.05, 0.1] {
            for combined in [false, true] {
                let al = best_accuracy(&fl, tau, combined).map_or(0.0, |p| p.accuracy);
                let ah = best_accuracy(&fh, tau, combined).map_or(0.0, |p| p.accuracy);
                if al + 1e-12 < ah {
                    violations += 1;
                }
            }
        }
    }
    outcome(violations == 0, format!("{pairs} pairs x 3 thresholds x 2 metrics, {violations} violations"))
}

fn misspecification() -> Outcome {
    let cfg = ExperimentConfig {
        pipelines: vec!["fb_lite".parse().unwrap(), "ours+fb_lite".parse().unwrap()],
        ..Default::default()
    };
    let specified = [0.5, 0.6, 0.7];
    let sweep = run_misspecification(&cfg, 0.6, &specified).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for chunk in sweep.chunks(2) {
        let (fb, ours) = (&chunk[0], &chunk[1]);
        pass &= ours.dp.mean < fb.dp.mean && ours.failed == 0;
        notes.push(format!("{} {:.3} < {:.3}", ours.sweep, ours.dp.mean, fb.dp.mean));
    }
    let wide = run_range_sweep(&cfg, 0.6, &[100.0]).unwrap();
    let (fb, ours) = (&wide[0], &wide[1]);
    let gaps = [
        (ours.accuracy.mean - fb.accuracy.mean).abs(),
        (ours.dp.mean - fb.dp.mean).abs(),
        (ours.eo.mean - fb.eo.mean).abs(),
    ];
    pass &= gaps.iter().all(|&g| g <= 0.02);
    notes.push(format!(
        "x=100% gaps acc {:.4} dp {:.4} eo {:.4}",
        gaps[0], gaps[1], gaps[2]
    ));
    outcome(pass, notes.join("; "))
}

fn run(id: usize, name: &str, budget: Duration, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = check();
    let took = start.elapsed();
    let pass = out.pass && took <= budget;
    println!(
        "{} {id} {name}: {} [{:.1}s of {}s]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, "correlation identity", secs(1), lemma_identity);
    ok &= run(2, "tradeoff bounds", secs(10), bound_suite);
    ok &= run(3, "range coverage", secs(30), coverage);
    ok &= run(4, "relaxation vs grid", secs(120), sdp_vs_grid);
    ok &= run(5, "alignment", secs(300), alignment);

    let cfg = ExperimentConfig::default();
    let mut first = None;
    ok &= run(6, "baseline comparison", secs(600), || {
        let records = run_experiment(&cfg).unwrap();
        let out = table_direction(&records);
        first = Some(records);
        out
    });
    ok &= run(7, "frontier dominance", secs(60), frontier_dominance);
    ok &= run(8, "misspecification", secs(600), misspecification);
    ok &= run(9, "determinism", secs(600), || {
        let a = records_to_csv(first.as_ref().unwrap()).unwrap();
        let b = records_to_csv(&run_experiment(&cfg).unwrap()).unwrap();
        outcome(a == b, format!("{} byte CSV, identical: {}", a.len(), a == b))
    });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
