use corrshift::datagen::{generate_synthetic, make_test_resampled, make_test_rotated, SyntheticSpec};
use corrshift::dataset::{joint_ratios, JointRatios, TabularDataset, CELLS};
use corrshift::resample::{
    min_dist_change, preprocess, split_candidate_cost, split_candidates, wasserstein_cost, MinDistOptions,
    PreprocessOptions, Sampling,
};
use corrshift::shift::{coverage_experiment, ShiftRange};
use corrshift::stats::{correlation, correlation_constant};

/// 40 rows, 10 per cell, two features.
fn toy() -> TabularDataset {
    let mut rows = Vec::new();
    let (mut labels, mut groups) = (Vec::new(), Vec::new());
    for (k, &(y, z)) in CELLS.iter().enumerate() {
        for j in 0..10 {
            let x = j as f64 * 0.7 + k as f64;
            rows.push(vec![x, (x * 1.3).sin()]);
            labels.push(y);
            groups.push(z);
        }
    }
    TabularDataset::from_rows(&rows, labels, groups).unwrap()
}

#[test]
fn min_dist_matches_exhaustive_enumeration() {
    let d = toy();
    let current = joint_ratios(&d).unwrap();
    let target = JointRatios::new(0.35, 0.15, 0.15, 0.35).unwrap();
    let opts = MinDistOptions {
        grid_m: 2,
        feature_index: 0,
        subsample: 40,
    };
    let found = min_dist_change(&d, &current, &target, &opts, 5).unwrap();
    assert_eq!(found.candidates, 81);

    // independent re-enumeration over {0, 0.5, 1}⁴
    let levels = [0.0, 0.5, 1.0];
    let mut best = f64::INFINITY;
    for a in levels {
        for b in levels {
            for c in levels {
                for e in levels {
                    let cost = split_candidate_cost(&d, &current, &target, [a, b, c, e], &opts, 5).unwrap();
                    best = best.min(cost);
                }
            }
        }
    }
    assert_eq!(found.cost, best);

    let uniform = split_candidate_cost(&d, &current, &target, [0.5; 4], &opts, 5).unwrap();
    assert!(found.cost <= uniform);

    let cells = d.cell_indices();
    for (k, rows) in cells.iter().enumerate() {
        let mass: f64 = rows.iter().map(|&i| found.weights.weights[i]).sum();
        assert!((mass - target.as_array()[k] * d.n() as f64).abs() < 1e-6);
        let split = found.split.masses[k];
        assert!((split[0] + split[1] - target.as_array()[k]).abs() < 1e-9);
    }
}

#[test]
fn min_dist_identity_target_prefers_no_worse_than_uniform() {
    let d = toy();
    let w = joint_ratios(&d).unwrap();
    let opts = MinDistOptions {
        grid_m: 4,
        feature_index: 1,
        subsample: 40,
    };
    let found = min_dist_change(&d, &w, &w, &opts, 9).unwrap();
    let uniform = split_candidate_cost(&d, &w, &w, [0.5; 4], &opts, 9).unwrap();
    assert!(found.cost <= uniform);
    assert_eq!(split_candidates(&w, 4).len(), 625);
}

#[test]
fn preprocess_no_shift_keeps_c() {
    let train = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, 3)).unwrap();
    let c = correlation_constant(&joint_ratios(&train).unwrap()).unwrap();
    let out = preprocess(&train, ShiftRange::exact(c).unwrap(), 0.1, 0.1, 3, &PreprocessOptions::default()).unwrap();
    assert_eq!(out.data.n(), train.n());
    assert!(out.solution.objective < 1e-6);
    let c_pre = correlation_constant(&joint_ratios(&out.data).unwrap()).unwrap();
    assert!((c_pre - c).abs() < 0.01);
}

#[test]
fn preprocess_lands_in_range() {
    let train = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, 8)).unwrap();
    for (alpha, beta) in [(0.18, 0.18), (0.036, 0.036), (0.1, 0.2), (-0.1, 0.05)] {
        for sampling in [Sampling::Stratified, Sampling::Iid] {
            let opts = PreprocessOptions { sampling, min_dist: None };
            let out = preprocess(&train, ShiftRange::given(alpha, beta).unwrap(), 0.1, 0.1, 1, &opts).unwrap();
            assert_eq!(out.data.n(), 2000);
            let c = correlation_constant(&joint_ratios(&out.data).unwrap()).unwrap();
            // i.i.d. draws leave sampling noise of about 0.02 in c at n = 2000
            let tol = if sampling == Sampling::Stratified { 0.02 } else { 0.09 };
            assert!(c >= alpha - tol && c <= beta + tol, "{c} not near [{alpha}, {beta}]");
        }
    }
}

#[test]
fn preprocess_hits_exact_targets() {
    let train = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, 0)).unwrap();
    for target in [0.18, 0.036] {
        let out = preprocess(&train, ShiftRange::exact(target).unwrap(), 0.1, 0.1, 0, &PreprocessOptions::default()).unwrap();
        let c = correlation_constant(&joint_ratios(&out.data).unwrap()).unwrap();
        assert!((c - target).abs() <= 0.01, "{c} vs {target}");
    }
}

#[test]
fn preprocess_empty_class() {
    let rows = vec![vec![0.0]; 6];
    let d = TabularDataset::from_rows(&rows, vec![1, 1, 0, 0, 1, 0], vec![1, 1, 1, 1, 1, 0]).unwrap();
    let e = preprocess(&d, ShiftRange::exact(0.0).unwrap(), 0.1, 0.1, 0, &PreprocessOptions::default()).unwrap_err();
    assert_eq!(e.code(), "empty-class");
}

#[test]
fn synthetic_correlation_near_reference() {
    let cs: Vec<f64> = (0..5)
        .map(|s| {
            let d = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, s)).unwrap();
            correlation_constant(&joint_ratios(&d).unwrap()).unwrap()
        })
        .collect();
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    assert!((mean - 0.359).abs() <= 0.03, "{cs:?}");
}

#[test]
fn correlation_monotone_in_rotation() {
    // c measured on one large (x, y) draw as the rotation π/k shrinks
    let base = SyntheticSpec::standard(40_000, 2.0, 21);
    let cs: Vec<f64> = [2.0, 3.0, 4.0, 6.0, 8.0, 12.0]
        .iter()
        .map(|&k| {
            let d = make_test_rotated(&base, k).unwrap();
            correlation_constant(&joint_ratios(&d).unwrap()).unwrap()
        })
        .collect();
    assert!(cs.windows(2).all(|w| w[1] > w[0]), "{cs:?}");
}

#[test]
fn rotated_test_keeps_features_and_labels() {
    let spec = SyntheticSpec::standard(500, 4.0, 2);
    let train = generate_synthetic(&spec).unwrap();
    let test = make_test_rotated(&spec, 8.0).unwrap();
    assert_eq!(train.features(), test.features());
    assert_eq!(train.labels(), test.labels());
    assert_ne!(train.groups(), test.groups());
    let same = make_test_rotated(&spec, 4.0).unwrap();
    assert_eq!(same.groups(), train.groups());
}

#[test]
fn resampled_test_to_independence() {
    let raw = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, 30)).unwrap();
    let test = make_test_resampled(&raw, 0.0, 1).unwrap();
    let r = correlation(&joint_ratios(&test).unwrap()).unwrap();
    assert!(r.rho.abs() <= 0.02, "{}", r.rho);
}

#[test]
fn resampled_test_unreachable_target() {
    let raw = generate_synthetic(&SyntheticSpec::standard(1000, 4.0, 30)).unwrap();
    assert_eq!(make_test_resampled(&raw, 0.99, 1).unwrap_err().code(), "infeasible");
}

#[test]
fn transport_symmetry_with_full_draws() {
    let a = generate_synthetic(&SyntheticSpec::standard(300, 4.0, 1)).unwrap();
    let b = generate_synthetic(&SyntheticSpec::standard(300, 4.0, 2)).unwrap();
    let ab = wasserstein_cost(&a, &b, 300, 0).unwrap();
    let ba = wasserstein_cost(&b, &a, 300, 0).unwrap();
    assert!((ab.cost - ba.cost).abs() < 1e-9);
    assert_eq!(wasserstein_cost(&a, &a, 300, 0).unwrap().cost, 0.0);
}

#[test]
fn coverage_at_four_thousand_draws() {
    let w = JointRatios::new(0.3, 0.2, 0.2, 0.3).unwrap();
    let cov = coverage_experiment(&w, 4000, 0.1, 1000, 17).unwrap();
    assert!(cov.rate >= 0.90, "{cov:?}");
}
