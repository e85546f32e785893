use corrshift::datagen::{generate_synthetic, make_test_resampled, SyntheticSpec};
use corrshift::dataset::{joint_ratios, TabularDataset};
use corrshift::stats::correlation_constant;
use corrshift::train::{evaluate, objective, predict, train, FairnessTarget, LinearModel, Method, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic(seed: u64) -> (TabularDataset, TabularDataset) {
    let train = generate_synthetic(&SyntheticSpec::standard(2000, 4.0, seed)).unwrap();
    let raw = generate_synthetic(&SyntheticSpec::standard(1000, 4.0, seed + 10_000)).unwrap();
    let c = correlation_constant(&joint_ratios(&train).unwrap()).unwrap();
    (train, make_test_resampled(&raw, 0.5 * c, seed).unwrap())
}

#[test]
fn fc_gradient_matches_finite_differences() {
    let (data, _) = synthetic(1);
    let data = data.select(&(0..300).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for target in [FairnessTarget::Dp, FairnessTarget::Eo, FairnessTarget::DpAndEo] {
        let cfg = TrainConfig {
            method: Method::Fc,
            target,
            lambda: 3.0,
            knob: 0.3,
            ..Default::default()
        };
        for _ in 0..20 {
            let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, grad) = objective(&data, &theta, &cfg).unwrap();
            for k in 0..theta.len() {
                let h = 1e-6;
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[k] += h;
                minus[k] -= h;
                let fd = (objective(&data, &plus, &cfg).unwrap().0 - objective(&data, &minus, &cfg).unwrap().0) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
                assert!(rel < 1e-4, "{target:?} k={k}: {fd} vs {}", grad[k]);
            }
        }
    }
}

#[test]
fn fc_without_penalty_is_lr() {
    let (data, _) = synthetic(2);
    let lr = train(&data, &TrainConfig { epochs: 20, ..Default::default() }).unwrap();
    let fc = train(&data, &TrainConfig {
        method: Method::Fc,
        lambda: 0.0,
        epochs: 20,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(lr.theta, fc.theta);
}

#[test]
fn training_is_deterministic() {
    let (data, _) = synthetic(3);
    for method in [Method::Lr, Method::Fc, Method::FbLite] {
        let cfg = TrainConfig {
            method,
            epochs: 30,
            seed: 11,
            ..Default::default()
        };
        assert_eq!(train(&data, &cfg).unwrap(), train(&data, &cfg).unwrap());
    }
}

#[test]
fn penalty_strength_lowers_training_dp() {
    let (data, _) = synthetic(4);
    let dps: Vec<f64> = [0.0, 0.1, 1.0, 10.0]
        .iter()
        .map(|&lambda| {
            let m = train(&data, &TrainConfig {
                method: Method::Fc,
                lambda,
                ..Default::default()
            })
            .unwrap();
            evaluate(&m, &data).unwrap().disparities.dp
        })
        .collect();
    for w in dps.windows(2) {
        assert!(w[1] <= w[0] + 0.005, "{dps:?}");
    }
    assert!(dps[3] < dps[0], "{dps:?}");
}

#[test]
fn lr_matches_reference_accuracy() {
    let (mut acc, mut dp) = (0.0, 0.0);
    for seed in 0..5 {
        let (data, test) = synthetic(seed);
        let m = train(&data, &TrainConfig { seed, ..Default::default() }).unwrap();
        let ev = evaluate(&m, &test).unwrap();
        acc += ev.accuracy / 5.0;
        dp += ev.disparities.dp / 5.0;
    }
    assert!((acc - 0.865).abs() <= 0.03, "{acc}");
    assert!((dp - 0.173).abs() <= 0.04, "{dp}");
}

#[test]
fn fb_lite_reduces_dp_against_lr() {
    let (data, test) = synthetic(0);
    let lr = train(&data, &TrainConfig::default()).unwrap();
    let fb = train(&data, &TrainConfig {
        method: Method::FbLite,
        ..Default::default()
    })
    .unwrap();
    let dp_lr = evaluate(&lr, &test).unwrap().disparities.dp;
    let dp_fb = evaluate(&fb, &test).unwrap().disparities.dp;
    assert!(dp_fb < dp_lr, "{dp_fb} vs {dp_lr}");
}

#[test]
fn fb_lite_eo_and_combined_targets_train() {
    let (data, _) = synthetic(5);
    for target in [FairnessTarget::Eo, FairnessTarget::DpAndEo] {
        let m = train(&data, &TrainConfig {
            method: Method::FbLite,
            target,
            epochs: 40,
            ..Default::default()
        })
        .unwrap();
        assert!(m.theta.iter().all(|t| t.is_finite()));
    }
}

#[test]
fn sign_flip_flips_predictions() {
    let (data, _) = synthetic(6);
    let m = train(&data, &TrainConfig { epochs: 10, ..Default::default() }).unwrap();
    let flipped = LinearModel {
        theta: m.theta.iter().map(|t| -t).collect(),
        meta: m.meta.clone(),
    };
    let a = predict(&m, &data).unwrap();
    let b = predict(&flipped, &data).unwrap();
    for (i, x) in data.features_with_group().iter().enumerate() {
        if m.score(x) != 0.0 {
            assert_eq!(a[i], 1 - b[i]);
        }
    }
}

#[test]
fn constant_model_accuracy_is_majority_rate() {
    let (data, _) = synthetic(7);
    let mut theta = vec![0.0; 4];
    theta[3] = 1.0;
    let m = LinearModel {
        theta,
        meta: train(&data, &TrainConfig { epochs: 1, ..Default::default() }).unwrap().meta,
    };
    let ev = evaluate(&m, &data).unwrap();
    let ones = data.labels().iter().filter(|&&v| v == 1).count() as f64 / data.n() as f64;
    assert!((ev.accuracy - ones).abs() < 1e-12);
    assert_eq!(ev.disparities.dp, 0.0);
}

#[test]
fn model_json_round_trip() {
    let (data, _) = synthetic(8);
    let m = train(&data, &TrainConfig { epochs: 5, ..Default::default() }).unwrap();
    let back: LinearModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn rejects_small_or_single_group_data() {
    let rows = vec![vec![0.0]; 10];
    let d = TabularDataset::from_rows(&rows, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], vec![1; 10]).unwrap();
    let cfg = TrainConfig { batch_size: 5, ..Default::default() };
    assert_eq!(train(&d, &cfg).unwrap_err().code(), "group-missing");
    assert_eq!(train(&d, &TrainConfig::default()).unwrap_err().code(), "invalid-argument");
}
