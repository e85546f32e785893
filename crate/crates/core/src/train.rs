//! Linear classifiers: logistic regression, a covariance-penalty fairness learner (FC) and an
//! adaptive batch-ratio learner (FB-lite).
//!
//! Models read the dataset features followed by the group attribute z, plus a bias term.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dataset::{seeded_rng, TabularDataset};
use crate::error::{Error, Result};
use crate::stats::{disparities, DisparityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lr,
    Fc,
    FbLite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessTarget {
    Dp,
    Eo,
    DpAndEo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    pub target: FairnessTarget,
    /// Penalty strength for `fc`.
    pub lambda: f64,
    /// Batch-ratio step for `fb_lite`.
    pub step: f64,
    /// Weight on the DP term for `dp_and_eo` with `fc`.
    pub knob: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Lr,
            target: FairnessTarget::Dp,
            lambda: 1.0,
            step: 0.005,
            knob: 0.5,
            epochs: 300,
            batch_size: 100,
            lr_rate: 0.0005,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr_rate > 0.0 && self.lr_rate.is_finite()) {
            return bad("lr_rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be nonnegative");
        }
        if !(self.step > 0.0 && self.step < 1.0) {
            return bad("step must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.knob) {
            return bad("knob must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub method: Method,
    pub target: FairnessTarget,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Weights over (features, z) followed by the bias.
    pub theta: Vec<f64>,
    pub meta: TrainingMeta,
}

impl LinearModel {
    /// Number of inputs (features plus z) expected by the model.
    pub fn width(&self) -> usize {
        self.theta.len() - 1
    }

    /// θᵀ[x; 1] for one input row.
    pub fn score(&self, x: &[f64]) -> f64 {
        let (w, b) = self.theta.split_at(self.width());
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[0]
    }
}

/// Training rows (features, z) in a flat matrix.
struct Design {
    x: Vec<f64>,
    p: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    labels: Vec<u8>,
    groups: Vec<u8>,
}

impl Design {
    fn new(data: &TabularDataset) -> Self {
        let p = data.n_features() + 1;
        let x = data.features_with_group().into_iter().flatten().collect();
        Self {
            x,
            p,
            y: data.labels().iter().map(|&v| v as f64).collect(),
            z: data.groups().iter().map(|&v| v as f64).collect(),
            labels: data.labels().to_vec(),
            groups: data.groups().to_vec(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn score(&self, theta: &[f64], i: usize) -> f64 {
        self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[self.p]
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Log(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Adds the covariance penalty weight·cov² over `rows` to the loss and gradient, where
/// cov = mean((z − z̄)·θᵀx).
fn add_cov_penalty(d: &Design, theta: &[f64], rows: &[usize], weight: f64, loss: &mut f64, grad: &mut [f64]) {
    if rows.is_empty() || weight == 0.0 {
        return;
    }
    let m = rows.len() as f64;
    let zbar = rows.iter().map(|&i| d.z[i]).sum::<f64>() / m;
    let mut cov = 0.0;
    let mut gcov = vec![0.0; d.p + 1];
    for &i in rows {
        let zc = d.z[i] - zbar;
        cov += zc * d.score(theta, i);
        for (g, x) in gcov.iter_mut().zip(d.row(i)) {
            *g += zc * x;
        }
        gcov[d.p] += zc;
    }
    cov /= m;
    *loss += weight * cov * cov;
    for (g, gc) in grad.iter_mut().zip(gcov) {
        *g += weight * 2.0 * cov * gc / m;
    }
}

fn batch_objective(d: &Design, theta: &[f64], rows: &[usize], cfg: &TrainConfig) -> (f64, Vec<f64>) {
    let m = rows.len() as f64;
    let mut grad = vec![0.0; d.p + 1];
    let mut loss = 0.0;
    for &i in rows {
        let s = d.score(theta, i);
        loss += softplus(s) - d.y[i] * s;
        let r = sigmoid(s) - d.y[i];
        for (g, x) in grad.iter_mut().zip(d.row(i)) {
            *g += r * x;
        }
        grad[d.p] += r;
    }
    loss /= m;
    grad.iter_mut().for_each(|g| *g /= m);
    if cfg.method == Method::Fc && cfg.lambda > 0.0 {
        let (w_dp, w_eo) = match cfg.target {
            FairnessTarget::Dp => (1.0, 0.0),
            FairnessTarget::Eo => (0.0, 1.0),
            FairnessTarget::DpAndEo => (cfg.knob, 1.0 - cfg.knob),
        };
        add_cov_penalty(d, theta, rows, cfg.lambda * w_dp, &mut loss, &mut grad);
        if w_eo > 0.0 {
            for label in [1u8, 0] {
                let sub: Vec<usize> = rows.iter().copied().filter(|&i| d.labels[i] == label).collect();
                add_cov_penalty(d, theta, &sub, cfg.lambda * w_eo, &mut loss, &mut grad);
            }
        }
    }
    (loss, grad)
}

/// Training loss (logistic plus any penalty) and its gradient at `theta`, over all rows.
pub fn objective(data: &TabularDataset, theta: &[f64], config: &TrainConfig) -> Result<(f64, Vec<f64>)> {
    if theta.len() != data.n_features() + 2 {
        return Err(Error::Shape(format!(
            "theta has {} entries, expected {}",
            theta.len(),
            data.n_features() + 2
        )));
    }
    let d = Design::new(data);
    let rows: Vec<usize> = (0..data.n()).collect();
    Ok(batch_objective(&d, theta, &rows, config))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: usize) -> Self {
        Self {
            m: vec![0.0; p],
            v: vec![0.0; p],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            theta[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// FB-lite state: Pr(z=1 | y=1) and Pr(z=1 | y=0) used for batch sampling.
struct BatchShares {
    py: f64,
    r1: f64,
    r0: f64,
}

impl BatchShares {
    const LOW: f64 = 0.01;
    const HIGH: f64 = 0.99;

    fn probabilities(&self) -> [f64; 4] {
        let p = [
            self.py * self.r1,
            self.py * (1.0 - self.r1),
            (1.0 - self.py) * self.r0,
            (1.0 - self.py) * (1.0 - self.r0),
        ];
        let s: f64 = p.iter().sum();
        p.map(|v| v / s)
    }

    /// Moves the shares against the measured gaps on the full training set.
    fn update(&mut self, d: &Design, theta: &[f64], target: FairnessTarget, step: f64) {
        let yhat: Vec<u8> = (0..d.y.len()).map(|i| (d.score(theta, i) > 0.0) as u8).collect();
        let rate = |filter: &dyn Fn(usize) -> bool| -> f64 {
            let (mut pos, mut cnt) = (0usize, 0usize);
            for (i, &v) in yhat.iter().enumerate() {
                if filter(i) {
                    pos += v as usize;
                    cnt += 1;
                }
            }
            if cnt == 0 {
                0.0
            } else {
                pos as f64 / cnt as f64
            }
        };
        let gap_dp = rate(&|i| d.groups[i] == 1) - rate(&|i| d.groups[i] == 0);
        let gap_y = |label: u8| {
            rate(&|i| d.groups[i] == 1 && d.labels[i] == label) - rate(&|i| d.groups[i] == 0 && d.labels[i] == label)
        };
        let (g1, g0) = match target {
            FairnessTarget::Dp => (gap_dp, gap_dp),
            FairnessTarget::Eo => (gap_y(1), gap_y(0)),
            FairnessTarget::DpAndEo => {
                let (e1, e0) = (gap_y(1), gap_y(0));
                if gap_dp.abs() >= e1.abs().max(e0.abs()) {
                    (gap_dp, gap_dp)
                } else {
                    (e1, e0)
                }
            }
        };
        // a group favoured by the model sees fewer positives and more negatives
        self.r1 = (self.r1 - step * sign(g1)).clamp(Self::LOW, Self::HIGH);
        self.r0 = (self.r0 + step * sign(g0)).clamp(Self::LOW, Self::HIGH);
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Multinomial counts drawn as a chain of conditional binomials.
fn multinomial(n: u64, probs: &[f64; 4], rng: &mut impl Rng) -> Result<[u64; 4]> {
    let mut out = [0u64; 4];
    let mut left = n;
    let mut mass = 1.0;
    for k in 0..3 {
        let p = if mass > 0.0 { (probs[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        out[k] = Binomial::new(left, p)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
        left -= out[k];
        mass -= probs[k];
    }
    out[3] = left;
    Ok(out)
}

/// Trains a linear classifier with mini-batch Adam from θ = 0.
pub fn train(data: &TabularDataset, config: &TrainConfig) -> Result<LinearModel> {
    config.validate()?;
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n < config.batch_size {
        return Err(Error::InvalidArgument(format!(
            "{n} rows is fewer than batch size {}",
            config.batch_size
        )));
    }
    for g in [0u8, 1] {
        if !data.groups().contains(&g) {
            return Err(Error::GroupMissing(g));
        }
    }
    let d = Design::new(data);
    let cells = data.cell_indices();
    let mut shares = if config.method == Method::FbLite {
        let c = data.cell_counts().map(|k| k as f64);
        let share = |a: f64, b: f64| if a + b > 0.0 { a / (a + b) } else { 0.5 };
        Some(BatchShares {
            py: (c[0] + c[1]) / n as f64,
            r1: share(c[0], c[1]).clamp(BatchShares::LOW, BatchShares::HIGH),
            r0: share(c[2], c[3]).clamp(BatchShares::LOW, BatchShares::HIGH),
        })
    } else {
        None
    };

    let mut rng = seeded_rng(config.seed);
    let mut theta = vec![0.0; d.p + 1];
    let mut adam = Adam::new(d.p + 1);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        if let Some(sh) = shares.as_mut() {
            sh.update(&d, &theta, config.target, config.step);
            let probs = sh.probabilities();
            let counts = multinomial(n as u64, &probs, &mut rng)?;
            order.clear();
            for (k, &cnt) in counts.iter().enumerate() {
                let pool = &cells[k];
                if pool.is_empty() {
                    continue;
                }
                for _ in 0..cnt {
                    order.push(pool[rng.random_range(0..pool.len())]);
                }
            }
        } else {
            order.clear();
            order.extend(0..n);
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = batch_objective(&d, &theta, batch, config);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            adam.step(&mut theta, &grad, config.lr_rate);
        }
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Diverged { epoch: config.epochs });
    }
    Ok(LinearModel {
        theta,
        meta: TrainingMeta {
            method: config.method,
            target: config.target,
            epochs: config.epochs,
            learning_rate: config.lr_rate,
            seed: config.seed,
            lambda: (config.method == Method::Fc).then_some(config.lambda),
        },
    })
}

/// ŷ = 1 iff θᵀ[x; z; 1] > 0.
pub fn predict(model: &LinearModel, data: &TabularDataset) -> Result<Vec<u8>> {
    if model.width() != data.n_features() + 1 {
        return Err(Error::Shape(format!(
            "model expects {} inputs, data provides {}",
            model.width(),
            data.n_features() + 1
        )));
    }
    Ok(data
        .features_with_group()
        .iter()
        .map(|x| (model.score(x) > 0.0) as u8)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub disparities: DisparityReport,
}

pub fn evaluate(model: &LinearModel, test: &TabularDataset) -> Result<Evaluation> {
    let yhat = predict(model, test)?;
    if yhat.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = yhat.iter().zip(test.labels()).filter(|(a, b)| a == b).count();
    Ok(Evaluation {
        accuracy: correct as f64 / yhat.len() as f64,
        disparities: disparities(test.labels(), test.groups(), &yhat)?,
    })
}

/// Default penalty grid for cross-validating `fc`.
pub const LAMBDA_GRID: [f64; 7] = [0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0];

/// Cross-validated accuracy and disparity of one penalty strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvStat {
    pub lambda: f64,
    pub accuracy: f64,
    pub unfairness: f64,
}

fn unfairness(report: &DisparityReport, target: FairnessTarget) -> f64 {
    match target {
        FairnessTarget::Dp => report.dp,
        FairnessTarget::Eo => report.eo,
        FairnessTarget::DpAndEo => report.combined,
    }
}

/// Picks λ by k-fold cross-validation: the lowest held-out unfairness among strengths whose
/// accuracy is within `slack` of the best.
pub fn select_lambda(
    data: &TabularDataset,
    config: &TrainConfig,
    grid: &[f64],
    folds: usize,
    slack: f64,
) -> Result<(f64, Vec<CvStat>)> {
    if grid.is_empty() || folds < 2 || data.n() < folds {
        return Err(Error::InvalidArgument("need a nonempty grid, ≥ 2 folds and ≥ 1 row per fold".into()));
    }
    let mut perm: Vec<usize> = (0..data.n()).collect();
    perm.shuffle(&mut seeded_rng(config.seed ^ 0xC0FF_EE00));
    let size = data.n().div_ceil(folds);
    let parts: Vec<&[usize]> = perm.chunks(size).collect();
    let mut stats = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let cfg = TrainConfig {
            method: Method::Fc,
            lambda,
            ..*config
        };
        let (mut acc, mut unf) = (0.0, 0.0);
        for (f, held) in parts.iter().enumerate() {
            let fit: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            let model = train(&data.select(&fit), &TrainConfig {
                batch_size: cfg.batch_size.min(fit.len()),
                ..cfg
            })?;
            let ev = evaluate(&model, &data.select(held))?;
            acc += ev.accuracy;
            unf += unfairness(&ev.disparities, cfg.target);
        }
        stats.push(CvStat {
            lambda,
            accuracy: acc / parts.len() as f64,
            unfairness: unf / parts.len() as f64,
        });
    }
    let best = stats.iter().map(|s| s.accuracy).fold(f64::NEG_INFINITY, f64::max);
    let chosen = stats
        .iter()
        .filter(|s| s.accuracy >= best - slack)
        .min_by(|a, b| a.unfairness.total_cmp(&b.unfairness))
        .expect("best-accuracy entry qualifies");
    Ok((chosen.lambda, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> TabularDataset {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, (i % 7) as f64 * 0.1]).collect();
        let labels = (0..200).map(|i| (i % 2 == 0) as u8).collect();
        let groups = (0..200).map(|i| ((i / 2) % 2) as u8).collect();
        TabularDataset::from_rows(&rows, labels, groups).unwrap()
    }

    #[test]
    fn zero_theta_predicts_zero() {
        let d = toy();
        let m = LinearModel {
            theta: vec![0.0; 4],
            meta: TrainingMeta {
                method: Method::Lr,
                target: FairnessTarget::Dp,
                epochs: 0,
                learning_rate: 0.0,
                seed: 0,
                lambda: None,
            },
        };
        assert!(predict(&m, &d).unwrap().iter().all(|&v| v == 0));
    }

    #[test]
    fn separable_toy_is_learned() {
        let d = toy();
        let cfg = TrainConfig {
            epochs: 50,
            lr_rate: 0.05,
            ..Default::default()
        };
        let m = train(&d, &cfg).unwrap();
        assert_eq!(evaluate(&m, &d).unwrap().accuracy, 1.0);
    }

    #[test]
    fn batch_shares_stay_valid() {
        let sh = BatchShares {
            py: 0.3,
            r1: 0.99,
            r0: 0.01,
        };
        let p = sh.probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn width_mismatch() {
        let d = toy();
        let m = train(&d, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        let narrow = TabularDataset::from_rows(&[vec![1.0]], vec![1], vec![0]).unwrap();
        assert_eq!(predict(&m, &narrow).unwrap_err().code(), "shape-mismatch");
    }
}
