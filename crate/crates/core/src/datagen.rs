//! Synthetic two-Gaussian data with a rotated group mechanism, shifted test sets, and the
//! analytic classifier frontier.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_weights, joint_ratios, seeded_rng, stratified_resample, JointRatios, TabularDataset};
use crate::error::{Error, Result};
use crate::ratio::{optimize, RatioProblem};
use crate::shift::ShiftRange;

/// Stream offset separating the group draws from the (x, y) draws of the same seed.
const Z_STREAM: u64 = 0x5A5A_0000_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k: f64,
    pub mu0: [f64; 2],
    pub mu1: [f64; 2],
    pub cov0: [[f64; 2]; 2],
    pub cov1: [[f64; 2]; 2],
    pub seed: u64,
}

impl SyntheticSpec {
    /// The standard two-Gaussian setting.
    pub fn standard(n: usize, k: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            mu0: [-2.0, -2.0],
            mu1: [2.0, 2.0],
            cov0: [[10.0, 1.0], [1.0, 3.0]],
            cov1: [[5.0, 1.0], [1.0, 5.0]],
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        if self.k.is_nan() || self.k < 2.0 {
            return Err(Error::InvalidArgument(format!("rotation parameter k = {} < 2", self.k)));
        }
        for cov in [&self.cov0, &self.cov1] {
            Gaussian2::new([0.0, 0.0], cov)?;
        }
        Ok(())
    }
}

/// Bivariate normal with a precomputed Cholesky factor.
#[derive(Debug, Clone, Copy)]
struct Gaussian2 {
    mu: [f64; 2],
    l: [f64; 3],
    inv: [[f64; 2]; 2],
    norm: f64,
}

impl Gaussian2 {
    fn new(mu: [f64; 2], cov: &[[f64; 2]; 2]) -> Result<Self> {
        let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
        let det = a * c - b * b;
        if (cov[1][0] - b).abs() > 1e-12 || a <= 0.0 || det <= 0.0 {
            return Err(Error::InvalidArgument(format!("covariance {cov:?} is not symmetric positive definite")));
        }
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).sqrt();
        Ok(Self {
            mu,
            l: [l11, l21, l22],
            inv: [[c / det, -b / det], [-b / det, a / det]],
            norm: 1.0 / (2.0 * PI * det.sqrt()),
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let u: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        [self.mu[0] + self.l[0] * u, self.mu[1] + self.l[1] * u + self.l[2] * v]
    }

    fn pdf(&self, p: [f64; 2]) -> f64 {
        let d = [p[0] - self.mu[0], p[1] - self.mu[1]];
        let q = d[0] * (self.inv[0][0] * d[0] + self.inv[0][1] * d[1]) + d[1] * (self.inv[1][0] * d[0] + self.inv[1][1] * d[1]);
        self.norm * (-0.5 * q).exp()
    }
}

fn draw_xy(spec: &SyntheticSpec) -> Result<(Vec<f64>, Vec<u8>)> {
    let g0 = Gaussian2::new(spec.mu0, &spec.cov0)?;
    let g1 = Gaussian2::new(spec.mu1, &spec.cov1)?;
    let mut rng = seeded_rng(spec.seed);
    let mut features = Vec::with_capacity(2 * spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let y = rng.random_bool(0.5) as u8;
        let x = if y == 1 { g1.sample(&mut rng) } else { g0.sample(&mut rng) };
        features.extend_from_slice(&x);
        labels.push(y);
    }
    Ok((features, labels))
}

fn draw_z(spec: &SyntheticSpec, features: &[f64], k: f64) -> Result<Vec<u8>> {
    let g0 = Gaussian2::new(spec.mu0, &spec.cov0)?;
    let g1 = Gaussian2::new(spec.mu1, &spec.cov1)?;
    let mut rng = seeded_rng(spec.seed ^ Z_STREAM);
    let (s, c) = (PI / k).sin_cos();
    Ok(features
        .chunks_exact(2)
        .map(|x| {
            let r = [x[0] * c + x[1] * s, -x[0] * s + x[1] * c];
            let (p0, p1) = (g0.pdf(r), g1.pdf(r));
            let prob = if p0 + p1 > 0.0 { p1 / (p0 + p1) } else { 0.5 };
            rng.random_bool(prob) as u8
        })
        .collect())
}

/// Draws the labelled two-Gaussian data and the rotated group attribute.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TabularDataset> {
    spec.validate()?;
    let (features, labels) = draw_xy(spec)?;
    let groups = draw_z(spec, &features, spec.k)?;
    TabularDataset::new(features, 2, labels, groups)
}

/// Same (x, y) draws as `spec`, with z regenerated at rotation π/k_test.
pub fn make_test_rotated(spec: &SyntheticSpec, k_test: f64) -> Result<TabularDataset> {
    let test_spec = SyntheticSpec { k: k_test, ..*spec };
    test_spec.validate()?;
    let (features, labels) = draw_xy(spec)?;
    let groups = draw_z(spec, &features, k_test)?;
    TabularDataset::new(features, 2, labels, groups)
}

/// Resamples within (y,z) classes so that c = target_c with both marginals unchanged.
pub fn make_test_resampled(test: &TabularDataset, target_c: f64, seed: u64) -> Result<TabularDataset> {
    let w = joint_ratios(test)?;
    let problem = RatioProblem::new(w, ShiftRange::exact(target_c)?, 0.0, 0.0)?;
    let sol = optimize(&problem)?;
    let weights = class_weights(test, &sol.ratios)?;
    stratified_resample(test, &weights, test.n(), seed)
}

/// One synthetic classifier, described by its positive-prediction rate in every (y,z) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    /// Pr(ŷ=1 | y, z) in (1,1), (1,0), (0,1), (0,0) order.
    pub rates: [f64; 4],
    pub accuracy: f64,
    pub dp: f64,
    pub eo: f64,
    pub combined: f64,
}

/// Accuracy and group-vs-overall DP/EO of a cell-rate classifier under `w`.
pub fn evaluate_rates(w: &JointRatios, rates: [f64; 4]) -> FrontierPoint {
    let a = w.as_array();
    let [r11, r10, r01, r00] = rates;
    let accuracy = a[0] * r11 + a[1] * r10 + a[2] * (1.0 - r01) + a[3] * (1.0 - r00);
    let overall = a[0] * r11 + a[1] * r10 + a[2] * r01 + a[3] * r00;
    let mut dp: f64 = 0.0;
    for (m, pos) in [(a[0] + a[2], a[0] * r11 + a[2] * r01), (a[1] + a[3], a[1] * r10 + a[3] * r00)] {
        if m > 0.0 {
            dp = dp.max((pos / m - overall).abs());
        }
    }
    let mut eo: f64 = 0.0;
    // label y=1 cells: correct rate r; label y=0 cells: correct rate 1 − r
    for (wz1, rz1, wz0, rz0) in [(a[0], r11, a[1], r10), (a[2], 1.0 - r01, a[3], 1.0 - r00)] {
        let m = wz1 + wz0;
        if m <= 0.0 {
            continue;
        }
        let avg = (wz1 * rz1 + wz0 * rz0) / m;
        if wz1 > 0.0 {
            eo = eo.max((rz1 - avg).abs());
        }
        if wz0 > 0.0 {
            eo = eo.max((rz0 - avg).abs());
        }
    }
    FrontierPoint {
        rates,
        accuracy,
        dp,
        eo,
        combined: dp.max(eo),
    }
}

/// Enumerates every classifier on the rate grid {0, step, …, 1}⁴.
pub fn frontier(w: &JointRatios, step: f64) -> Result<Vec<FrontierPoint>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidArgument(format!("step {step} outside (0, 0.5]")));
    }
    let m = (1.0 / step).round() as usize;
    let levels: Vec<f64> = (0..=m).map(|i| (i as f64 * step).min(1.0)).collect();
    let mut out = Vec::with_capacity(levels.len().pow(4));
    for &a in &levels {
        for &b in &levels {
            for &c in &levels {
                for &d in &levels {
                    out.push(evaluate_rates(w, [a, b, c, d]));
                }
            }
        }
    }
    Ok(out)
}

/// Best accuracy among points whose unfairness (DP, or max(DP, EO)) is at most `tau`.
pub fn best_accuracy(points: &[FrontierPoint], tau: f64, combined: bool) -> Option<&FrontierPoint> {
    points
        .iter()
        .filter(|p| if combined { p.combined } else { p.dp } <= tau + 1e-12)
        .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy))
}

/// Writes frontier points as CSV rows (r11, r10, r01, r00, accuracy, dp, eo, combined).
pub fn write_frontier_csv(path: impl AsRef<Path>, points: &[FrontierPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["r11", "r10", "r01", "r00", "accuracy", "dp", "eo", "combined"])?;
    for p in points {
        let mut rec: Vec<String> = p.rates.iter().map(f64::to_string).collect();
        rec.extend([p.accuracy, p.dp, p.eo, p.combined].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
