//! Confidence range for the deployment correlation constant.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{seeded_rng, JointRatios};
use crate::error::{Error, Result};
use crate::stats::correlation_constant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeSource {
    Given,
    Estimated,
}

/// Range [alpha, beta] for the correlation constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRange {
    pub alpha: f64,
    pub beta: f64,
    pub confidence: f64,
    pub c_hat: f64,
    pub n1: usize,
    pub n0: usize,
    pub source: RangeSource,
}

impl ShiftRange {
    /// Caller-supplied range; c_hat is the midpoint and confidence is 1.
    pub fn given(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || alpha > beta {
            return Err(Error::InvalidArgument(format!("range [{alpha}, {beta}]")));
        }
        Ok(Self {
            alpha,
            beta,
            confidence: 1.0,
            c_hat: 0.5 * (alpha + beta),
            n1: 0,
            n0: 0,
            source: RangeSource::Given,
        })
    }

    /// Degenerate range α = β = c.
    pub fn exact(c: f64) -> Result<Self> {
        Self::given(c, c)
    }

    pub fn width(&self) -> f64 {
        self.beta - self.alpha
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    Ok(())
}

/// Hoeffding half-width sqrt((2/n)·ln(4/δ)).
pub fn half_width(n: usize, delta: f64) -> f64 {
    (2.0 / n as f64 * (4.0 / delta).ln()).sqrt()
}

/// Estimates c from labelled deployment samples with a 1−δ confidence range.
pub fn estimate(samples_y: &[u8], samples_z: &[u8], delta: f64) -> Result<ShiftRange> {
    check_delta(delta)?;
    if samples_y.len() != samples_z.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} groups",
            samples_y.len(),
            samples_z.len()
        )));
    }
    let (mut n1, mut n0, mut n11, mut n01) = (0usize, 0usize, 0usize, 0usize);
    for (&y, &z) in samples_y.iter().zip(samples_z) {
        match z {
            1 => {
                n1 += 1;
                n11 += (y == 1) as usize;
            }
            _ => {
                n0 += 1;
                n01 += (y == 1) as usize;
            }
        }
    }
    if n1 == 0 {
        return Err(Error::GroupMissing(1));
    }
    if n0 == 0 {
        return Err(Error::GroupMissing(0));
    }
    let c_hat = n11 as f64 / n1 as f64 - n01 as f64 / n0 as f64;
    let eps = half_width(n1.min(n0), delta);
    Ok(ShiftRange {
        alpha: (c_hat - eps).max(-1.0),
        beta: (c_hat + eps).min(1.0),
        confidence: 1.0 - delta,
        c_hat,
        n1,
        n0,
        source: RangeSource::Estimated,
    })
}

/// Per-group sample size 2·ln(4/δ)/ε² for an ε-accurate estimate, rounded to the nearest
/// integer (the commonly quoted 876 for ε = 0.1, δ = 0.05 is 876.4 rounded).
pub fn required_samples(eps: f64, delta: f64) -> Result<usize> {
    check_delta(delta)?;
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside (0, 2]")));
    }
    Ok((2.0 * (4.0 / delta).ln() / (eps * eps)).round().max(1.0) as usize)
}

/// Outcome of a coverage simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Fraction of successful trials whose range contains the true c.
    pub rate: f64,
    pub trials: usize,
    /// Trials where one group was absent from the sample.
    pub group_missing: usize,
}

/// Draws `m` samples from `true_ratios` per trial and checks whether the range covers the true c.
pub fn coverage_experiment(
    true_ratios: &JointRatios,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Coverage> {
    check_delta(delta)?;
    let c = correlation_constant(true_ratios)?;
    let probs = true_ratios.as_array();
    let outcomes: Vec<Option<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded_rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64));
            let mut ys = Vec::with_capacity(m);
            let mut zs = Vec::with_capacity(m);
            for _ in 0..m {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = 3;
                for (j, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        k = j;
                        break;
                    }
                }
                let (y, z) = crate::dataset::CELLS[k];
                ys.push(y);
                zs.push(z);
            }
            match estimate(&ys, &zs, delta) {
                Ok(r) => Some(r.alpha <= c && c <= r.beta),
                Err(_) => None,
            }
        })
        .collect();
    let group_missing = outcomes.iter().filter(|o| o.is_none()).count();
    let ok = trials - group_missing;
    let covered = outcomes.iter().filter(|o| **o == Some(true)).count();
    Ok(Coverage {
        rate: if ok == 0 { 0.0 } else { covered as f64 / ok as f64 },
        trials,
        group_missing,
    })
}
