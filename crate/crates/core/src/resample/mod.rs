//! Pre-processing: ratio optimization followed by class-weighted resampling, the Reweighing
//! baseline, and the MinDistChange split-weight search.

mod ot;

pub use ot::{assignment, wasserstein_cost, TransportPlan};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    cell_index, class_weights, joint_ratios, stratified_resample, weighted_resample, JointRatios, SampleWeights,
    TabularDataset, CELLS,
};
use crate::error::{Error, Result};
use crate::ratio::{optimize, RatioProblem, RatioSolution};
use crate::shift::ShiftRange;

/// How rows are drawn from the weighted training set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Class totals fixed by apportionment, systematic draws within a class.
    #[default]
    Stratified,
    /// Independent draws with replacement.
    Iid,
}

/// Draws `size` rows under `weights` with the chosen scheme.
pub fn resample(
    data: &TabularDataset,
    weights: &SampleWeights,
    size: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<TabularDataset> {
    match sampling {
        Sampling::Stratified => stratified_resample(data, weights, size, seed),
        Sampling::Iid => weighted_resample(data, weights, size, seed),
    }
}

/// Settings for the MinDistChange search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinDistOptions {
    pub grid_m: usize,
    pub feature_index: usize,
    pub subsample: usize,
}

impl Default for MinDistOptions {
    fn default() -> Self {
        Self {
            grid_m: 10,
            feature_index: 0,
            subsample: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub sampling: Sampling,
    /// Run MinDistChange instead of uniform class weights.
    pub min_dist: Option<MinDistOptions>,
}

/// Result of pre-processing a training set.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub data: TabularDataset,
    pub solution: RatioSolution,
    pub weights: SampleWeights,
    pub split: Option<SplitWeights>,
}

/// Moves the (y,z) ratios of `train` into the correlation range and resamples n rows.
pub fn preprocess(
    train: &TabularDataset,
    range: ShiftRange,
    gamma_y: f64,
    gamma_z: f64,
    seed: u64,
    options: &PreprocessOptions,
) -> Result<Preprocessed> {
    let current = joint_ratios(train)?;
    for (k, &(y, z)) in CELLS.iter().enumerate() {
        if current.as_array()[k] == 0.0 {
            return Err(Error::EmptyClass { y, z, mass: 0.0 });
        }
    }
    let problem = RatioProblem::new(current, range, gamma_y, gamma_z)?;
    let solution = optimize(&problem)?;
    let (weights, split) = match &options.min_dist {
        Some(md) => {
            let found = min_dist_change(train, &current, &solution.ratios, md, seed)?;
            (found.weights, Some(found.split))
        }
        None => (class_weights(train, &solution.ratios)?, None),
    };
    let data = resample(train, &weights, train.n(), options.sampling, seed)?;
    Ok(Preprocessed {
        data,
        solution,
        weights,
        split,
    })
}

/// Reweighing: class (y,z) gets Pr(y)·Pr(z)/Pr(y,z), which makes y and z independent.
pub fn reweighing_weights(train: &TabularDataset) -> Result<SampleWeights> {
    let w = joint_ratios(train)?;
    let (py, pz) = (w.py(), w.pz());
    let mut factor = [0.0; 4];
    for (k, &(y, z)) in CELLS.iter().enumerate() {
        let joint = w.as_array()[k];
        if joint == 0.0 {
            return Err(Error::EmptyClass { y, z, mass: 0.0 });
        }
        let my = if y == 1 { py } else { 1.0 - py };
        let mz = if z == 1 { pz } else { 1.0 - pz };
        factor[k] = my * mz / joint;
    }
    Ok(SampleWeights {
        weights: (0..train.n())
            .map(|i| factor[cell_index(train.labels()[i], train.groups()[i])])
            .collect(),
    })
}

/// Per-class split masses for MinDistChange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitWeights {
    /// masses[k][t] = w′_{y,z,t} for cell k in (1,1), (1,0), (0,1), (0,0) order.
    pub masses: [[f64; 2]; 4],
    pub feature_index: usize,
    /// Per-class median of the split feature.
    pub thresholds: [f64; 4],
}

/// Rows of each class ordered by the split feature, cut into halves (the middle row of an odd
/// class goes to t = 0).
struct ClassHalves {
    halves: [[Vec<usize>; 2]; 4],
    thresholds: [f64; 4],
}

fn split_classes(train: &TabularDataset, feature_index: usize) -> Result<ClassHalves> {
    if feature_index >= train.n_features() {
        return Err(Error::InvalidArgument(format!(
            "feature index {feature_index} out of range for {} columns",
            train.n_features()
        )));
    }
    let cells = train.cell_indices();
    let mut halves: [[Vec<usize>; 2]; 4] = Default::default();
    let mut thresholds = [0.0; 4];
    for (k, rows) in cells.iter().enumerate() {
        if rows.len() < 2 {
            let (y, z) = CELLS[k];
            return Err(Error::UnsplittableClass { y, z, size: rows.len() });
        }
        let mut sorted = rows.clone();
        sorted.sort_by(|&a, &b| {
            train.row(a)[feature_index]
                .total_cmp(&train.row(b)[feature_index])
                .then(a.cmp(&b))
        });
        let cut = sorted.len().div_ceil(2);
        thresholds[k] = train.row(sorted[cut - 1])[feature_index];
        halves[k] = [sorted[..cut].to_vec(), sorted[cut..].to_vec()];
    }
    Ok(ClassHalves { halves, thresholds })
}

/// Row weights for per-class partials p_k = w′_{y,z,1}/w′_{y,z}.
///
/// d_j = w′_{y,z,t}/(w_{y,z}·0.5), then rescaled so that each class carries n·w′_{y,z}.
fn split_row_weights(
    n: usize,
    halves: &ClassHalves,
    current: &JointRatios,
    target: &JointRatios,
    partials: [f64; 4],
) -> (SampleWeights, [[f64; 2]; 4]) {
    let mut weights = vec![0.0; n];
    let mut masses = [[0.0; 2]; 4];
    for k in 0..4 {
        let t = target.as_array()[k];
        let w = current.as_array()[k];
        masses[k] = [(1.0 - partials[k]) * t, partials[k] * t];
        if t == 0.0 || w == 0.0 {
            continue;
        }
        let mut sum = 0.0;
        for (half, rows) in halves.halves[k].iter().enumerate() {
            let d = masses[k][half] / (w * 0.5);
            for &i in rows {
                weights[i] = d;
            }
            sum += d * rows.len() as f64;
        }
        if sum > 0.0 {
            let scale = n as f64 * t / sum;
            for rows in &halves.halves[k] {
                for &i in rows {
                    weights[i] *= scale;
                }
            }
        }
    }
    (SampleWeights { weights }, masses)
}

/// Outcome of the MinDistChange search.
#[derive(Debug, Clone)]
pub struct MinDistResult {
    pub weights: SampleWeights,
    pub split: SplitWeights,
    /// Transport cost between the resampled candidate and `train`.
    pub cost: f64,
    pub candidates: usize,
}

/// Grid of candidate partials in enumeration order (first class varies slowest). Classes with
/// zero target mass contribute a single candidate.
pub fn split_candidates(target: &JointRatios, grid_m: usize) -> Vec<[f64; 4]> {
    let axis = |k: usize| -> Vec<f64> {
        if target.as_array()[k] == 0.0 {
            vec![0.5]
        } else {
            (0..=grid_m).map(|i| i as f64 / grid_m as f64).collect()
        }
    };
    let axes: Vec<Vec<f64>> = (0..4).map(axis).collect();
    let mut out = Vec::new();
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                for &d in &axes[3] {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

/// Transport cost of a single split candidate.
pub fn split_candidate_cost(
    train: &TabularDataset,
    current: &JointRatios,
    target: &JointRatios,
    partials: [f64; 4],
    options: &MinDistOptions,
    seed: u64,
) -> Result<f64> {
    let halves = split_classes(train, options.feature_index)?;
    let (weights, _) = split_row_weights(train.n(), &halves, current, target, partials);
    candidate_cost(train, &weights, options.subsample, seed)
}

fn candidate_cost(train: &TabularDataset, weights: &SampleWeights, subsample: usize, seed: u64) -> Result<f64> {
    let sample = stratified_resample(train, weights, train.n(), seed)?;
    Ok(wasserstein_cost(&sample, train, subsample, seed)?.cost)
}

/// Searches per-class split weights whose resampled data stays closest to `train`.
///
/// Every class is cut at the median of `feature_index`; the share of the class mass placed on
/// the upper half ranges over {0, 1/m, ..., 1}. All candidates share the resample and transport
/// seed, and ties go to the first candidate in enumeration order.
pub fn min_dist_change(
    train: &TabularDataset,
    current: &JointRatios,
    target: &JointRatios,
    options: &MinDistOptions,
    seed: u64,
) -> Result<MinDistResult> {
    if options.grid_m < 2 {
        return Err(Error::InvalidArgument(format!("grid_m = {} < 2", options.grid_m)));
    }
    current.validate()?;
    target.validate()?;
    let halves = split_classes(train, options.feature_index)?;
    let candidates = split_candidates(target, options.grid_m);
    let costs: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|&p| {
            let (weights, _) = split_row_weights(train.n(), &halves, current, target, p);
            candidate_cost(train, &weights, options.subsample, seed)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in costs.into_iter().enumerate() {
        let c = c?;
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    let (i, cost) = best.expect("at least one candidate");
    let (weights, masses) = split_row_weights(train.n(), &halves, current, target, candidates[i]);
    Ok(MinDistResult {
        weights,
        split: SplitWeights {
            masses,
            feature_index: options.feature_index,
            thresholds: halves.thresholds,
        },
        cost,
        candidates: candidates.len(),
    })
}
