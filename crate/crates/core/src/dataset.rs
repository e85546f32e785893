//! Tabular data, (y,z) joint counting and class-ratio bookkeeping.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four (y,z) cells in storage order.
pub const CELLS: [(u8, u8); 4] = [(1, 1), (1, 0), (0, 1), (0, 0)];

/// Position of cell (y,z) in [`CELLS`] order.
pub fn cell_index(y: u8, z: u8) -> usize {
    2 * (1 - y as usize) + (1 - z as usize)
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Feature matrix with a binary label and binary group per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u8>,
    groups: Vec<u8>,
    feature_names: Vec<String>,
}

impl TabularDataset {
    /// Builds a dataset from row-major features.
    pub fn new(features: Vec<f64>, n_features: usize, labels: Vec<u8>, groups: Vec<u8>) -> Result<Self> {
        let names = (1..=n_features).map(|i| format!("x{i}")).collect();
        Self::with_names(features, n_features, labels, groups, names)
    }

    pub fn with_names(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<u8>,
        groups: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if groups.len() != n || features.len() != n * n_features {
            return Err(Error::Shape(format!(
                "{} labels, {} groups, {} feature values for {} columns",
                n,
                groups.len(),
                features.len(),
                n_features
            )));
        }
        if feature_names.len() != n_features {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                n_features
            )));
        }
        for (row, (&y, &z)) in labels.iter().zip(&groups).enumerate() {
            if y > 1 || z > 1 {
                return Err(Error::InvalidValue {
                    row,
                    message: format!("label {y} / group {z} not in {{0,1}}"),
                });
            }
        }
        Ok(Self {
            features,
            n_features,
            labels,
            groups,
            feature_names,
        })
    }

    /// Builds a dataset from per-row feature vectors.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>, groups: Vec<u8>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(rows.concat(), p, labels, groups)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Rows at `indices`, in that order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same features and labels with a replaced group column.
    pub fn with_groups(&self, groups: Vec<u8>) -> Result<Self> {
        Self::with_names(
            self.features.clone(),
            self.n_features,
            self.labels.clone(),
            groups,
            self.feature_names.clone(),
        )
    }

    /// Features with the group appended as a last column.
    pub fn features_with_group(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| {
                let mut r = self.row(i).to_vec();
                r.push(self.groups[i] as f64);
                r
            })
            .collect()
    }

    /// Row indices of each cell, in [`CELLS`] order.
    pub fn cell_indices(&self) -> [Vec<usize>; 4] {
        let mut out: [Vec<usize>; 4] = Default::default();
        for i in 0..self.n() {
            out[cell_index(self.labels[i], self.groups[i])].push(i);
        }
        out
    }

    pub fn cell_counts(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for (&y, &z) in self.labels.iter().zip(&self.groups) {
            out[cell_index(y, z)] += 1;
        }
        out
    }
}

/// Probabilities of the four (y,z) cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRatios {
    pub w11: f64,
    pub w10: f64,
    pub w01: f64,
    pub w00: f64,
}

impl JointRatios {
    /// Validated constructor.
    pub fn new(w11: f64, w10: f64, w01: f64, w00: f64) -> Result<Self> {
        let r = Self { w11, w10, w01, w00 };
        r.validate()?;
        Ok(r)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w11, self.w10, self.w01, self.w00]
    }

    pub fn get(&self, y: u8, z: u8) -> f64 {
        self.as_array()[cell_index(y, z)]
    }

    /// Pr(y=1).
    pub fn py(&self) -> f64 {
        self.w11 + self.w10
    }

    /// Pr(z=1).
    pub fn pz(&self) -> f64 {
        self.w11 + self.w01
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidRatios(format!("entries {a:?} not in [0,1]")));
        }
        let s: f64 = a.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("entries sum to {s}")));
        }
        Ok(())
    }
}

/// Per-row nonnegative sampling weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights {
    pub weights: Vec<f64>,
}

impl SampleWeights {
    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0; n] }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted (y,z) ratios of `data` under these weights.
    pub fn weighted_ratios(&self, data: &TabularDataset) -> Result<JointRatios> {
        let mut mass = [0.0; 4];
        for i in 0..data.n() {
            mass[cell_index(data.labels()[i], data.groups()[i])] += self.weights[i];
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateWeights);
        }
        JointRatios::from_array(mass.map(|m| m / total))
    }
}

/// Empirical (y,z) ratios.
pub fn joint_ratios(data: &TabularDataset) -> Result<JointRatios> {
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    JointRatios::from_array(data.cell_counts().map(|k| k as f64 / n as f64))
}

/// Per-row weights moving the class ratios of `data` to `target`.
pub fn class_weights(data: &TabularDataset, target: &JointRatios) -> Result<SampleWeights> {
    target.validate()?;
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let counts = data.cell_counts();
    let t = target.as_array();
    let mut factor = [0.0; 4];
    for (k, &(y, z)) in CELLS.iter().enumerate() {
        if counts[k] == 0 {
            if t[k] > 0.0 {
                return Err(Error::EmptyClass { y, z, mass: t[k] });
            }
            continue;
        }
        factor[k] = t[k] / (counts[k] as f64 / n as f64);
    }
    let weights = (0..n)
        .map(|i| factor[cell_index(data.labels()[i], data.groups()[i])])
        .collect();
    Ok(SampleWeights { weights })
}

fn check_weights(data: &TabularDataset, weights: &SampleWeights) -> Result<()> {
    if weights.weights.len() != data.n() {
        return Err(Error::Shape(format!(
            "{} weights for {} rows",
            weights.weights.len(),
            data.n()
        )));
    }
    if weights.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    if weights.total() <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(())
}

/// Draws `size` rows i.i.d. with replacement, row j with probability d_j/Σd.
pub fn weighted_resample(
    data: &TabularDataset,
    weights: &SampleWeights,
    size: usize,
    seed: u64,
) -> Result<TabularDataset> {
    check_weights(data, weights)?;
    if size == 0 {
        return Err(Error::InvalidArgument("resample size must be positive".into()));
    }
    let dist = WeightedIndex::new(&weights.weights).map_err(|_| Error::DegenerateWeights)?;
    let mut rng = seeded_rng(seed);
    let idx: Vec<usize> = (0..size).map(|_| dist.sample(&mut rng)).collect();
    Ok(data.select(&idx))
}

/// Integer apportionment of `total` proportional to `mass` (largest remainder, ties to lower index).
pub(crate) fn apportion(mass: &[f64], total: usize) -> Vec<usize> {
    let s: f64 = mass.iter().sum();
    let exact: Vec<f64> = mass.iter().map(|m| m / s * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        out[k] += 1;
    }
    out
}

/// Low-variance weighted resampling.
///
/// The (y,z) class totals are fixed by apportioning `size` to the weighted class masses; inside a
/// class, rows are taken by systematic resampling over a shuffled order, so every row appears
/// floor or ceil of its expected count. Class ratios of the output match the weighted ratios up
/// to rounding to 1/size.
pub fn stratified_resample(
    data: &TabularDataset,
    weights: &SampleWeights,
    size: usize,
    seed: u64,
) -> Result<TabularDataset> {
    check_weights(data, weights)?;
    if size == 0 {
        return Err(Error::InvalidArgument("resample size must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let cells = data.cell_indices();
    let mass: Vec<f64> = cells
        .iter()
        .map(|rows| rows.iter().map(|&i| weights.weights[i]).sum())
        .collect();
    let totals = apportion(&mass, size);
    let mut idx = Vec::with_capacity(size);
    for (k, rows) in cells.iter().enumerate() {
        if totals[k] == 0 {
            continue;
        }
        let mut order = rows.clone();
        order.shuffle(&mut rng);
        let step = mass[k] / totals[k] as f64;
        let mut next = rng.random::<f64>() * step;
        let mut cum = 0.0;
        let mut taken = 0;
        for &i in &order {
            cum += weights.weights[i];
            while taken < totals[k] && next < cum {
                idx.push(i);
                taken += 1;
                next += step;
            }
        }
        // floating-point shortfall at the end of the sweep
        let last = *order.iter().rev().find(|&&i| weights.weights[i] > 0.0).unwrap_or(&order[0]);
        while taken < totals[k] {
            idx.push(last);
            taken += 1;
        }
    }
    idx.shuffle(&mut rng);
    Ok(data.select(&idx))
}

/// Reads a comma-separated file with a header row.
///
/// Every column other than the label and group columns must be numeric and becomes a feature,
/// in file order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, group_column: &str) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing column '{name}'")))
    };
    let yi = find(label_column)?;
    let zi = find(group_column)?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != yi && c != zi).collect();
    let names = feature_cols.iter().map(|&c| headers[c].to_string()).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidValue {
            row,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::InvalidValue {
                row,
                message: format!("{} fields, expected {}", record.len(), headers.len()),
            });
        }
        let binary = |c: usize, what: &str| match record[c].trim() {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(Error::InvalidValue {
                row,
                message: format!("{what} value '{other}' is not 0 or 1"),
            }),
        };
        labels.push(binary(yi, "label")?);
        groups.push(binary(zi, "group")?);
        for &c in &feature_cols {
            let v: f64 = record[c].trim().parse().map_err(|_| Error::InvalidValue {
                row,
                message: format!("column '{}' value '{}' is not numeric", &headers[c], &record[c]),
            })?;
            features.push(v);
        }
    }
    TabularDataset::with_names(features, feature_cols.len(), labels, groups, names)
}

/// Writes features, then `y` and `z` columns, with a header row.
pub fn write_csv(path: impl AsRef<Path>, data: &TabularDataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.extend(["y", "z"]);
    writer.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.labels()[i].to_string());
        rec.push(data.groups()[i].to_string());
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
