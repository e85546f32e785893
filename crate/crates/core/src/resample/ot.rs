//! Exact squared-Euclidean assignment between equal-size point sets.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{seeded_rng, TabularDataset};
use crate::error::{Error, Result};

/// Optimal pairing of two equal-size subsamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    /// Mean squared distance over the pairing.
    pub cost: f64,
    /// pairing[i] is the position in `target_rows` matched to `source_rows[i]`.
    pub pairing: Vec<usize>,
    pub source_rows: Vec<usize>,
    pub target_rows: Vec<usize>,
}

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting paths with
/// potentials, O(n³)). Returns the column assigned to each row.
pub fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based arrays, column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Coordinates of row i used for transport: features followed by y and z.
fn point(d: &TabularDataset, i: usize) -> impl Iterator<Item = f64> + '_ {
    d.row(i)
        .iter()
        .copied()
        .chain([d.labels()[i] as f64, d.groups()[i] as f64])
}

fn draw(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = seeded_rng(seed);
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Squared 2-Wasserstein estimate between two datasets.
///
/// Draws min(subsample, n_a, n_b) rows without replacement from each side and solves the exact
/// assignment problem on (features, y, z). Returns the mean squared distance of the matching.
pub fn wasserstein_cost(a: &TabularDataset, b: &TabularDataset, subsample: usize, seed: u64) -> Result<TransportPlan> {
    if a.n_features() != b.n_features() {
        return Err(Error::Shape(format!(
            "{} vs {} feature columns",
            a.n_features(),
            b.n_features()
        )));
    }
    let k = subsample.min(a.n()).min(b.n());
    if k == 0 {
        return Err(Error::EmptyDataset);
    }
    let source_rows = draw(a.n(), k, seed);
    let target_rows = draw(b.n(), k, seed.wrapping_add(0x2545_F491_4F6C_DD1D));
    let mut cost = vec![0.0; k * k];
    for (i, &ra) in source_rows.iter().enumerate() {
        let pa: Vec<f64> = point(a, ra).collect();
        for (j, &rb) in target_rows.iter().enumerate() {
            cost[i * k + j] = pa.iter().zip(point(b, rb)).map(|(x, y)| (x - y).powi(2)).sum();
        }
    }
    let pairing = assignment(&cost, k);
    let total: f64 = pairing.iter().enumerate().map(|(i, &j)| cost[i * k + j]).sum();
    Ok(TransportPlan {
        cost: total / k as f64,
        pairing,
        source_rows,
        target_rows,
    })
}
