//! Exhaustive grid scan of the 3-simplex, used as an independent oracle.

use rayon::prelude::*;

use super::{RatioProblem, RatioSolution, SolveMethod};
use crate::error::{Error, Result};

/// c tolerance used by the grid in equality mode (α = β), where exact hits are measure zero.
pub const GRID_EQUALITY_TOLERANCE: f64 = 1e-3;

/// Scans the simplex at spacing 1/resolution and returns the best feasible point.
///
/// The c range is enforced exactly when α < β and with [`GRID_EQUALITY_TOLERANCE`] when α = β.
pub fn grid_oracle(problem: &RatioProblem, resolution: usize) -> Result<RatioSolution> {
    let tol = if problem.is_exact() { GRID_EQUALITY_TOLERANCE } else { 0.0 };
    grid_oracle_with_tolerance(problem, resolution, tol)
}

/// Grid scan accepting c ∈ [α − tol, β + tol]. Ties go to the lexicographically smallest point.
pub fn grid_oracle_with_tolerance(problem: &RatioProblem, resolution: usize, tol: f64) -> Result<RatioSolution> {
    if resolution < 10 {
        return Err(Error::InvalidArgument(format!("resolution {resolution} < 10")));
    }
    let r = resolution as f64;
    let w = problem.current.as_array();
    let (lo, hi) = (problem.alpha() - tol, problem.beta() + tol);
    let band = 1e-12;
    let best = (0..=resolution)
        .into_par_iter()
        .filter_map(|i| {
            let mut best: Option<(f64, [usize; 3])> = None;
            for j in 0..=resolution - i {
                let py = (i + j) as f64 / r;
                if (py - problem.py_train).abs() > problem.gamma_y + band {
                    continue;
                }
                for k in 0..=resolution - i - j {
                    let pz = (i + k) as f64 / r;
                    if pz <= 0.0 || pz >= 1.0 || (pz - problem.pz_train).abs() > problem.gamma_z + band {
                        continue;
                    }
                    let x = [i as f64 / r, j as f64 / r, k as f64 / r, (resolution - i - j - k) as f64 / r];
                    let c = x[0] / pz - x[1] / (1.0 - pz);
                    if c < lo - band || c > hi + band {
                        continue;
                    }
                    let obj: f64 = (0..4).map(|q| (w[q] - x[q]).powi(2)).sum();
                    if best.is_none_or(|(b, _)| obj < b) {
                        best = Some((obj, [i, j, k]));
                    }
                }
            }
            best
        })
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let Some((_, [i, j, k])) = best else {
        return Err(Error::Infeasible(format!(
            "no grid point at resolution {resolution} satisfies the constraints"
        )));
    };
    let x = [i as f64 / r, j as f64 / r, k as f64 / r, (resolution - i - j - k) as f64 / r];
    Ok(RatioSolution::from_point(problem, x, None, SolveMethod::Grid))
}
