//! Class-ratio optimization: move the (y,z) ratios as little as possible so that the
//! correlation constant lands in [α, β] while the marginals stay within γ bands.
//!
//! The nonconvex QCQP is solved through its SDP relaxation; the rank-one part of the lifted
//! solution is extracted, cleaned up and, if needed, repaired along the marginal-preserving
//! direction. A brute-force grid oracle is provided for verification.

mod grid;
pub mod ipm;
mod sdp;

pub use grid::{grid_oracle, grid_oracle_with_tolerance, GRID_EQUALITY_TOLERANCE};
pub use sdp::{build_sdp, extract_solution, solve_sdp, SdpInstance, SdpOutcome};

use serde::{Deserialize, Serialize};

use crate::dataset::JointRatios;
use crate::error::{Error, Result};
use crate::shift::ShiftRange;

/// Default grid resolution for the oracle.
pub const DEFAULT_RESOLUTION: usize = 200;

/// Feasibility tolerance on c for accepting a solution.
pub const C_TOLERANCE: f64 = 1e-3;

/// Tolerance on the marginal bands.
pub const MARGINAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioProblem {
    pub current: JointRatios,
    pub range: ShiftRange,
    pub gamma_y: f64,
    pub gamma_z: f64,
    pub py_train: f64,
    pub pz_train: f64,
}

impl RatioProblem {
    pub fn new(current: JointRatios, range: ShiftRange, gamma_y: f64, gamma_z: f64) -> Result<Self> {
        current.validate()?;
        for g in [gamma_y, gamma_z] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidArgument(format!("gamma {g} outside [0,1]")));
            }
        }
        if range.alpha > range.beta {
            return Err(Error::InvalidArgument(format!(
                "alpha {} > beta {}",
                range.alpha, range.beta
            )));
        }
        Ok(Self {
            current,
            range,
            gamma_y,
            gamma_z,
            py_train: current.py(),
            pz_train: current.pz(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.range.alpha
    }

    pub fn beta(&self) -> f64 {
        self.range.beta
    }

    /// Equality mode: α = β.
    pub fn is_exact(&self) -> bool {
        self.range.alpha == self.range.beta
    }

    /// Σ(w − w′)².
    pub fn objective(&self, candidate: &[f64; 4]) -> f64 {
        self.current
            .as_array()
            .iter()
            .zip(candidate)
            .map(|(a, b)| (a - b).powi(2))
            .sum()
    }

    /// Constraint violations of a candidate (all zero when feasible).
    pub fn residuals(&self, x: &[f64; 4]) -> Residuals {
        let sum: f64 = x.iter().sum();
        let simplex = x.iter().map(|v| (-v).max(v - 1.0).max(0.0)).fold((sum - 1.0).abs(), f64::max);
        let py = x[0] + x[1];
        let pz = x[0] + x[2];
        let c_range = if pz <= 0.0 || pz >= 1.0 {
            f64::INFINITY
        } else {
            let c = x[0] / pz - x[1] / (1.0 - pz);
            (self.alpha() - c).max(c - self.beta()).max(0.0)
        };
        Residuals {
            c_range,
            marginal_y: ((py - self.py_train).abs() - self.gamma_y).max(0.0),
            marginal_z: ((pz - self.pz_train).abs() - self.gamma_z).max(0.0),
            simplex,
        }
    }
}

/// Constraint violations; zero means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub c_range: f64,
    pub marginal_y: f64,
    pub marginal_z: f64,
    pub simplex: f64,
}

impl Residuals {
    pub fn within_tolerance(&self) -> bool {
        self.c_range <= C_TOLERANCE
            && self.marginal_y <= MARGINAL_TOLERANCE
            && self.marginal_z <= MARGINAL_TOLERANCE
            && self.simplex <= 1e-9
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.c_range, self.marginal_y, self.marginal_z, self.simplex]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Sdp,
    Grid,
    SdpRepaired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSolution {
    pub ratios: JointRatios,
    /// Σ(w − w′)².
    pub objective: f64,
    /// Relaxation optimum, a lower bound on the QCQP optimum; absent for grid solutions.
    pub relaxation_lower_bound: Option<f64>,
    pub residuals: Residuals,
    pub achieved_c: f64,
    pub method: SolveMethod,
}

impl RatioSolution {
    pub(crate) fn from_point(problem: &RatioProblem, x: [f64; 4], lower: Option<f64>, method: SolveMethod) -> Self {
        let residuals = problem.residuals(&x);
        let pz = x[0] + x[2];
        Self {
            ratios: JointRatios {
                w11: x[0],
                w10: x[1],
                w01: x[2],
                w00: x[3],
            },
            objective: problem.objective(&x),
            relaxation_lower_bound: lower,
            residuals,
            achieved_c: x[0] / pz - x[1] / (1.0 - pz),
            method,
        }
    }
}

/// Full solve: SDP relaxation, extraction and repair.
///
/// If the interior-point method fails to converge, the grid oracle at the default resolution
/// is used instead and the solution is tagged `grid`. The relaxation can stay feasible when the
/// QCQP is not; a failed extraction is therefore reported as "infeasible" when the grid scan
/// at resolution 100 finds no feasible point either.
pub fn optimize(problem: &RatioProblem) -> Result<RatioSolution> {
    let instance = build_sdp(problem);
    match solve_sdp(&instance, &ipm::IpmOptions::default()) {
        Ok(out) => match extract_solution(&out.a, problem) {
            Ok(mut sol) => {
                sol.relaxation_lower_bound = Some(out.lower_bound);
                Ok(sol)
            }
            Err(e @ Error::ExtractionFailed { .. }) => match grid_oracle(problem, 100) {
                Err(inf @ Error::Infeasible(_)) => Err(inf),
                _ => Err(e),
            },
            Err(e) => Err(e),
        },
        Err(Error::SdpNonConverged { .. }) => grid_oracle(problem, DEFAULT_RESOLUTION),
        Err(e) => Err(e),
    }
}

/// Ratios with the given marginals and correlation constant.
pub fn ratios_with(py: f64, pz: f64, c: f64) -> Result<JointRatios> {
    let w11 = py * pz + c * pz * (1.0 - pz);
    let a = [w11, py - w11, pz - w11, 1.0 - py - pz + w11];
    if a.iter().any(|v| *v < -1e-12) {
        return Err(Error::Infeasible(format!(
            "c = {c} unreachable with Pr(y=1) = {py}, Pr(z=1) = {pz}"
        )));
    }
    JointRatios::from_array(a.map(|v| v.max(0.0)))
}
