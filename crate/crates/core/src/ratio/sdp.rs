//! SDP relaxation of the class-ratio QCQP.
//!
//! With x = (w′11, w′10, w′01, w′00) and X standing in for xxᵀ the problem reads
//!
//!   min Tr(X·P0) + q0ᵀx
//!   s.t. Tr(X·P_α) ≥ 0, Tr(X·P_β) ≤ 0,
//!        |q3ᵀx − Pr(y=1)| ≤ γ_y, |q2ᵀx − Pr(z=1)| ≤ γ_z,
//!        q4ᵀx = 1, 0 ≤ x ≤ 1, [X x; xᵀ 1] ⪰ 0.
//!
//! xᵀP_γx = w11·w00 − w10·w01 − γ·Pr(z=1)·Pr(z=0), whose sign is the sign of c − γ.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix5, Vector4};

use super::grid::grid_oracle;
use super::ipm::{self, IpmOptions, IpmStatus, SdpProblem};
use super::{RatioProblem, RatioSolution, SolveMethod, C_TOLERANCE, MARGINAL_TOLERANCE};
use crate::error::{Error, Result};

/// Matrices and vectors of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpInstance {
    pub p0: Matrix4<f64>,
    pub p_alpha: Matrix4<f64>,
    pub p_beta: Matrix4<f64>,
    pub q0: Vector4<f64>,
    /// Evaluates Pr(z=1).
    pub q2: Vector4<f64>,
    /// Evaluates Pr(y=1).
    pub q3: Vector4<f64>,
    pub q4: Vector4<f64>,
    pub problem: RatioProblem,
}

/// Result of solving the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpOutcome {
    /// Lifted variable [X x; xᵀ 1].
    pub a: Matrix5<f64>,
    /// Relaxation optimum in Σ(w − w′)² units (dual objective plus Σw²).
    pub lower_bound: f64,
    pub primal_objective: f64,
    pub iterations: usize,
}

/// P_γ for the constraint Tr(X·P_γ) ≷ 0.
pub fn p_gamma(g: f64) -> Matrix4<f64> {
    let a = -g / 2.0;
    let b = (1.0 - g) / 2.0;
    let c = (-1.0 - g) / 2.0;
    Matrix4::new(
        0.0, a, 0.0, b, //
        a, 0.0, c, 0.0, //
        0.0, c, 0.0, a, //
        b, 0.0, a, 0.0,
    )
}

pub fn build_sdp(problem: &RatioProblem) -> SdpInstance {
    let w = Vector4::from(problem.current.as_array());
    SdpInstance {
        p0: Matrix4::identity(),
        p_alpha: p_gamma(problem.alpha()),
        p_beta: p_gamma(problem.beta()),
        q0: -2.0 * w,
        q2: Vector4::new(1.0, 0.0, 1.0, 0.0),
        q3: Vector4::new(1.0, 1.0, 0.0, 0.0),
        q4: Vector4::new(1.0, 1.0, 1.0, 1.0),
        problem: *problem,
    }
}

/// One linear constraint on the lifted block plus an optional slack.
struct Row {
    block: Matrix5<f64>,
    slack: Option<f64>,
    rhs: f64,
}

fn linear_block(q: &Vector4<f64>) -> Matrix5<f64> {
    let mut m = Matrix5::zeros();
    for i in 0..4 {
        m[(i, 4)] = q[i] / 2.0;
        m[(4, i)] = q[i] / 2.0;
    }
    m
}

fn quad_block(p: &Matrix4<f64>) -> Matrix5<f64> {
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(p);
    m
}

fn standard_form(inst: &SdpInstance) -> SdpProblem {
    let pr = &inst.problem;
    let mut rows = Vec::new();
    let eq = |block, rhs| Row { block, slack: None, rhs };
    let ineq = |block, sign, rhs| Row {
        block,
        slack: Some(sign),
        rhs,
    };

    let mut corner = Matrix5::zeros();
    corner[(4, 4)] = 1.0;
    rows.push(eq(corner, 1.0));
    rows.push(eq(linear_block(&inst.q4), 1.0));

    if pr.is_exact() {
        rows.push(eq(quad_block(&inst.p_alpha), 0.0));
    } else {
        rows.push(ineq(quad_block(&inst.p_alpha), -1.0, 0.0));
        rows.push(ineq(quad_block(&inst.p_beta), 1.0, 0.0));
    }

    for (q, center, gamma) in [(&inst.q3, pr.py_train, pr.gamma_y), (&inst.q2, pr.pz_train, pr.gamma_z)] {
        let block = linear_block(q);
        if gamma == 0.0 {
            rows.push(eq(block, center));
        } else {
            rows.push(ineq(block, 1.0, center + gamma));
            rows.push(ineq(block, -1.0, center - gamma));
        }
    }

    for i in 0..4 {
        let mut e = Vector4::zeros();
        e[i] = 1.0;
        let block = linear_block(&e);
        rows.push(ineq(block, -1.0, 0.0));
        rows.push(ineq(block, 1.0, 1.0));
    }

    let slacks = rows.iter().filter(|r| r.slack.is_some()).count();
    let n = 5 + slacks;
    let mut a = Vec::with_capacity(rows.len());
    let mut b = DVector::zeros(rows.len());
    let mut next = 5;
    for (k, r) in rows.iter().enumerate() {
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (5, 5)).copy_from(&r.block);
        if let Some(s) = r.slack {
            m[(next, next)] = s;
            next += 1;
        }
        a.push(m);
        b[k] = r.rhs;
    }

    let mut c_block = quad_block(&inst.p0);
    for i in 0..4 {
        c_block[(i, 4)] = inst.q0[i] / 2.0;
        c_block[(4, i)] = inst.q0[i] / 2.0;
    }
    let mut c = DMatrix::zeros(n, n);
    c.view_mut((0, 0), (5, 5)).copy_from(&c_block);
    SdpProblem { c, a, b }
}

/// Solves the relaxation with the interior-point method.
///
/// Infeasibility is reported only when the solver finds a Farkas certificate and a grid scan
/// at resolution 100 finds no feasible point either.
pub fn solve_sdp(inst: &SdpInstance, opts: &IpmOptions) -> Result<SdpOutcome> {
    let sp = standard_form(inst);
    let sol = ipm::solve(&sp, opts)?;
    if sol.status == IpmStatus::PrimalInfeasible {
        return match grid_oracle(&inst.problem, 100) {
            Err(e) => Err(e),
            Ok(_) => Err(Error::SdpNonConverged {
                iterations: sol.iterations,
                primal: sol.primal_res,
                dual: sol.dual_res,
                gap: f64::NAN,
            }),
        };
    }
    let w2: f64 = inst.problem.current.as_array().iter().map(|v| v * v).sum();
    let a = Matrix5::from_fn(|i, j| sol.x[(i, j)]);
    Ok(SdpOutcome {
        a,
        lower_bound: sol.dual_obj + w2,
        primal_objective: sol.primal_obj + w2,
        iterations: sol.iterations,
    })
}

/// Reads x from the last column of the lifted matrix, projects it onto the simplex and, when
/// the constraints are still violated, repairs it within the marginal-preserving family.
pub fn extract_solution(a: &Matrix5<f64>, problem: &RatioProblem) -> Result<RatioSolution> {
    let mut x = [0.0; 4];
    for (i, v) in x.iter_mut().enumerate() {
        *v = a[(i, 4)].clamp(0.0, 1.0);
    }
    let s: f64 = x.iter().sum();
    if s <= 0.0 {
        return Err(Error::ExtractionFailed {
            residuals: problem.residuals(&x).to_vec(),
        });
    }
    for v in &mut x {
        *v /= s;
    }
    let r = problem.residuals(&x);
    if r.c_range <= C_TOLERANCE && r.marginal_y <= MARGINAL_TOLERANCE && r.marginal_z <= MARGINAL_TOLERANCE {
        return Ok(RatioSolution::from_point(problem, x, None, SolveMethod::Sdp));
    }
    let repaired = repair(&x, problem).ok_or_else(|| Error::ExtractionFailed {
        residuals: r.to_vec(),
    })?;
    Ok(RatioSolution::from_point(problem, repaired, None, SolveMethod::SdpRepaired))
}

/// Best point with marginals (py, pz) whose c lies in the range, or None.
fn best_in_family(pr: &RatioProblem, py: f64, pz: f64) -> Option<[f64; 4]> {
    if pz <= 0.0 || pz >= 1.0 || !(0.0..=1.0).contains(&py) {
        return None;
    }
    let at = |s: f64| [s, py - s, pz - s, 1.0 - py - pz + s];
    let v = pz * (1.0 - pz);
    let lo = (py * pz + pr.alpha() * v).max(0.0).max(py + pz - 1.0);
    let hi = (py * pz + pr.beta() * v).min(py).min(pz);
    if lo > hi + 1e-12 {
        return None;
    }
    // the family moves along d = (1, −1, −1, 1); project the original ratios onto it
    let w = pr.current.as_array();
    let base = at(0.0);
    let d = [1.0, -1.0, -1.0, 1.0];
    let s_star: f64 = (0..4).map(|k| d[k] * (w[k] - base[k])).sum::<f64>() / 4.0;
    let s = s_star.clamp(lo, hi.max(lo));
    Some(at(s).map(|v| v.max(0.0)))
}

/// Keeps the extracted marginals (clamped into their bands) and moves along the
/// marginal-preserving direction into the c range. If that family cannot reach the range,
/// scans the marginal bands for the closest family that can.
fn repair(x: &[f64; 4], pr: &RatioProblem) -> Option<[f64; 4]> {
    let clamp_y = |v: f64| v.clamp(pr.py_train - pr.gamma_y, pr.py_train + pr.gamma_y).clamp(0.0, 1.0);
    let clamp_z = |v: f64| v.clamp(pr.pz_train - pr.gamma_z, pr.pz_train + pr.gamma_z).clamp(0.0, 1.0);
    if let Some(p) = best_in_family(pr, clamp_y(x[0] + x[1]), clamp_z(x[0] + x[2])) {
        return Some(p);
    }
    const STEPS: usize = 200;
    let mut best: Option<(f64, [f64; 4])> = None;
    for i in 0..=STEPS {
        let py = clamp_y(pr.py_train - pr.gamma_y + 2.0 * pr.gamma_y * i as f64 / STEPS as f64);
        for j in 0..=STEPS {
            let pz = clamp_z(pr.pz_train - pr.gamma_z + 2.0 * pr.gamma_z * j as f64 / STEPS as f64);
            if let Some(p) = best_in_family(pr, py, pz) {
                let obj = pr.objective(&p);
                if best.is_none_or(|(b, _)| obj < b) {
                    best = Some((obj, p));
                }
            }
        }
    }
    best.map(|(_, p)| p)
}
