//! Primal-dual interior-point method for small dense SDPs in standard form.
//!
//!   min ⟨C, X⟩  s.t.  ⟨A_i, X⟩ = b_i,  X ⪰ 0
//!   max bᵀy     s.t.  Σ y_i A_i + Z = C,  Z ⪰ 0
//!
//! Infeasible start, HKM search direction, Mehrotra predictor-corrector. Block-diagonal
//! structure in C and A_i (for example a PSD block plus a diagonal LP block) is preserved by
//! every iterate, so linear inequalities can be passed as diagonal slack entries.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub c: DMatrix<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    /// Threshold on the normalized Farkas residual for declaring primal infeasibility.
    pub infeas_tol: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            infeas_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    PrimalInfeasible,
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn apply_a(a: &[DMatrix<f64>], x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().map(|ai| inner(ai, x)))
}

fn apply_at(a: &[DMatrix<f64>], y: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    for (ai, yi) in a.iter().zip(y.iter()) {
        out += ai * *yi;
    }
    out
}

/// Largest step in (0, 1] keeping X + t·dX positive definite, damped by `tau`.
fn step_length(x: &DMatrix<f64>, dx: &DMatrix<f64>, tau: f64) -> f64 {
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let linv = match l.clone().try_inverse() {
        Some(m) => m,
        None => return 0.0,
    };
    let w = sym(&(&linv * dx * linv.transpose()));
    let lmin = SymmetricEigen::new(w).eigenvalues.min();
    if lmin >= 0.0 {
        1.0
    } else {
        (-tau / lmin).min(1.0)
    }
}

fn solve_schur(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let ms = sym(&m);
    if let Some(ch) = Cholesky::new(ms.clone()) {
        return Some(ch.solve(rhs));
    }
    ms.lu().solve(rhs)
}

pub fn solve(p: &SdpProblem, opts: &IpmOptions) -> Result<IpmSolution> {
    let n = p.c.nrows();
    let m = p.a.len();
    let norm_b = p.b.norm();
    let norm_c = p.c.norm();
    let scale = 1.0 + norm_b.max(norm_c);
    let mut x = DMatrix::<f64>::identity(n, n) * scale;
    let mut z = DMatrix::<f64>::identity(n, n) * scale;
    let mut y = DVector::<f64>::zeros(m);

    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for iter in 0..opts.max_iter {
        let rp = &p.b - apply_a(&p.a, &x);
        let rd = &p.c - apply_at(&p.a, &y, n) - &z;
        let mu = inner(&x, &z) / n as f64;
        let pobj = inner(&p.c, &x);
        let dobj = p.b.dot(&y);
        let pres = rp.norm() / (1.0 + norm_b);
        let dres = rd.norm() / (1.0 + norm_c);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        last = (pres, dres, gap);

        if pres <= opts.feas_tol && dres <= opts.feas_tol && gap <= opts.gap_tol {
            return Ok(IpmSolution {
                status: IpmStatus::Optimal,
                x,
                y,
                z,
                primal_obj: pobj,
                dual_obj: dobj,
                iterations: iter,
                primal_res: pres,
                dual_res: dres,
            });
        }
        // Farkas certificate: bᵀy > 0 with Aᵀy ⪯ 0 up to a vanishing residual
        if dobj > 0.0 && (&p.c - &rd).norm() / dobj < opts.infeas_tol {
            return Ok(IpmSolution {
                status: IpmStatus::PrimalInfeasible,
                x,
                y,
                z,
                primal_obj: pobj,
                dual_obj: dobj,
                iterations: iter,
                primal_res: pres,
                dual_res: dres,
            });
        }

        let zinv = match z.clone().try_inverse() {
            Some(zi) => sym(&zi),
            None => break,
        };
        let g: Vec<DMatrix<f64>> = p.a.iter().map(|aj| &x * aj * &zinv).collect();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                schur[(i, j)] = p.a[i].component_mul(&g[j].transpose()).sum();
            }
        }
        let x_rd_zinv = &x * &rd * &zinv;

        let direction = |sigma_mu: f64, corr: Option<&DMatrix<f64>>| -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
            let mut target = &zinv * sigma_mu - &x;
            if let Some(c) = corr {
                target -= c;
            }
            let rhs = &rp - apply_a(&p.a, &target) + apply_a(&p.a, &x_rd_zinv);
            let dy = solve_schur(schur.clone(), &rhs)?;
            let dz = &rd - apply_at(&p.a, &dy, n);
            let dx = sym(&(target - &x * &dz * &zinv));
            Some((dx, dy, dz))
        };

        let Some((dxa, _, dza)) = direction(0.0, None) else {
            break;
        };
        let ap = step_length(&x, &dxa, 1.0);
        let ad = step_length(&z, &dza, 1.0);
        let mu_aff = inner(&(&x + &dxa * ap), &(&z + &dza * ad)) / n as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let corr = &dxa * &dza * &zinv;
        let Some((dx, dy, dz)) = direction(sigma * mu, Some(&corr)) else {
            break;
        };
        let ap = step_length(&x, &dx, 0.95);
        let ad = step_length(&z, &dz, 0.95);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        x = sym(&(&x + &dx * ap));
        y += &dy * ad;
        z = sym(&(&z + &dz * ad));
    }
    Err(Error::SdpNonConverged {
        iterations: opts.max_iter,
        primal: last.0,
        dual: last.1,
        gap: last.2,
    })
}
