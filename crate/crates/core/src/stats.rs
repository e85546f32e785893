//! (y,z)-correlation, fairness disparities and the tradeoff bound diagnostics.

use serde::{Deserialize, Serialize};

use crate::dataset::JointRatios;
use crate::error::{Error, Result};

/// Correlation summary of a (y,z) ratio table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    pub c: f64,
    pub marg_y: f64,
    pub marg_z: f64,
    pub eta_low: f64,
    pub eta_high: f64,
}

fn check_marginals(r: &JointRatios) -> Result<(f64, f64)> {
    let (py, pz) = (r.py(), r.pz());
    if py <= 0.0 || py >= 1.0 || pz <= 0.0 || pz >= 1.0 {
        return Err(Error::DegenerateMarginal { py, pz });
    }
    Ok((py, pz))
}

/// Correlation constant c = Pr(y=1|z=1) − Pr(y=1|z=0).
pub fn correlation_constant(r: &JointRatios) -> Result<f64> {
    let pz = r.pz();
    if pz <= 0.0 || pz >= 1.0 {
        return Err(Error::DegenerateMarginal { py: r.py(), pz });
    }
    Ok(r.w11 / (r.w11 + r.w01) - r.w10 / (r.w10 + r.w00))
}

/// Correlation report with a point η band (no marginal slack).
pub fn correlation(r: &JointRatios) -> Result<CorrelationReport> {
    correlation_with_slack(r, 0.0, 0.0)
}

/// Correlation report whose η band allows the marginals to drift by γ_y and γ_z.
pub fn correlation_with_slack(r: &JointRatios, gamma_y: f64, gamma_z: f64) -> Result<CorrelationReport> {
    let (py, pz) = check_marginals(r)?;
    let rho = (r.w11 * r.w00 - r.w10 * r.w01) / (py * (1.0 - py) * pz * (1.0 - pz)).sqrt();
    let c = correlation_constant(r)?;
    let (eta_low, eta_high) = eta_band(py, pz, gamma_y, gamma_z)?;
    Ok(CorrelationReport {
        rho: rho.clamp(-1.0, 1.0),
        c,
        marg_y: py,
        marg_z: pz,
        eta_low,
        eta_high,
    })
}

fn eta_band(py: f64, pz: f64, gy: f64, gz: f64) -> Result<(f64, f64)> {
    let imaginary = || Error::ImaginaryEta { gamma_y: gy, gamma_z: gz };
    let lo_den = pz + gz - (pz - gz).powi(2);
    let hi_den = pz - gz - (pz + gz).powi(2);
    if lo_den <= 0.0 || hi_den <= 0.0 {
        return Err(imaginary());
    }
    let lo_num = (py - gy - (py + gy).powi(2)).max(0.0);
    let hi_num = (py + gy - (py - gy).powi(2)).max(0.0);
    let (lo, hi) = ((lo_num / lo_den).sqrt(), (hi_num / hi_den).sqrt());
    if lo > hi {
        return Err(imaginary());
    }
    Ok((lo, hi))
}

/// |ρ(d1) − ρ(d2)|.
pub fn correlation_shift(d1: &JointRatios, d2: &JointRatios) -> Result<f64> {
    Ok((correlation(d1)?.rho - correlation(d2)?.rho).abs())
}

/// Pr(y=1|z=1) + Pr(y=0|z=0), equal to 1 + c.
pub fn alignment(r: &JointRatios) -> Result<f64> {
    let c = correlation_constant(r)?;
    let direct = r.w11 / r.pz() + r.w00 / (1.0 - r.pz());
    debug_assert!((direct - (1.0 + c)).abs() < 1e-12);
    Ok(1.0 + c)
}

/// Group disparities of a prediction vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub dp: f64,
    pub eo: f64,
    pub pp_pairwise: f64,
    pub combined: f64,
    pub dp_pairwise: f64,
    pub eo_pairwise: f64,
    /// (y,z) cells absent from the evaluation set, skipped in the EO terms.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eo_skipped: Vec<(u8, u8)>,
}

/// Counts over (y, z, ŷ).
#[derive(Debug, Clone, Copy, Default)]
struct Table {
    // n[y][z][yhat]
    n: [[[f64; 2]; 2]; 2],
}

impl Table {
    fn build(y: &[u8], z: &[u8], yhat: &[u8]) -> Result<Self> {
        if y.len() != z.len() || y.len() != yhat.len() {
            return Err(Error::Shape(format!(
                "lengths y={}, z={}, yhat={}",
                y.len(),
                z.len(),
                yhat.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut t = Table::default();
        for i in 0..y.len() {
            if y[i] > 1 || z[i] > 1 || yhat[i] > 1 {
                return Err(Error::InvalidValue {
                    row: i,
                    message: "values must be 0 or 1".into(),
                });
            }
            t.n[y[i] as usize][z[i] as usize][yhat[i] as usize] += 1.0;
        }
        let g1 = t.group(1);
        let g0 = t.group(0);
        if g1 == 0.0 {
            return Err(Error::SingleGroup(0));
        }
        if g0 == 0.0 {
            return Err(Error::SingleGroup(1));
        }
        Ok(t)
    }

    fn total(&self) -> f64 {
        self.group(0) + self.group(1)
    }

    fn group(&self, z: usize) -> f64 {
        (0..2).map(|y| self.cell(y, z)).sum()
    }

    fn cell(&self, y: usize, z: usize) -> f64 {
        self.n[y][z][0] + self.n[y][z][1]
    }

    /// Pr(ŷ=v | z).
    fn pred_given_z(&self, v: usize, z: usize) -> f64 {
        (self.n[0][z][v] + self.n[1][z][v]) / self.group(z)
    }

    /// Pr(ŷ=v).
    fn pred(&self, v: usize) -> f64 {
        (0..2).map(|z| self.n[0][z][v] + self.n[1][z][v]).sum::<f64>() / self.total()
    }

    /// Pr(ŷ=v | y, z), None for an empty cell.
    fn pred_given_cell(&self, v: usize, y: usize, z: usize) -> Option<f64> {
        let c = self.cell(y, z);
        (c > 0.0).then(|| self.n[y][z][v] / c)
    }

    /// Pr(ŷ=v | y), None when label y is absent.
    fn pred_given_y(&self, v: usize, y: usize) -> Option<f64> {
        let c = self.cell(y, 0) + self.cell(y, 1);
        (c > 0.0).then(|| (self.n[y][0][v] + self.n[y][1][v]) / c)
    }

    /// Pr(y=v | ŷ=v, z), None when nothing in group z is predicted v.
    fn label_given_pred(&self, v: usize, z: usize) -> Option<f64> {
        let d = self.n[0][z][v] + self.n[1][z][v];
        (d > 0.0).then(|| self.n[v][z][v] / d)
    }

    /// Pr(y=v | z).
    fn label_given_z(&self, v: usize, z: usize) -> f64 {
        self.cell(v, z) / self.group(z)
    }

    fn require_cells(&self) -> Result<()> {
        for y in 0..2 {
            for z in 0..2 {
                if self.cell(y, z) == 0.0 {
                    return Err(Error::EmptyCell { y: y as u8, z: z as u8 });
                }
            }
        }
        Ok(())
    }
}

/// DP, EO and PP disparities, in group-vs-overall and group-vs-group forms.
pub fn disparities(y: &[u8], z: &[u8], yhat: &[u8]) -> Result<DisparityReport> {
    let t = Table::build(y, z, yhat)?;
    let overall = t.pred(1);
    let r1 = t.pred_given_z(1, 1);
    let r0 = t.pred_given_z(1, 0);
    let dp = (r1 - overall).abs().max((r0 - overall).abs());
    let dp_pairwise = (r1 - r0).abs();

    let mut eo: f64 = 0.0;
    let mut eo_pairwise: f64 = 0.0;
    let mut eo_skipped = Vec::new();
    for v in 0..2 {
        let per_group: Vec<Option<f64>> = (0..2).map(|g| t.pred_given_cell(v, v, g)).collect();
        for (g, group_rate) in per_group.iter().enumerate() {
            match (*group_rate, t.pred_given_y(v, v)) {
                (Some(a), Some(b)) => eo = eo.max((a - b).abs()),
                _ => eo_skipped.push((v as u8, g as u8)),
            }
        }
        if let (Some(a), Some(b)) = (per_group[1], per_group[0]) {
            eo_pairwise = eo_pairwise.max((a - b).abs());
        }
    }

    let mut pp_pairwise: f64 = 0.0;
    for v in 0..2 {
        if let (Some(a), Some(b)) = (t.label_given_pred(v, 1), t.label_given_pred(v, 0)) {
            pp_pairwise = pp_pairwise.max((a - b).abs());
        }
    }

    Ok(DisparityReport {
        dp,
        eo,
        pp_pairwise,
        combined: dp.max(eo),
        dp_pairwise,
        eo_pairwise,
        eo_skipped,
    })
}

/// Left-hand side of the ε-DP & ε-EO tradeoff bound; at most 2·max(dp_pairwise, eo_pairwise).
pub fn dpeo_bound_lhs(y: &[u8], z: &[u8], yhat: &[u8]) -> Result<f64> {
    let t = Table::build(y, z, yhat)?;
    t.require_cells()?;
    let mut best: f64 = 0.0;
    for v in 0..2 {
        let w = 1 - v;
        for g in 0..2 {
            let h = 1 - g;
            let label_gap = (t.label_given_z(v, g) - t.label_given_z(v, h)).abs();
            let pred_gap = (t.pred_given_cell(v, v, g).unwrap() - t.pred_given_cell(v, w, g).unwrap()).abs();
            best = best.max(label_gap * pred_gap);
        }
    }
    Ok(best)
}

/// Left-hand side of the ε-PP & ε-DP tradeoff bound; at most max(pp_pairwise, dp_pairwise).
pub fn ppdp_bound_lhs(y: &[u8], z: &[u8], yhat: &[u8]) -> Result<f64> {
    let t = Table::build(y, z, yhat)?;
    let mut best: f64 = 0.0;
    for v in 0..2 {
        if t.pred(v) == 0.0 {
            // ŷ=v never occurs: both joint terms vanish
            continue;
        }
        for g in 0..2 {
            let h = 1 - g;
            let pp_g = t.label_given_pred(v, g).ok_or(Error::UndefinedPp { yhat: v as u8, z: g as u8 })?;
            let pp_h = t.label_given_pred(v, h).ok_or(Error::UndefinedPp { yhat: v as u8, z: h as u8 })?;
            let joint_g = t.n[v][g][v] / t.group(g);
            let joint_h = t.n[v][h][v] / t.group(h);
            let den = 2.0 * pp_g + t.pred_given_z(v, g) + pp_h;
            best = best.max((joint_g - joint_h).abs() / den);
        }
    }
    Ok(best)
}

/// Left-hand side of the ε-EO & ε-PP tradeoff bound; at most max(eo_pairwise, pp_pairwise).
pub fn eopp_bound_lhs(y: &[u8], z: &[u8], yhat: &[u8]) -> Result<f64> {
    let t = Table::build(y, z, yhat)?;
    t.require_cells()?;
    let n = t.total();
    let mut best: f64 = 0.0;
    for v in 0..2 {
        let p_label = (t.cell(v, 0) + t.cell(v, 1)) / n;
        let p_pred = t.pred(v);
        for g in 0..2 {
            let h = 1 - g;
            let pred_h = t.pred_given_z(v, h);
            if pred_h == 0.0 {
                return Err(Error::UndefinedPp { yhat: v as u8, z: h as u8 });
            }
            let tpr_h = t.pred_given_cell(v, v, h).unwrap();
            let joint_pred_g = (t.n[0][g][v] + t.n[1][g][v]) / n;
            let joint_label_g = t.cell(v, g) / n;
            let factor = tpr_h / (joint_pred_g + joint_label_g);
            let inner = (p_label - t.label_given_z(v, h) * p_pred / pred_h).abs();
            best = best.max(factor * inner);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jr(a: [f64; 4]) -> JointRatios {
        JointRatios::from_array(a).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let r = correlation(&jr([0.5, 0.0, 0.0, 0.5])).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12 && (r.c - 1.0).abs() < 1e-12);
        let r = correlation(&jr([0.25; 4])).unwrap();
        assert!(r.rho.abs() < 1e-12 && r.c.abs() < 1e-12);
        let r = correlation(&jr([0.3, 0.2, 0.2, 0.3])).unwrap();
        assert!((r.rho - 0.2).abs() < 1e-12 && (r.c - 0.2).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_materialization() {
        // 10 rows: 3×(1,1), 2×(1,0), 2×(0,1), 3×(0,0)
        let ys = [1., 1., 1., 1., 1., 0., 0., 0., 0., 0.];
        let zs = [1., 1., 1., 0., 0., 1., 1., 0., 0., 0.];
        let my = ys.iter().sum::<f64>() / 10.0;
        let mz = zs.iter().sum::<f64>() / 10.0;
        let cov: f64 = ys.iter().zip(&zs).map(|(a, b)| (a - my) * (b - mz)).sum();
        let vy: f64 = ys.iter().map(|a| (a - my).powi(2)).sum();
        let vz: f64 = zs.iter().map(|b| (b - mz).powi(2)).sum();
        let pearson = cov / (vy * vz).sqrt();
        let r = correlation(&jr([0.3, 0.2, 0.2, 0.3])).unwrap();
        assert!((pearson - r.rho).abs() < 1e-12);
    }

    #[test]
    fn degenerate_marginal() {
        let err = correlation(&jr([0.5, 0.5, 0.0, 0.0])).unwrap_err();
        assert_eq!(err.code(), "degenerate-marginal");
    }

    #[test]
    fn eta_band_ordering() {
        let r = correlation_with_slack(&jr([0.3, 0.2, 0.2, 0.3]), 0.1, 0.1).unwrap();
        assert!(r.eta_low <= r.eta_high);
        let point = correlation(&jr([0.3, 0.2, 0.2, 0.3])).unwrap();
        assert!((point.eta_low - point.eta_high).abs() < 1e-15);
        assert!(r.eta_low <= point.eta_low && point.eta_high <= r.eta_high);
        let err = correlation_with_slack(&jr([0.02, 0.48, 0.02, 0.48]), 0.1, 0.1).unwrap_err();
        assert_eq!(err.code(), "imaginary-eta");
    }

    #[test]
    fn shift_examples() {
        let a = jr([0.5, 0.0, 0.0, 0.5]);
        let b = jr([0.25; 4]);
        assert_eq!(correlation_shift(&a, &a).unwrap(), 0.0);
        assert!((correlation_shift(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_examples() {
        assert!((alignment(&jr([0.25; 4])).unwrap() - 1.0).abs() < 1e-12);
        assert!((alignment(&jr([0.5, 0.0, 0.0, 0.5])).unwrap() - 2.0).abs() < 1e-12);
        assert!((alignment(&jr([0.3, 0.2, 0.2, 0.3])).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn dp_ten_rows() {
        // group 1 rate 0.8, group 0 rate 0.4, five rows each
        let z = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let yhat = [1, 1, 1, 1, 0, 1, 1, 0, 0, 0];
        let y = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let d = disparities(&y, &z, &yhat).unwrap();
        assert!((d.dp - 0.2).abs() < 1e-12);
        assert!((d.dp_pairwise - 0.4).abs() < 1e-12);
        assert_eq!(d.combined, d.dp.max(d.eo));
    }

    #[test]
    fn constant_and_perfect_predictors() {
        let y = [1, 0, 1, 0, 1, 1];
        let z = [1, 1, 0, 0, 0, 1];
        let d = disparities(&y, &z, &[1; 6]).unwrap();
        assert_eq!(d.dp, 0.0);
        let d = disparities(&y, &z, &y).unwrap();
        assert_eq!(d.eo, 0.0);
        assert_eq!(d.pp_pairwise, 0.0);
        assert_eq!(dpeo_bound_lhs(&y, &z, &[1; 6]).unwrap(), 0.0);
    }

    #[test]
    fn single_group_rejected() {
        let err = disparities(&[1, 0], &[1, 1], &[1, 0]).unwrap_err();
        assert_eq!(err.code(), "single-group");
    }

    #[test]
    fn eo_skips_missing_cell() {
        let y = [1, 0, 1, 1];
        let z = [1, 1, 0, 0];
        let d = disparities(&y, &z, &[1, 0, 1, 0]).unwrap();
        assert_eq!(d.eo_skipped, vec![(0, 0)]);
        assert_eq!(dpeo_bound_lhs(&y, &z, &[1, 0, 1, 0]).unwrap_err().code(), "empty-cell");
    }

    #[test]
    fn unbiased_bounds_vanish() {
        // y ⊥ z with yhat = y, and with yhat ⊥ z
        let y = [1, 0, 1, 0, 1, 0, 1, 0];
        let z = [1, 1, 0, 0, 1, 1, 0, 0];
        assert_eq!(dpeo_bound_lhs(&y, &z, &[0, 1, 1, 1, 0, 0, 1, 0]).unwrap(), 0.0);
        assert!(ppdp_bound_lhs(&y, &z, &y).unwrap().abs() < 1e-15);
        assert!(eopp_bound_lhs(&y, &z, &y).unwrap().abs() < 1e-15);
        let yhat = [1, 0, 1, 0, 0, 1, 0, 1];
        assert!(eopp_bound_lhs(&y, &z, &yhat).unwrap().abs() < 1e-15);
        assert_eq!(ppdp_bound_lhs(&y, &z, &[1; 8]).unwrap(), 0.0);
        let one_sided = [1, 1, 0, 1, 1, 1, 1, 1];
        assert_eq!(ppdp_bound_lhs(&y, &z, &one_sided).unwrap_err().code(), "undefined-pp");
    }

    #[test]
    fn serializes_fixed_names() {
        let d = disparities(&[1, 0, 1, 0], &[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap();
        let v = serde_json::to_value(&d).unwrap();
        for key in ["dp", "eo", "pp_pairwise", "combined"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
