//! Matrix losses and edge-recovery scores.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{log_det, EdgeSet, PartialCorrelationMatrix, PrecisionMatrix};

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// `Ω⁻¹ Ω̂`, or `None` when the estimate is not positive definite.
fn relative_precision(truth: &PrecisionMatrix, est: &PrecisionMatrix) -> Result<Option<DMatrix<f64>>> {
    check_dims(truth.dim(), est.dim())?;
    let chol = truth.matrix().clone().cholesky().ok_or(Error::Singular)?;
    if est.matrix().clone().cholesky().is_none() {
        return Ok(None);
    }
    Ok(Some(chol.solve(est.matrix())))
}

/// `tr(Ω⁻¹Ω̂) − log|Ω⁻¹Ω̂| − p`. A non-PD estimate gives `+∞`.
pub fn kl_loss(truth: &PrecisionMatrix, est: &PrecisionMatrix) -> Result<f64> {
    let Some(m) = relative_precision(truth, est)? else {
        return Ok(f64::INFINITY);
    };
    let ld = match log_det(est.matrix()) {
        Ok(v) => v,
        Err(Error::Singular) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    let kl = m.trace() - (ld - log_det(truth.matrix())?) - truth.dim() as f64;
    Ok(kl.max(0.0))
}

/// `tr((Ω⁻¹Ω̂ − I)²)`, the trace of the matrix square. A non-PD estimate
/// gives `+∞`.
pub fn quadratic_loss(truth: &PrecisionMatrix, est: &PrecisionMatrix) -> Result<f64> {
    let Some(mut m) = relative_precision(truth, est)? else {
        return Ok(f64::INFINITY);
    };
    for i in 0..m.nrows() {
        m[(i, i)] -= 1.0;
    }
    Ok((&m * &m).trace().max(0.0))
}

/// Frobenius norm of `Ω − Ω̂`.
pub fn l2_loss(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<f64> {
    check_dims(truth.nrows(), est.nrows())?;
    check_dims(truth.ncols(), est.ncols())?;
    Ok((truth - est).norm())
}

/// Mean squared difference over the upper off-diagonal entries.
pub fn mse_pcor(truth: &PartialCorrelationMatrix, est: &PartialCorrelationMatrix) -> Result<f64> {
    check_dims(truth.dim(), est.dim())?;
    let p = truth.dim();
    let pairs = p * p.saturating_sub(1) / 2;
    if pairs == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            total += (truth.get(i, j) - est.get(i, j)).powi(2);
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub kl: f64,
    pub ql: f64,
    pub l2: f64,
    pub mse_pcor: f64,
    /// The estimate was not PD, so `kl` and `ql` hold `+∞`.
    pub non_pd: bool,
}

pub fn loss_report(
    truth: &PrecisionMatrix,
    est: &PrecisionMatrix,
    truth_pcor: &PartialCorrelationMatrix,
    est_pcor: &PartialCorrelationMatrix,
) -> Result<LossReport> {
    let kl = kl_loss(truth, est)?;
    let ql = quadratic_loss(truth, est)?;
    Ok(LossReport {
        kl,
        ql,
        l2: l2_loss(truth.matrix(), est.matrix())?,
        mse_pcor: mse_pcor(truth_pcor, est_pcor)?,
        non_pd: kl.is_infinite() || ql.is_infinite(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sp: f64,
    pub sn: f64,
    pub mcc: f64,
    pub f1: f64,
    /// A zero factor in the MCC denominator; `mcc` is then 0.
    pub mcc_undefined: bool,
}

impl EdgeMetrics {
    /// `1 − SP`.
    pub fn fpr(&self) -> f64 {
        1.0 - self.sp
    }
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts over all unordered pairs and the derived scores.
/// Undefined ratios (empty denominators) are reported as 1 for SP, SN and
/// F1, which is the value they take when nothing could be wrong.
pub fn edge_metrics(truth: &EdgeSet, est: &EdgeSet) -> Result<EdgeMetrics> {
    check_dims(truth.p(), est.p())?;
    let total = truth.max_edges();
    let tp = truth.iter().filter(|&(i, j)| est.contains(i, j)).count();
    let fp = est.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = total - tp - fp - fn_;
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    let mcc_undefined = factors.contains(&0);
    let mcc = if mcc_undefined {
        0.0
    } else {
        let den: f64 = factors.iter().map(|&f| f as f64).product::<f64>().sqrt();
        (tp as f64 * tn as f64 - fp as f64 * fn_ as f64) / den
    };
    Ok(EdgeMetrics {
        tp,
        fp,
        tn,
        fn_,
        sp: ratio(tn, tn + fp, 1.0),
        sn: ratio(tp, tp + fn_, 1.0),
        mcc,
        f1: ratio(2 * tp, 2 * tp + fp + fn_, 1.0),
        mcc_undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(m: DMatrix<f64>) -> PrecisionMatrix {
        PrecisionMatrix::new(m).unwrap()
    }

    #[test]
    fn losses_vanish_at_truth() {
        let o = pm(DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 1.5]));
        assert!(kl_loss(&o, &o).unwrap() <= 1e-10);
        assert!(quadratic_loss(&o, &o).unwrap() <= 1e-10);
        assert_eq!(l2_loss(o.matrix(), o.matrix()).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_closed_forms() {
        for p in 1..6 {
            let i = pm(DMatrix::identity(p, p));
            let two = pm(DMatrix::identity(p, p) * 2.0);
            let pf = p as f64;
            assert!((kl_loss(&i, &two).unwrap() - (2.0 * pf - pf * 2f64.ln() - pf)).abs() < 1e-10);
            assert!((quadratic_loss(&i, &two).unwrap() - pf).abs() < 1e-10);
        }
    }

    #[test]
    fn l2_and_mse_arithmetic() {
        let est = DMatrix::from_row_slice(2, 2, &[0.0, 0.6, 0.6, 0.0]);
        assert!((l2_loss(&DMatrix::zeros(2, 2), &est).unwrap() - 0.72f64.sqrt()).abs() < 1e-15);
        let t = PartialCorrelationMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let e = PartialCorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0])).unwrap();
        assert!((mse_pcor(&t, &e).unwrap() - 0.36).abs() < 1e-15);
    }

    #[test]
    fn non_pd_estimate_is_infinite() {
        let i = pm(DMatrix::identity(2, 2));
        let bad = pm(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert_eq!(kl_loss(&i, &bad).unwrap(), f64::INFINITY);
        assert_eq!(quadratic_loss(&i, &bad).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let a = pm(DMatrix::identity(2, 2));
        let b = pm(DMatrix::identity(3, 3));
        assert!(matches!(kl_loss(&a, &b), Err(Error::Dimension(_))));
        assert!(edge_metrics(&EdgeSet::empty(2), &EdgeSet::empty(3)).is_err());
    }

    #[test]
    fn hand_confusion_case() {
        let truth = EdgeSet::from_pairs(10, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let est = EdgeSet::from_pairs(10, [(0, 1), (1, 2), (2, 3), (6, 7), (8, 9)]).unwrap();
        let m = edge_metrics(&truth, &est).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (3, 2, 2, 38));
        assert!((m.sn - 0.6).abs() < 1e-15);
        assert!((m.sp - 0.95).abs() < 1e-15);
        assert!((m.f1 - 0.6).abs() < 1e-15);
        assert!((m.mcc - 0.55).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_complement() {
        let truth = EdgeSet::from_pairs(4, [(0, 1), (2, 3)]).unwrap();
        let m = edge_metrics(&truth, &truth).unwrap();
        assert_eq!((m.sp, m.sn, m.f1, m.mcc), (1.0, 1.0, 1.0, 1.0));
        let c = edge_metrics(&truth, &truth.complement()).unwrap();
        assert!((c.mcc + 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_estimate_flags_mcc() {
        let truth = EdgeSet::from_pairs(10, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let m = edge_metrics(&truth, &EdgeSet::empty(10)).unwrap();
        assert_eq!((m.sn, m.sp), (0.0, 1.0));
        assert!(m.mcc_undefined);
        assert_eq!(m.mcc, 0.0);
    }
}
