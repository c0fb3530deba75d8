//! Core types: data matrices, precision and partial-correlation matrices,
//! edge sets, and the exact identities tying precision entries to node-wise
//! regressions.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance used for symmetry checks on precision and partial-correlation
/// matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Per-column location and scale removed by [`standardize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

/// An n × p block of observations with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
    standardized: bool,
    scaling: Option<Vec<ColumnScale>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 || p < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 observations and 2 variables, got {n} x {p}"
            )));
        }
        if names.len() != p {
            return Err(Error::InvalidData(format!(
                "{} column names for {p} columns",
                names.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column `{}`",
                k % n + 1,
                names[k / n]
            )));
        }
        Ok(Self {
            values,
            names,
            standardized: false,
            scaling: None,
        })
    }

    /// Columns named `X1..Xp`.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("X{j}")).collect();
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Location/scale removed by the last standardization, if any.
    pub fn scaling(&self) -> Option<&[ColumnScale]> {
        self.scaling.as_deref()
    }

    /// Undo [`standardize`], returning data on the original scale.
    pub fn destandardize(&self) -> Option<DataMatrix> {
        let scaling = self.scaling.as_ref()?;
        let mut values = self.values.clone();
        for (j, s) in scaling.iter().enumerate() {
            values.column_mut(j).apply(|v| *v = *v * s.sd + s.mean);
        }
        Some(DataMatrix {
            values,
            names: self.names.clone(),
            standardized: false,
            scaling: None,
        })
    }

    /// Sample covariance with the 1/n (maximum-likelihood) normalization.
    pub fn ml_covariance(&self) -> DMatrix<f64> {
        let n = self.n() as f64;
        let means = self.values.row_mean();
        let mut centered = self.values.clone();
        for mut row in centered.row_iter_mut() {
            row -= &means;
        }
        let mut cov = centered.transpose() * &centered / n;
        linalg::symmetrize(&mut cov);
        cov
    }
}

/// Centers every column and scales it to unit sample SD (n − 1 denominator).
pub fn standardize(data: &DataMatrix) -> Result<DataMatrix> {
    let n = data.n();
    let mut values = data.values.clone();
    let mut scaling = Vec::with_capacity(data.p());
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.mean();
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if !(sd > 0.0) || sd <= f64::EPSILON * mean.abs() {
            return Err(Error::DegenerateColumn {
                column: data.names[j].clone(),
            });
        }
        col.apply(|v| *v = (*v - mean) / sd);
        scaling.push(ColumnScale { mean, sd });
    }
    Ok(DataMatrix {
        values,
        names: data.names.clone(),
        standardized: true,
        scaling: Some(scaling),
    })
}

/// A symmetric p × p precision matrix Ω with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix(DMatrix<f64>);

impl PrecisionMatrix {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() {
            return Err(Error::InvalidPrecision(format!(
                "matrix is {} x {}, expected square",
                omega.nrows(),
                omega.ncols()
            )));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPrecision("non-finite entry".into()));
        }
        let asym = linalg::max_asymmetry(&omega);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidPrecision(format!(
                "asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:e}"
            )));
        }
        if let Some(i) = (0..omega.nrows()).find(|&i| !(omega[(i, i)] > 0.0)) {
            return Err(Error::InvalidPrecision(format!(
                "diagonal entry {} is {} (must be positive)",
                i + 1,
                omega[(i, i)]
            )));
        }
        Ok(Self(omega))
    }

    /// For matrices read from files: averages away last-digit asymmetry first.
    pub fn from_external(mut omega: DMatrix<f64>) -> Result<Self> {
        if omega.is_square() {
            linalg::symmetrize(&mut omega);
        }
        Self::new(omega)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.0)
    }
}

/// Partial correlations with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorrelationMatrix(DMatrix<f64>);

impl PartialCorrelationMatrix {
    pub fn new(mut rho: DMatrix<f64>) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::InvalidData("partial correlations must be square".into()));
        }
        let asym = linalg::max_asymmetry(&rho);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidData(format!(
                "partial correlation asymmetry {asym:.3e}"
            )));
        }
        linalg::symmetrize(&mut rho);
        for i in 0..rho.nrows() {
            rho[(i, i)] = 1.0;
        }
        if let Some(v) = rho.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidData(format!(
                "partial correlation {v} outside [-1, 1]"
            )));
        }
        Ok(Self(rho))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Undirected edges over nodes `0..p`, stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_pairs(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::empty(p);
        for (i, j) in pairs {
            set.insert(i, j)?;
        }
        Ok(set)
    }

    /// Edges where `|m_ij| > tol` for `i < j`.
    pub fn from_pattern(m: &DMatrix<f64>, tol: f64) -> Self {
        let p = m.nrows();
        let mut edges = BTreeSet::new();
        for i in 0..p {
            for j in (i + 1)..p {
                if m[(i, j)].abs() > tol {
                    edges.insert((i, j));
                }
            }
        }
        Self { p, edges }
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j || i >= self.p || j >= self.p {
            return Err(Error::InvalidParameter(format!(
                "edge ({i}, {j}) invalid for p = {}",
                self.p
            )));
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn max_edges(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.p];
        for (i, j) in self.iter() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn complement(&self) -> Self {
        let mut edges = BTreeSet::new();
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                if !self.edges.contains(&(i, j)) {
                    edges.insert((i, j));
                }
            }
        }
        Self { p: self.p, edges }
    }

    /// Relabels node `k` as `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let edges = self
            .iter()
            .map(|(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j])))
            .collect();
        Self { p: self.p, edges }
    }
}

/// `ρ_ij = −ω_ij / √(ω_ii ω_jj)` off the diagonal, 1 on it.
pub fn precision_to_pcor(omega: &PrecisionMatrix) -> Result<PartialCorrelationMatrix> {
    let m = omega.matrix();
    let p = m.nrows();
    let d: Vec<f64> = (0..p).map(|i| m[(i, i)]).collect();
    if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidPrecision(format!(
            "diagonal entry {} is not positive",
            i + 1
        )));
    }
    let rho = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -m[(i, j)] / (d[i] * d[j]).sqrt()
        }
    });
    PartialCorrelationMatrix::new(rho)
        .map_err(|_| Error::InvalidPrecision("precision matrix is not positive definite".into()))
}

/// Regression of node `i` on the others implied by a precision matrix:
/// coefficients `β_j = −ω_ij / ω_ii` (j ≠ i, in column order) and residual
/// variance `1 / ω_ii`.
pub fn regression_identity(omega: &PrecisionMatrix, i: usize) -> Result<(DVector<f64>, f64)> {
    let m = omega.matrix();
    let p = m.nrows();
    if i >= p {
        return Err(Error::InvalidParameter(format!("node {i} out of range for p = {p}")));
    }
    m.clone().cholesky().ok_or(Error::Singular)?;
    let wii = m[(i, i)];
    let beta = DVector::from_iterator(
        p - 1,
        (0..p).filter(|&j| j != i).map(|j| -m[(i, j)] / wii),
    );
    Ok((beta, 1.0 / wii))
}

/// Sum of log eigenvalues of a symmetric matrix. Eigenvalues at or below
/// `p · ε · λ_max` count as zero, so numerically rank-deficient matrices are
/// rejected.
pub fn log_det(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidParameter("log_det needs a square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let ev = linalg::sym_eigenvalues(m);
    let lmax = ev[ev.len() - 1];
    let floor = lmax.abs() * m.nrows() as f64 * f64::EPSILON;
    if !(ev[0] > floor) {
        return Err(Error::Singular);
    }
    Ok(ev.iter().map(|l| l.ln()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_small_column() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 0.0, 2.0]);
        let s = standardize(&DataMatrix::unnamed(x.clone()).unwrap()).unwrap();
        assert!(s.is_standardized());
        let c0: Vec<f64> = s.values().column(0).iter().copied().collect();
        for (a, b) in c0.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let back = s.destandardize().unwrap();
        assert!((back.values() - &x).abs().max() < 1e-12);
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64).sin() * 4.0 + j as f64);
        let once = standardize(&DataMatrix::unnamed(x).unwrap()).unwrap();
        let twice = standardize(&once).unwrap();
        assert!((once.values() - twice.values()).abs().max() < 1e-12);
        for col in twice.values().column_iter() {
            assert!(col.mean().abs() < 1e-10);
            assert!((col.variance() * 7.0 / 6.0 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_column_is_degenerate() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        let data = DataMatrix::new(x, vec!["a".into(), "flat".into()]).unwrap();
        match standardize(&data) {
            Err(Error::DegenerateColumn { column }) => assert_eq!(column, "flat"),
            other => panic!("expected degenerate column, got {other:?}"),
        }
    }

    #[test]
    fn rejects_tiny_or_non_finite_data() {
        assert!(DataMatrix::unnamed(DMatrix::zeros(1, 3)).is_err());
        let mut x = DMatrix::zeros(3, 2);
        x[(1, 1)] = f64::NAN;
        assert!(DataMatrix::unnamed(x).is_err());
    }

    #[test]
    fn pcor_examples() {
        let o = PrecisionMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        assert_eq!(precision_to_pcor(&o).unwrap().get(0, 1), -0.5);
        let o = PrecisionMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])).unwrap();
        assert_eq!(precision_to_pcor(&o).unwrap().get(1, 0), 0.5);
        let o = PrecisionMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0])))
            .unwrap();
        assert_eq!(precision_to_pcor(&o).unwrap().matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn non_positive_diagonal_is_invalid_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 1.0]);
        assert!(matches!(PrecisionMatrix::new(m), Err(Error::InvalidPrecision(_))));
    }

    #[test]
    fn external_matrices_are_symmetrized() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3 + 1e-9, 1.0]);
        assert!(PrecisionMatrix::new(m.clone()).is_err());
        let o = PrecisionMatrix::from_external(m).unwrap();
        assert_eq!(o.matrix()[(0, 1)], o.matrix()[(1, 0)]);
    }

    #[test]
    fn regression_identity_examples() {
        let (beta, v) = regression_identity(&PrecisionMatrix::new(DMatrix::identity(4, 4)).unwrap(), 2)
            .unwrap();
        assert!(beta.iter().all(|b| *b == 0.0));
        assert_eq!(v, 1.0);
        let o = PrecisionMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let (beta, v) = regression_identity(&o, 0).unwrap();
        assert_eq!(beta.as_slice(), &[-0.5]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn regression_identity_rejects_singular() {
        let o = PrecisionMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(regression_identity(&o, 0), Err(Error::Singular)));
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(log_det(&DMatrix::identity(5, 5)).unwrap(), 0.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((log_det(&d).unwrap() - 6f64.ln()).abs() < 1e-14);
        // n = 3 observations of p = 5 variables: rank ≤ 2.
        let x = DMatrix::from_fn(3, 5, |i, j| ((i + 1) as f64 * (j as f64 + 0.5)).cos());
        let cov = DataMatrix::unnamed(x).unwrap().ml_covariance();
        assert!(matches!(log_det(&cov), Err(Error::Singular)));
    }

    #[test]
    fn edge_set_basics() {
        let mut e = EdgeSet::empty(4);
        assert!(e.insert(2, 1).unwrap());
        assert!(!e.insert(1, 2).unwrap());
        assert!(e.contains(2, 1));
        assert!(e.insert(3, 3).is_err());
        assert_eq!(e.complement().len(), 5);
        assert_eq!(e.max_edges(), 6);
    }
}
