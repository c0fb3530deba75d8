//! Turning p node-wise selections into one graph: or-rule symmetrization,
//! partial correlations from the coefficient matrix, precision
//! reconstruction from projected residual variances, and a positive-definite
//! correction that keeps the estimated sparsity pattern.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DataMatrix, EdgeSet, PartialCorrelationMatrix, PrecisionMatrix};

/// Coefficients below this magnitude after a forced re-projection count as zero.
pub const NUMERICAL_ZERO: f64 = 1e-12;

/// Residual variances below this abort precision reconstruction.
pub const MIN_RESIDUAL_VARIANCE: f64 = 1e-12;

/// Row `i` holds node `i`'s projected coefficients on every other node
/// (zero when excluded); the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    lambda: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn new(mut lambda: DMatrix<f64>) -> Result<Self> {
        if !lambda.is_square() {
            return Err(Error::InvalidParameter("coefficient matrix must be square".into()));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite coefficient".into()));
        }
        lambda.fill_diagonal(0.0);
        Ok(Self { lambda })
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambda[(i, j)]
    }

    /// Pairs `(i, j)`, `i < j`, where exactly one of `Λ_ij`, `Λ_ji` is nonzero.
    pub fn asymmetric_pairs(&self) -> Vec<(usize, usize)> {
        let p = self.dim();
        let mut out = Vec::new();
        for i in 0..p {
            for j in (i + 1)..p {
                if (self.lambda[(i, j)] != 0.0) != (self.lambda[(j, i)] != 0.0) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// For each node, the variables that must be forced into its support to
    /// restore a symmetric nonzero pattern.
    pub fn forced_variables(&self) -> Vec<Vec<usize>> {
        let mut forced = vec![Vec::new(); self.dim()];
        for (i, j) in self.asymmetric_pairs() {
            if self.lambda[(i, j)] == 0.0 {
                forced[i].push(j);
            } else {
                forced[j].push(i);
            }
        }
        forced
    }

    pub fn has_symmetric_pattern(&self) -> bool {
        self.asymmetric_pairs().is_empty()
    }
}

/// What the or-rule had to do.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrRuleReport {
    pub asymmetric_pairs: usize,
    pub reprojected_nodes: Vec<usize>,
    /// Pairs whose forced coefficient came back numerically zero and were
    /// dropped from both rows.
    pub dropped_pairs: Vec<(usize, usize)>,
}

/// Or-rule: an edge is kept if either regression selected it. Every node
/// whose row misses a partner's nonzero entry is re-projected once with all
/// of its missing partners forced in. `reproject(i, forced)` must return the
/// full new row `i` (length p, diagonal ignored).
pub fn or_rule_symmetrize<F>(
    lambda: &CoefficientMatrix,
    reproject: F,
) -> Result<(CoefficientMatrix, OrRuleReport)>
where
    F: Fn(usize, &[usize]) -> Result<Vec<f64>> + Sync,
{
    let p = lambda.dim();
    let forced = lambda.forced_variables();
    let asymmetric_pairs = lambda.asymmetric_pairs().len();
    let jobs: Vec<usize> = (0..p).filter(|&i| !forced[i].is_empty()).collect();

    let rows: Vec<(usize, Vec<f64>)> = jobs
        .par_iter()
        .map(|&i| {
            let row = reproject(i, &forced[i]).map_err(|e| e.at_node(i))?;
            if row.len() != p {
                return Err(Error::InvalidParameter(format!(
                    "re-projection of node {i} returned {} entries, expected {p}",
                    row.len()
                )));
            }
            Ok((i, row))
        })
        .collect::<Result<_>>()?;

    let mut out = lambda.lambda.clone();
    for (i, row) in rows {
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = if j == i { 0.0 } else { v };
        }
    }

    let mut dropped_pairs = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            let (a, b) = (out[(i, j)], out[(j, i)]);
            if (a != 0.0 || b != 0.0) && (a.abs() < NUMERICAL_ZERO || b.abs() < NUMERICAL_ZERO) {
                log::warn!("or-rule: forced coefficient for pair ({i}, {j}) is numerically zero; dropping");
                out[(i, j)] = 0.0;
                out[(j, i)] = 0.0;
                dropped_pairs.push((i, j));
            }
        }
    }

    Ok((
        CoefficientMatrix::new(out)?,
        OrRuleReport {
            asymmetric_pairs,
            reprojected_nodes: jobs,
            dropped_pairs,
        },
    ))
}

/// `ρ̂_ij = sign(Λ_ij) · min{1, √(Λ_ij Λ_ji)}` when both entries share a
/// sign, and 0 otherwise.
pub fn pcor_from_lambda(lambda: &CoefficientMatrix) -> PartialCorrelationMatrix {
    let p = lambda.dim();
    let m = lambda.matrix();
    let mut rho = DMatrix::identity(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            let same_sign = (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0);
            let v = if same_sign {
                a.signum() * (a * b).sqrt().min(1.0)
            } else {
                0.0
            };
            rho[(i, j)] = v;
            rho[(j, i)] = v;
        }
    }
    PartialCorrelationMatrix::new(rho).expect("bounded and symmetric by construction")
}

/// How the two node-wise estimates of an off-diagonal precision entry are
/// combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionSymmetrization {
    /// `Ω̂_ij = −½ (Λ_ij / v_i + Λ_ji / v_j)`.
    #[default]
    Average,
    /// Keep whichever of `−Λ_ij / v_i`, `−Λ_ji / v_j` is smaller in magnitude.
    Min,
}

/// Residual variances `v_i = (1/n) ‖r_i − r̄_i‖²` with
/// `r_i = X_i − Σ_j Λ_ij X_j`.
pub fn residual_variances(lambda: &CoefficientMatrix, data: &DataMatrix) -> Result<Vec<f64>> {
    let p = lambda.dim();
    if data.p() != p {
        return Err(Error::InvalidParameter(format!(
            "coefficient matrix is {p} x {p} but data has {} columns",
            data.p()
        )));
    }
    let x = data.values();
    let n = x.nrows() as f64;
    // Column i of R = X − X Λᵀ is the residual of node i.
    let resid = x - x * lambda.matrix().transpose();
    (0..p)
        .map(|i| {
            let col = resid.column(i);
            let mean = col.mean();
            let v = col.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            if v < MIN_RESIDUAL_VARIANCE {
                Err(Error::DegenerateResidual { node: i })
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Precision matrix from the coefficient matrix and the projected residual
/// variances. Returns the matrix together with the residual variances.
pub fn precision_from_lambda(
    lambda: &CoefficientMatrix,
    data: &DataMatrix,
    rule: PrecisionSymmetrization,
) -> Result<(PrecisionMatrix, Vec<f64>)> {
    let var = residual_variances(lambda, data)?;
    let p = lambda.dim();
    let m = lambda.matrix();
    let mut omega = DMatrix::zeros(p, p);
    for i in 0..p {
        omega[(i, i)] = 1.0 / var[i];
        for j in (i + 1)..p {
            let from_i = -m[(i, j)] / var[i];
            let from_j = -m[(j, i)] / var[j];
            let v = match rule {
                PrecisionSymmetrization::Average => 0.5 * (from_i + from_j),
                PrecisionSymmetrization::Min => {
                    if from_i.abs() <= from_j.abs() {
                        from_i
                    } else {
                        from_j
                    }
                }
            };
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    Ok((PrecisionMatrix::new(omega)?, var))
}

/// Outcome of [`nearest_pd_fixed_pattern`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PdReport {
    pub corrected: bool,
    pub iterations: usize,
    pub min_eig_before: f64,
    pub min_eig_after: f64,
}

fn restore_pattern(m: &mut DMatrix<f64>, edges: &EdgeSet) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            if edges.contains(i, j) {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            } else {
                m[(i, j)] = 0.0;
                m[(j, i)] = 0.0;
            }
        }
    }
}

/// Alternating projections between the eigenvalue floor and the matrices
/// supported on `edges` (plus the diagonal). Off-edge entries of the input
/// are zeroed first. Eigenvalues are clamped at `2·eps` so the pattern-side
/// iterate clears `eps` after finitely many steps.
pub fn nearest_pd_fixed_pattern(
    omega: &DMatrix<f64>,
    edges: &EdgeSet,
    eps: f64,
    max_iter: usize,
) -> Result<(PrecisionMatrix, PdReport)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if edges.p() != omega.nrows() || !omega.is_square() {
        return Err(Error::InvalidParameter("edge set and matrix dimensions differ".into()));
    }
    let mut x = omega.clone();
    restore_pattern(&mut x, edges);
    let before = linalg::min_eigenvalue(&x);
    let mut report = PdReport {
        corrected: false,
        iterations: 0,
        min_eig_before: before,
        min_eig_after: before,
    };
    let floor = 2.0 * eps;
    let mut current = before;
    while current < eps {
        if report.iterations == max_iter {
            report.min_eig_after = current;
            return Err(Error::PdNonConvergence { report });
        }
        report.iterations += 1;
        report.corrected = true;
        let eig = SymmetricEigen::new(x.clone());
        let clamped = eig.eigenvalues.map(|l| l.max(floor));
        x = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        restore_pattern(&mut x, edges);
        current = linalg::min_eigenvalue(&x);
    }
    report.min_eig_after = current;
    Ok((PrecisionMatrix::new(x)?, report))
}

/// Final estimate assembled from node-wise selections.
#[derive(Debug, Clone)]
pub struct EstimatedGraph {
    pub edges: EdgeSet,
    pub pcor: PartialCorrelationMatrix,
    pub omega_hat: PrecisionMatrix,
    pub pd_report: PdReport,
    pub resid_var: Vec<f64>,
}

/// Knobs for [`assemble`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub symmetrization: PrecisionSymmetrization,
    pub eps_pd: f64,
    pub max_pd_iter: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            symmetrization: PrecisionSymmetrization::Average,
            eps_pd: 1e-6,
            max_pd_iter: 200,
        }
    }
}

/// Partial correlations, edge set, precision reconstruction and PD
/// correction from a symmetric-pattern coefficient matrix. The edge set is
/// the nonzero pattern of the partial correlations; precision entries off
/// that set are zeroed.
pub fn assemble(
    lambda: &CoefficientMatrix,
    data: &DataMatrix,
    config: &AssemblyConfig,
) -> Result<EstimatedGraph> {
    let pcor = pcor_from_lambda(lambda);
    let edges = EdgeSet::from_pattern(pcor.matrix(), 0.0);
    let (omega, resid_var) = precision_from_lambda(lambda, data, config.symmetrization)?;
    let (omega_hat, pd_report) =
        nearest_pd_fixed_pattern(omega.matrix(), &edges, config.eps_pd, config.max_pd_iter)?;
    Ok(EstimatedGraph {
        edges,
        pcor,
        omega_hat,
        pd_report,
        resid_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn lam(p: usize, entries: &[(usize, usize, f64)]) -> CoefficientMatrix {
        let mut m = DMatrix::zeros(p, p);
        for &(i, j, v) in entries {
            m[(i, j)] = v;
        }
        CoefficientMatrix::new(m).unwrap()
    }

    #[test]
    fn or_rule_is_noop_on_symmetric_pattern() {
        let l = lam(3, &[(0, 1, 0.2), (1, 0, 0.3)]);
        let calls = AtomicUsize::new(0);
        let (out, report) = or_rule_symmetrize(&l, |_, _| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(vec![0.0; 3])
        })
        .unwrap();
        assert_eq!(out, l);
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert_eq!(report.asymmetric_pairs, 0);
    }

    #[test]
    fn or_rule_reprojects_the_missing_side() {
        // Λ_12 ≠ 0, Λ_21 = 0 (1-based): node 2 gets variable 1 forced in.
        let l = lam(3, &[(0, 1, 0.4)]);
        let seen = std::sync::Mutex::new(Vec::new());
        let (out, report) = or_rule_symmetrize(&l, |i, forced| {
            seen.lock().unwrap().push((i, forced.to_vec()));
            Ok(vec![0.35, 0.0, 0.0])
        })
        .unwrap();
        assert_eq!(seen.into_inner().unwrap(), vec![(1, vec![0])]);
        assert_eq!(out.get(1, 0), 0.35);
        assert!(out.has_symmetric_pattern());
        assert_eq!(report.reprojected_nodes, vec![1]);
    }

    #[test]
    fn or_rule_calls_once_per_asymmetric_pair_when_nodes_are_distinct() {
        let l = lam(4, &[(0, 1, 0.4), (3, 2, -0.3)]);
        let calls = AtomicUsize::new(0);
        let (out, report) = or_rule_symmetrize(&l, |i, forced| {
            calls.fetch_add(1, Ordering::SeqCst);
            let mut row = vec![0.0; 4];
            for &j in forced {
                row[j] = if i == 1 { 0.1 } else { -0.2 };
            }
            Ok(row)
        })
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), report.asymmetric_pairs);
        assert_eq!(report.asymmetric_pairs, 2);
        assert!(out.has_symmetric_pattern());
    }

    #[test]
    fn or_rule_drops_pairs_that_project_to_zero() {
        let l = lam(2, &[(0, 1, 0.4)]);
        let (out, report) = or_rule_symmetrize(&l, |_, _| Ok(vec![1e-15, 0.0])).unwrap();
        assert_eq!(out.get(0, 1), 0.0);
        assert_eq!(out.get(1, 0), 0.0);
        assert_eq!(report.dropped_pairs, vec![(0, 1)]);
    }

    #[test]
    fn pcor_examples() {
        let r = pcor_from_lambda(&lam(2, &[(0, 1, 0.25), (1, 0, 0.25)]));
        assert_eq!(r.get(0, 1), 0.25);
        let r = pcor_from_lambda(&lam(2, &[(0, 1, 0.3), (1, 0, -0.2)]));
        assert_eq!(r.get(0, 1), 0.0);
        let r = pcor_from_lambda(&lam(2, &[(0, 1, 1.5), (1, 0, 1.5)]));
        assert_eq!(r.get(0, 1), 1.0);
        let r = pcor_from_lambda(&lam(2, &[(0, 1, -0.5), (1, 0, -0.2)]));
        assert!((r.get(1, 0) + 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_graph_precision_is_inverse_column_variance() {
        let x = DMatrix::from_fn(50, 3, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let data = crate::model::standardize(&DataMatrix::unnamed(x).unwrap()).unwrap();
        let (omega, var) =
            precision_from_lambda(&lam(3, &[]), &data, PrecisionSymmetrization::Average).unwrap();
        for (i, v) in var.iter().enumerate() {
            // Standardized columns have 1/n variance (n − 1)/n.
            assert!((v - 49.0 / 50.0).abs() < 1e-12);
            assert!((omega.matrix()[(i, i)] - 50.0 / 49.0).abs() < 1e-12);
        }
        assert_eq!(omega.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn precision_averaging_is_symmetric() {
        let x = DMatrix::from_fn(40, 3, |i, j| ((i * 5 + j * 11) as f64 * 0.21).cos() + 0.1 * j as f64);
        let data = crate::model::standardize(&DataMatrix::unnamed(x).unwrap()).unwrap();
        let l = lam(3, &[(0, 1, 0.2), (1, 0, 0.5), (1, 2, -0.1), (2, 1, -0.3)]);
        for rule in [PrecisionSymmetrization::Average, PrecisionSymmetrization::Min] {
            let (omega, _) = precision_from_lambda(&l, &data, rule).unwrap();
            let m = omega.matrix();
            assert_eq!(m[(0, 1)], m[(1, 0)]);
            assert_eq!(m[(0, 2)], 0.0);
        }
    }

    #[test]
    fn degenerate_residual_names_node() {
        let base: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let other: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut values = Vec::new();
        values.extend(&base);
        values.extend(&base);
        values.extend(&other);
        let x = DMatrix::from_column_slice(20, 3, &values);
        let data = crate::model::standardize(&DataMatrix::unnamed(x).unwrap()).unwrap();
        // Node 1 is an exact copy of node 0.
        let l = lam(3, &[(1, 0, 1.0), (0, 1, 1.0)]);
        let err = precision_from_lambda(&l, &data, PrecisionSymmetrization::Average).unwrap_err();
        assert!(matches!(err, Error::DegenerateResidual { node: 0 }));
    }

    #[test]
    fn already_pd_needs_no_correction() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.999, 0.999, 1.0]);
        let edges = EdgeSet::from_pairs(2, [(0, 1)]).unwrap();
        let (out, report) = nearest_pd_fixed_pattern(&m, &edges, 1e-6, 200).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(!report.corrected);
        assert_eq!(out.matrix(), &m);
    }

    #[test]
    fn correction_keeps_pattern_and_reaches_floor() {
        // Indefinite 3×3 chain with a missing (0, 2) edge.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.0, 0.9, 1.0, 0.9, 0.0, 0.9, 1.0]);
        let edges = EdgeSet::from_pairs(3, [(0, 1), (1, 2)]).unwrap();
        assert!(linalg::min_eigenvalue(&m) < 0.0);
        let (out, report) = nearest_pd_fixed_pattern(&m, &edges, 1e-6, 200).unwrap();
        assert!(report.corrected);
        assert!(out.min_eigenvalue() >= 1e-6);
        assert_eq!(out.matrix()[(0, 2)], 0.0);
        assert_eq!(out.matrix()[(2, 0)], 0.0);
        let (again, r2) = nearest_pd_fixed_pattern(out.matrix(), &edges, 1e-6, 200).unwrap();
        assert_eq!(r2.iterations, 0);
        assert_eq!(again, out);
    }

    #[test]
    fn correction_reports_non_convergence() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        let edges = EdgeSet::from_pairs(2, [(0, 1)]).unwrap();
        match nearest_pd_fixed_pattern(&m, &edges, 1e-6, 0) {
            Err(Error::PdNonConvergence { report }) => assert_eq!(report.iterations, 0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
