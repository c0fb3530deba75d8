//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..p {
        for j in (i + 1)..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replaces `m` with `(m + mᵀ) / 2`.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = SymmetricEigen::new(m.clone()).eigenvalues;
    ev.as_mut_slice().sort_by(f64::total_cmp);
    ev
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_eigenvalues(m)[0]
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::Singular)?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Column-pivoted QR truncated at the numerical rank: `A[:, perm] ≈ Q [R11 R12]`.
/// Used instead of nalgebra's SVD, which can return wrong factors for
/// exactly rank-deficient inputs.
struct RankRevealingQr {
    q: DMatrix<f64>,
    r11: DMatrix<f64>,
    r12: DMatrix<f64>,
    perm: Vec<usize>,
}

fn rank_revealing_qr(a: &DMatrix<f64>) -> RankRevealingQr {
    let (n, m) = a.shape();
    let qr = a.clone().col_piv_qr();
    let mut idx = DMatrix::from_fn(1, m, |_, j| j as f64);
    qr.p().permute_columns(&mut idx);
    let perm: Vec<usize> = idx.iter().map(|&v| v as usize).collect();
    let r = qr.r();
    let q = qr.q();
    let kmax = n.min(m);
    let tol = if kmax > 0 { r[(0, 0)].abs() * n.max(m) as f64 * f64::EPSILON } else { 0.0 };
    let rank = (0..kmax).take_while(|&k| r[(k, k)].abs() > tol).count();
    RankRevealingQr {
        q: q.columns(0, rank).into_owned(),
        r11: r.view((0, 0), (rank, rank)).into_owned(),
        r12: r.view((0, rank), (rank, m - rank)).into_owned(),
        perm,
    }
}

/// Minimum-norm least-squares solution of `a · x = b` for every column of `b`.
pub(crate) fn lstsq_min_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.ncols();
    let mut x = DMatrix::zeros(m, b.ncols());
    if m == 0 {
        return x;
    }
    let f = rank_revealing_qr(a);
    let rank = f.r11.nrows();
    if rank == 0 {
        return x;
    }
    let upper = |rhs: &DMatrix<f64>| {
        f.r11
            .solve_upper_triangular(rhs)
            .expect("pivots above the rank tolerance are nonzero")
    };
    // Basic solution in pivoted coordinates, zero on the dependent columns.
    let mut z = DMatrix::zeros(m, b.ncols());
    z.rows_mut(0, rank).copy_from(&upper(&f.q.tr_mul(b)));
    if rank < m {
        // Null space of A[:, perm] is spanned by [−R11⁻¹ R12; I]; removing
        // that component leaves the minimum-norm solution.
        let mut null = DMatrix::zeros(m, m - rank);
        null.rows_mut(0, rank).copy_from(&(-upper(&f.r12)));
        null.rows_mut(rank, m - rank).fill_with_identity();
        let gram = null.tr_mul(&null).cholesky().expect("null basis has full column rank");
        let coef = gram.solve(&null.tr_mul(&z));
        z -= &null * coef;
    }
    for (k, &j) in f.perm.iter().enumerate() {
        x.set_row(j, &z.row(k));
    }
    x
}

/// Orthonormal basis (n × r) for the column space of `a`, with r its
/// numerical rank.
pub(crate) fn column_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    rank_revealing_qr(a).q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_norm_solution_on_rank_deficient_design() {
        // Two identical columns: the minimum-norm fit splits the weight evenly.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DMatrix::from_column_slice(3, 1, &[2.0, 4.0, 6.0]);
        let x = lstsq_min_norm(&a, &b);
        assert!((x[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((x[(1, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(column_basis(&a).ncols(), 1);
    }

    #[test]
    fn min_norm_solution_agrees_with_normal_equations_oracle() {
        // Column 3 is a combination of the others.
        let a = DMatrix::from_fn(12, 4, |i, j| match j {
            3 => 2.0 * ((i as f64) * 0.7).sin() - ((i * i) as f64 * 0.3).cos(),
            0 => ((i as f64) * 0.7).sin(),
            1 => ((i * i) as f64 * 0.3).cos(),
            _ => (i as f64 * 0.11).exp(),
        });
        let b = DMatrix::from_fn(12, 2, |i, c| (i as f64 + c as f64).sqrt());
        let x = lstsq_min_norm(&a, &b);
        // Oracle: pseudo-inverse from the eigendecomposition of AᵀA.
        let eig = SymmetricEigen::new(a.tr_mul(&a));
        let lmax = eig.eigenvalues.max();
        let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| if l > 1e-10 * lmax { 1.0 / l } else { 0.0 }));
        let oracle = &eig.eigenvectors * inv * eig.eigenvectors.transpose() * a.tr_mul(&b);
        assert!((&x - oracle).abs().max() < 1e-8);
        let basis = column_basis(&a);
        assert_eq!(basis.ncols(), 3);
        assert!((basis.tr_mul(&basis) - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn eigenvalues_sorted_ascending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(sym_eigenvalues(&m).as_slice(), &[1.0, 2.0, 3.0]);
    }
}
