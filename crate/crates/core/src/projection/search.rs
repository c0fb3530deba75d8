use nalgebra::{DMatrix, DVector};

use super::project_fits;
use crate::error::Result;
use crate::posterior::PosteriorDraws;

/// Greedy search order with the projection loss at every size `0..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPath {
    pub order: Vec<usize>,
    pub loss_by_size: Vec<f64>,
}

/// `min(D, n − 4, 30)`.
pub fn default_max_size(d: usize, n: usize) -> usize {
    d.min(n.saturating_sub(4)).min(30)
}

/// Forward search on the posterior-mean draw: starting from the intercept
/// model, repeatedly add the predictor whose inclusion most reduces the
/// projection discrepancy of the mean fit. For a single Gaussian draw that
/// is the candidate with the largest drop in residual sum of squares, which
/// is found by keeping every remaining candidate orthogonalized against the
/// current submodel. Ties go to the lower index. The losses along the
/// resulting path are then computed with all draws.
pub fn forward_search(draws: &PosteriorDraws, x: &DMatrix<f64>, max_size: usize) -> Result<SearchPath> {
    let order = search_order(draws, x, max_size);
    let fits = draws.fits(x);
    let loss_by_size = (0..=order.len())
        .map(|k| project_fits(x, &fits, &draws.sigma, &order[..k]).map(|p| p.loss()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchPath { order, loss_by_size })
}

/// The search order alone.
pub(crate) fn search_order(draws: &PosteriorDraws, x: &DMatrix<f64>, max_size: usize) -> Vec<usize> {
    let d = x.ncols();
    let max_size = max_size.min(d);
    let mean_fit = (x * draws.mean_beta()).add_scalar(draws.mean_intercept());

    // Everything is kept orthogonal to the intercept and to the chosen columns.
    let mut resid = mean_fit.add_scalar(-mean_fit.mean());
    let mut cands: Vec<DVector<f64>> = (0..d)
        .map(|j| {
            let c = x.column(j);
            c.add_scalar(-c.mean())
        })
        .collect();
    let orig_norm: Vec<f64> = cands.iter().map(|c| c.norm_squared()).collect();
    let mut used = vec![false; d];
    let mut order = Vec::with_capacity(max_size);

    for _ in 0..max_size {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..d).filter(|&j| !used[j]) {
            let nn = cands[j].norm_squared();
            let gain = if nn > 1e-12 * orig_norm[j].max(f64::MIN_POSITIVE) {
                cands[j].dot(&resid).powi(2) / nn
            } else {
                0.0
            };
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((j, _)) = best else { break };
        used[j] = true;
        order.push(j);
        let nn = cands[j].norm();
        if nn > 1e-6 * orig_norm[j].sqrt().max(f64::MIN_POSITIVE) {
            let q = &cands[j] / nn;
            resid -= &q * q.dot(&resid);
            for k in (0..d).filter(|&k| !used[k]) {
                let proj = q.dot(&cands[k]);
                cands[k] -= &q * proj;
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::PosteriorMethod;

    #[test]
    fn default_cap() {
        assert_eq!(default_max_size(49, 50), 30);
        assert_eq!(default_max_size(19, 1000), 19);
        assert_eq!(default_max_size(10, 9), 5);
        assert_eq!(default_max_size(10, 3), 0);
    }

    #[test]
    fn single_candidate() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let draws = PosteriorDraws::new(
            DMatrix::from_element(2, 1, 0.3),
            DVector::from_element(2, 1.0),
            DVector::zeros(2),
            PosteriorMethod::BayesianBootstrap,
        )
        .unwrap();
        let path = forward_search(&draws, &x, 5).unwrap();
        assert_eq!(path.order, vec![0]);
        assert_eq!(path.loss_by_size.len(), 2);
    }

    #[test]
    fn picks_the_largest_contribution_first() {
        let x = DMatrix::from_fn(50, 3, |i, j| ((i * (j + 3)) as f64 * 0.77).sin());
        let draws = PosteriorDraws::new(
            DMatrix::from_row_slice(1, 3, &[0.1, 0.0, 2.0]),
            DVector::from_element(1, 1.0),
            DVector::zeros(1),
            PosteriorMethod::BayesianBootstrap,
        )
        .unwrap();
        let path = forward_search(&draws, &x, 3).unwrap();
        assert_eq!(path.order[0], 2);
        assert_eq!(path.order[1], 0);
        assert!(path.loss_by_size.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(path.loss_by_size[3] < 1e-12);
    }
}
