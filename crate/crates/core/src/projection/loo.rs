use nalgebra::{DMatrix, DVector};

use super::psis::{log_normal_density, LooWeights};
use super::{project_fits, submodel_design, ProjectedDraws};
use crate::error::{Error, Result};
use crate::linalg;
use crate::posterior::PosteriorDraws;

/// Summed LOO log predictive density with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct LooUtility {
    pub u_hat: f64,
    pub se: f64,
    pub pointwise: Vec<f64>,
}

impl LooUtility {
    /// `û = Σ_i lpd_i`, `se = √n · sd(lpd)`.
    pub fn from_pointwise(pointwise: Vec<f64>) -> Self {
        let n = pointwise.len() as f64;
        let u_hat: f64 = pointwise.iter().sum();
        let mean = u_hat / n;
        let var = if n > 1.0 {
            pointwise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            u_hat,
            se: (n * var).sqrt(),
            pointwise,
        }
    }
}

/// `log Σ_s exp(a_s + l_s)` over log weights `a_s`; zero weights (−∞) are skipped.
fn weighted_log_sum_exp(log_weights: impl Iterator<Item = f64>, logs: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = log_weights
        .zip(logs)
        .filter(|(a, _)| *a > f64::NEG_INFINITY)
        .map(|(a, l)| a + l)
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn check_finite(lpd: Vec<f64>) -> Result<Vec<f64>> {
    match lpd.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Underflow { observation: i + 1 }),
        None => Ok(lpd),
    }
}

fn pointwise_from(
    weights: &LooWeights,
    y: &DVector<f64>,
    density: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>> {
    let (n, s) = weights.w.shape();
    if y.len() != n {
        return Err(Error::InvalidParameter("weights and response lengths differ".into()));
    }
    let lpd = (0..n)
        .map(|i| weighted_log_sum_exp(weights.log_w.row(i).iter().copied(), (0..s).map(|d| density(i, d))))
        .collect();
    check_finite(lpd)
}

/// Gaussian log densities with per-draw means `fits[(i, s)]` and SDs `sigma[s]`.
fn gaussian_pointwise(
    fits: &DMatrix<f64>,
    sigma: &DVector<f64>,
    weights: &LooWeights,
    y: &DVector<f64>,
) -> Result<Vec<f64>> {
    let inv: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
    let norm: Vec<f64> = sigma.iter().map(|s| -s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()).collect();
    pointwise_from(weights, y, |i, s| {
        let z = (y[i] - fits[(i, s)]) * inv[s];
        norm[s] - 0.5 * z * z
    })
}

/// Pointwise LOO LPD of the reference model.
pub fn reference_pointwise(
    fits: &DMatrix<f64>,
    sigma: &DVector<f64>,
    weights: &LooWeights,
    y: &DVector<f64>,
) -> Result<Vec<f64>> {
    gaussian_pointwise(fits, sigma, weights, y)
}

/// Pointwise LOO LPD of a projected submodel: the projected draws are
/// reweighted with the reference model's PSIS weights.
pub(crate) fn pointwise_lpd(proj: &ProjectedDraws, weights: &LooWeights, y: &DVector<f64>) -> Result<Vec<f64>> {
    gaussian_pointwise(&proj.fitted, &proj.sigma_perp, weights, y)
}

/// Pointwise LOO LPD where, for each observation i, every draw's
/// projection is re-solved on the other n − 1 rows before predicting i.
/// Uses the exact deletion identities for least squares: with hat value
/// `h_i` and in-sample residual `e_i`, the fit without row i predicts
/// `f_i − e_i / (1 − h_i)` and has residual sum of squares
/// `RSS − e_i² / (1 − h_i)`.
pub fn exact_loo_pointwise(
    proj: &ProjectedDraws,
    x: &DMatrix<f64>,
    fits: &DMatrix<f64>,
    sigma: &DVector<f64>,
    weights: &LooWeights,
    y: &DVector<f64>,
) -> Result<Vec<f64>> {
    let (n, s_count) = fits.shape();
    let basis = linalg::column_basis(&submodel_design(x, &proj.support));
    let hat: Vec<f64> = (0..n).map(|i| basis.row(i).norm_squared()).collect();
    let resid = fits - &proj.fitted;
    let rss: Vec<f64> = (0..s_count).map(|s| resid.column(s).norm_squared()).collect();
    pointwise_from(weights, y, |i, s| {
        let lev = 1.0 - hat[i];
        let (pred, var) = if lev > 1e-10 {
            let e = resid[(i, s)];
            let rss_i = (rss[s] - e * e / lev).max(0.0);
            (fits[(i, s)] - e / lev, sigma[s] * sigma[s] + rss_i / (n as f64 - 1.0))
        } else {
            (proj.fitted[(i, s)], proj.sigma_perp[s] * proj.sigma_perp[s])
        };
        log_normal_density(y[i], pred, var.sqrt())
    })
}

/// LOO utility of the projection of `draws` onto `support`.
pub fn loo_utility(
    draws: &PosteriorDraws,
    weights: &LooWeights,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    support: &[usize],
) -> Result<LooUtility> {
    let proj = project_fits(x, &draws.fits(x), &draws.sigma, support)?;
    Ok(LooUtility::from_pointwise(pointwise_lpd(&proj, weights, y)?))
}
