//! Pareto-smoothed importance sampling for leave-one-out weights.
//!
//! For observation i the raw log ratios are `−log p(y_i | θ_s)`. The
//! `M = min(⌈0.2 S⌉, ⌈3 √S⌉)` largest ratios are replaced by the expected
//! order statistics of a generalized Pareto distribution fitted to them
//! (profile-posterior estimate with a weak prior pulling k̂ towards 0.5),
//! the result is truncated at the largest raw ratio and normalized.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::posterior::{PosteriorDraws, MIN_DRAWS};

/// Pareto k̂ above this marks an unreliable importance-sampling estimate.
pub const KHAT_WARN: f64 = 0.7;

/// Normalized leave-one-out weights, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LooWeights {
    /// n × S, rows sum to one.
    pub w: DMatrix<f64>,
    /// Elementwise `ln w` (−∞ for zero weights).
    pub log_w: DMatrix<f64>,
    pub khat: Vec<f64>,
}

impl LooWeights {
    pub fn new(w: DMatrix<f64>, khat: Vec<f64>) -> Self {
        let log_w = w.map(f64::ln);
        Self { w, log_w, khat }
    }

    /// Equal weights `1/S` for every observation.
    pub fn uniform(n: usize, s: usize) -> Self {
        Self::new(DMatrix::from_element(n, s, 1.0 / s as f64), vec![0.0; n])
    }

    pub fn num_obs(&self) -> usize {
        self.w.nrows()
    }

    pub fn num_draws(&self) -> usize {
        self.w.ncols()
    }
}

pub(crate) fn log_normal_density(y: f64, mean: f64, sigma: f64) -> f64 {
    let z = (y - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

/// `log p(y_i | θ_s)` for the reference model (n × S).
pub fn log_lik_matrix(draws: &PosteriorDraws, y: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let fits = draws.fits(x);
    DMatrix::from_fn(fits.nrows(), fits.ncols(), |i, s| {
        log_normal_density(y[i], fits[(i, s)], draws.sigma[s])
    })
}

/// Generalized Pareto fit to positive exceedances `x` (sorted ascending).
/// Returns `(k̂, σ̂)`, with k̂ already shrunk towards 0.5 by the
/// small-sample prior adjustment.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let x_star = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let x_max = x[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / x_star)
        .collect();
    let profile: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|v| (-t * v).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let lmax = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = profile.iter().map(|l| (l - lmax).exp()).collect();
    let wsum: f64 = weights.iter().sum();
    let theta_hat: f64 = theta.iter().zip(&weights).map(|(t, w)| t * w).sum::<f64>() / wsum;
    let k = x.iter().map(|v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let a = 10.0;
    let k_adj = k * n as f64 / (n as f64 + a) + a * 0.5 / (n as f64 + a);
    (if k_adj.is_nan() { f64::INFINITY } else { k_adj }, sigma)
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * ((-k * (-p).ln_1p()).exp_m1()) / k
    }
}

/// Smooths one row of log importance ratios. Returns the normalized weights
/// and k̂. Rows with a flat tail are left unsmoothed and get k̂ = 0.
pub fn psis_smooth(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let (lw, khat) = psis_log_weights(log_ratios);
    let w: Vec<f64> = lw.iter().map(|v| v.exp()).collect();
    let total: f64 = w.iter().sum();
    (w.into_iter().map(|v| v / total).collect(), khat)
}

/// Unnormalized smoothed log weights, shifted so the largest raw ratio is 0.
fn psis_log_weights(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let s = log_ratios.len();
    let max = log_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();
    let tail_len = ((0.2 * s as f64).ceil()).min((3.0 * (s as f64).sqrt()).ceil()) as usize;
    let mut khat = 0.0;
    if tail_len >= 5 && tail_len < s {
        let mut idx: Vec<usize> = (0..s).collect();
        idx.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]).then(a.cmp(&b)));
        let tail_ids = &idx[s - tail_len..];
        let tail_lo = lw[tail_ids[0]];
        let tail_hi = lw[tail_ids[tail_len - 1]];
        if (tail_hi - tail_lo).abs() > f64::EPSILON / 100.0 {
            let cutoff = lw[idx[s - tail_len - 1]];
            let exp_cutoff = cutoff.exp();
            let exceed: Vec<f64> = tail_ids.iter().map(|&i| lw[i].exp() - exp_cutoff).collect();
            let (k, sigma) = gpd_fit(&exceed);
            if k.is_finite() && sigma > 0.0 {
                for (r, &i) in tail_ids.iter().enumerate() {
                    let p = (r as f64 + 1.0 - 0.5) / tail_len as f64;
                    lw[i] = (gpd_quantile(p, k, sigma) + exp_cutoff).ln();
                }
            }
            khat = k;
        }
    }
    // Truncate at the largest raw ratio, which is 0 after the shift.
    for v in lw.iter_mut() {
        if *v > 0.0 {
            *v = 0.0;
        }
    }
    (lw, khat)
}

/// PSIS leave-one-out weights for every observation.
pub fn psis_loo_weights(draws: &PosteriorDraws, y: &DVector<f64>, x: &DMatrix<f64>) -> Result<LooWeights> {
    if draws.num_draws() < MIN_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "PSIS needs at least {MIN_DRAWS} draws, got {}",
            draws.num_draws()
        )));
    }
    let ll = log_lik_matrix(draws, y, x);
    let (n, s) = ll.shape();
    let mut w = DMatrix::zeros(n, s);
    let mut khat = Vec::with_capacity(n);
    for i in 0..n {
        let ratios: Vec<f64> = ll.row(i).iter().map(|v| -v).collect();
        let (row, k) = psis_smooth(&ratios);
        for (sidx, v) in row.into_iter().enumerate() {
            w[(i, sidx)] = v;
        }
        if k > KHAT_WARN {
            log::warn!("node {}: observation {} has Pareto k-hat {k:.2}", draws.node, i + 1);
        }
        khat.push(k);
    }
    Ok(LooWeights::new(w, khat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::PosteriorMethod;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn equal_likelihoods_give_uniform_weights() {
        let (w, k) = psis_smooth(&vec![-1.5; 400]);
        assert!(w.iter().all(|v| (v - 1.0 / 400.0).abs() < 1e-15));
        assert_eq!(k, 0.0);
    }

    #[test]
    fn rows_are_probability_vectors_and_never_exceed_raw_max() {
        let mut rng = rng::stream(3, &[]);
        for _ in 0..20 {
            let ratios: Vec<f64> = (0..500).map(|_| 3.0 * rng.random::<f64>().powi(3)).collect();
            let (w, k) = psis_smooth(&ratios);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(w.iter().all(|v| *v >= 0.0));
            assert!(k.is_finite());
            let (lw, _) = psis_log_weights(&ratios);
            assert!(lw.iter().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn gpd_fit_recovers_shape_roughly() {
        // Exceedances drawn by inversion from a GPD with k = 0.5, σ = 1.
        let mut rng = rng::stream(11, &[]);
        let mut x: Vec<f64> = (0..2000)
            .map(|_| gpd_quantile(rng.random::<f64>(), 0.5, 1.0))
            .collect();
        x.sort_by(f64::total_cmp);
        let (k, sigma) = gpd_fit(&x);
        assert!((k - 0.5).abs() < 0.1, "k = {k}");
        assert!((sigma - 1.0).abs() < 0.2, "sigma = {sigma}");
    }

    #[test]
    fn weights_need_enough_draws() {
        let d = PosteriorDraws::new(
            DMatrix::zeros(10, 1),
            DVector::from_element(10, 1.0),
            DVector::zeros(10),
            PosteriorMethod::Horseshoe,
        )
        .unwrap();
        let x = DMatrix::zeros(5, 1);
        let y = DVector::zeros(5);
        assert!(psis_loo_weights(&d, &y, &x).is_err());
    }
}
