//! Gibbs sampler for linear regression under the horseshoe prior
//!
//! ```text
//! β_j | λ_j, τ ~ N(0, λ_j² τ²),  λ_j ~ C⁺(0, 1),  τ ~ C⁺(0, τ₀),
//! p(α) ∝ 1,  p(σ²) ∝ 1/σ²
//! ```
//!
//! Each half-Cauchy is written as an inverse-gamma scale mixture
//! (`λ² | ν ~ IG(1/2, 1/ν)`, `ν ~ IG(1/2, 1)`), so every full conditional is
//! Gaussian or inverse-gamma. The coefficient block is drawn through the
//! D × D precision when D ≤ n and through the n × n dual system otherwise.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use super::{
    check_regression_shapes, tau0_from_p0, HorseshoeConfig, PosteriorDraws, PosteriorMethod,
    SIGMA_FLOOR,
};
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};

const SCALE_MIN: f64 = 1e-20;
const SCALE_MAX: f64 = 1e20;

/// Draws from IG(shape, rate) as `rate / Gamma(shape, 1)`.
fn inv_gamma(shape: f64, rate: f64, rng: &mut Rng) -> f64 {
    let g: f64 = if shape == 1.0 {
        Exp1.sample(rng)
    } else {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
    };
    rate / g
}

fn std_normal_vec(len: usize, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

struct State {
    beta: DVector<f64>,
    alpha: f64,
    sigma2: f64,
    lambda2: DVector<f64>,
    nu: DVector<f64>,
    tau2: f64,
    xi: f64,
}

/// β | rest when D ≤ n: `A = XᵀX/σ² + diag(1/d)`, `β ~ N(A⁻¹Xᵀr/σ², A⁻¹)`.
fn draw_beta_primal(
    xtx: &DMatrix<f64>,
    xtr: &DVector<f64>,
    prior_var: &DVector<f64>,
    sigma2: f64,
    rng: &mut Rng,
) -> Option<DVector<f64>> {
    let d = prior_var.len();
    let mut a = xtx / sigma2;
    for j in 0..d {
        a[(j, j)] += 1.0 / prior_var[j];
    }
    let chol = a.cholesky()?;
    let mean = chol.solve(&(xtr / sigma2));
    // L Lᵀ = A, so Lᵀ⁻¹ z has covariance A⁻¹.
    let z = std_normal_vec(d, rng);
    let noise = chol.l().transpose().solve_upper_triangular(&z)?;
    Some(mean + noise)
}

/// β | rest when D > n, by the exact dual-space construction: with
/// `Φ = X/σ`, `u ~ N(0, diag d)`, `δ ~ N(0, I_n)`, `v = Φu + δ`,
/// `w = (Φ diag(d) Φᵀ + I)⁻¹ (r/σ − v)`, the draw is `u + diag(d) Φᵀ w`.
fn draw_beta_dual(
    x: &DMatrix<f64>,
    resid_target: &DVector<f64>,
    prior_var: &DVector<f64>,
    sigma2: f64,
    rng: &mut Rng,
) -> Option<DVector<f64>> {
    let (n, d) = x.shape();
    let sigma = sigma2.sqrt();
    let phi = x / sigma;
    let u = DVector::from_fn(d, |j, _| prior_var[j].sqrt() * rng.sample::<f64, _>(StandardNormal));
    let delta = std_normal_vec(n, rng);
    let v = &phi * &u + delta;
    let mut phi_d = phi.clone();
    for (j, mut col) in phi_d.column_iter_mut().enumerate() {
        col *= prior_var[j];
    }
    let mut m = &phi_d * phi.transpose();
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let chol = m.cholesky()?;
    let w = chol.solve(&(resid_target / sigma - v));
    Some(u + phi_d.transpose() * w)
}

/// Potential scale reduction comparing the two halves of one chain.
pub fn split_rhat(chain: &[f64]) -> f64 {
    let half = chain.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let halves = [&chain[..half], &chain[chain.len() - half..]];
    let stats: Vec<(f64, f64)> = halves
        .iter()
        .map(|h| {
            let m = h.iter().sum::<f64>() / half as f64;
            let v = h.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (half as f64 - 1.0);
            (m, v)
        })
        .collect();
    let w = 0.5 * (stats[0].1 + stats[1].1);
    let grand = 0.5 * (stats[0].0 + stats[1].0);
    let b = half as f64 * ((stats[0].0 - grand).powi(2) + (stats[1].0 - grand).powi(2));
    if !(w > 0.0) {
        return 1.0;
    }
    let var_plus = (half as f64 - 1.0) / half as f64 * w + b / half as f64;
    (var_plus / w).sqrt()
}

/// Runs `warmup + draws` Gibbs sweeps and keeps the last `draws`.
pub fn fit_horseshoe(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    config: &HorseshoeConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    check_regression_shapes(y, x)?;
    let (n, d) = x.shape();
    let nf = n as f64;
    let y_mean = y.mean();
    let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (nf - 1.0);

    let tau0 = match config.p0 {
        Some(p0) => tau0_from_p0(p0, d, y_var.sqrt().max(SIGMA_FLOOR), n)?,
        None => config.tau0,
    };
    let tau0_sq = tau0 * tau0;

    let mut rng = rng::stream(config.seed, &[tag::REFERENCE]);
    let primal = d <= n;
    let xtx = if primal { x.tr_mul(x) } else { DMatrix::zeros(0, 0) };

    let mut st = State {
        beta: DVector::zeros(d),
        alpha: y_mean,
        sigma2: if y_var > 0.0 { y_var } else { 1.0 },
        lambda2: DVector::from_element(d, 1.0),
        nu: DVector::from_element(d, 1.0),
        tau2: tau0_sq.clamp(SCALE_MIN, SCALE_MAX),
        xi: 1.0,
    };
    if let Some((lambda, tau)) = config.frozen_scales {
        st.lambda2.fill(lambda * lambda);
        st.tau2 = tau * tau;
    }

    let total = config.warmup + config.draws;
    let mut beta_out = DMatrix::zeros(config.draws, d);
    let mut sigma_out = DVector::zeros(config.draws);
    let mut alpha_out = DVector::zeros(config.draws);

    for iter in 0..total {
        let diverged = || Error::SamplerDivergence { iteration: iter };

        // β
        if d > 0 {
            let prior_var = st.lambda2.map(|l| (l * st.tau2).clamp(SCALE_MIN, SCALE_MAX));
            let target = y.add_scalar(-st.alpha);
            let beta = if primal {
                let xtr = x.tr_mul(&target);
                draw_beta_primal(&xtx, &xtr, &prior_var, st.sigma2, &mut rng)
            } else {
                draw_beta_dual(x, &target, &prior_var, st.sigma2, &mut rng)
            };
            st.beta = beta.ok_or_else(diverged)?;
        }

        // α and σ²
        let fitted = x * &st.beta;
        let partial = y - &fitted;
        let partial_mean = partial.mean();
        st.alpha = partial_mean + (st.sigma2 / nf).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let rss: f64 = partial.iter().map(|r| (r - st.alpha).powi(2)).sum();
        st.sigma2 = inv_gamma(0.5 * nf, 0.5 * rss, &mut rng).max(SIGMA_FLOOR * SIGMA_FLOOR);

        // Local and global scales with their auxiliaries.
        if config.frozen_scales.is_none() && d > 0 {
            for j in 0..d {
                let rate = 1.0 / st.nu[j] + st.beta[j] * st.beta[j] / (2.0 * st.tau2);
                st.lambda2[j] = inv_gamma(1.0, rate, &mut rng).clamp(SCALE_MIN, SCALE_MAX);
            }
            let ss: f64 = (0..d).map(|j| st.beta[j] * st.beta[j] / st.lambda2[j]).sum();
            st.tau2 = inv_gamma(0.5 * (d as f64 + 1.0), 1.0 / st.xi + 0.5 * ss, &mut rng)
                .clamp(SCALE_MIN, SCALE_MAX);
            for j in 0..d {
                st.nu[j] = inv_gamma(1.0, 1.0 + 1.0 / st.lambda2[j], &mut rng);
            }
            st.xi = inv_gamma(1.0, 1.0 / tau0_sq + 1.0 / st.tau2, &mut rng);
        }

        let finite = st.alpha.is_finite()
            && st.sigma2.is_finite()
            && st.tau2.is_finite()
            && st.xi.is_finite()
            && st.beta.iter().all(|b| b.is_finite())
            && st.lambda2.iter().all(|l| l.is_finite())
            && st.nu.iter().all(|v| v.is_finite());
        if !finite {
            return Err(diverged());
        }

        if iter >= config.warmup {
            let s = iter - config.warmup;
            beta_out.set_row(s, &st.beta.transpose());
            sigma_out[s] = st.sigma2.sqrt().max(SIGMA_FLOOR);
            alpha_out[s] = st.alpha;
        }
    }

    let mut rhat: Vec<f64> = (0..d)
        .map(|j| split_rhat(beta_out.column(j).as_slice()))
        .collect();
    rhat.push(split_rhat(sigma_out.as_slice()));

    let mut draws = PosteriorDraws::new(beta_out, sigma_out, alpha_out, PosteriorMethod::Horseshoe)?;
    draws.tau0 = tau0;
    draws.rhat = Some(rhat);
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, d: usize, signal: &[f64], seed: u64) -> (DVector<f64>, DMatrix<f64>) {
        let mut rng = rng::stream(seed, &[99]);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for (j, b) in signal.iter().enumerate() {
            y += x.column(j) * *b;
        }
        (y, x)
    }

    #[test]
    fn same_seed_same_draws() {
        let (y, x) = toy(30, 4, &[1.0], 1);
        let cfg = HorseshoeConfig {
            warmup: 50,
            draws: 100,
            seed: 5,
            ..Default::default()
        };
        let a = fit_horseshoe(&y, &x, &cfg).unwrap();
        let b = fit_horseshoe(&y, &x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rhat.as_ref().unwrap().len(), 5);
    }

    #[test]
    fn dual_and_primal_paths_both_run() {
        // D > n exercises the dual solve.
        let (y, x) = toy(15, 40, &[2.0], 2);
        let cfg = HorseshoeConfig {
            warmup: 200,
            draws: 200,
            seed: 3,
            ..Default::default()
        };
        let draws = fit_horseshoe(&y, &x, &cfg).unwrap();
        assert_eq!(draws.beta.shape(), (200, 40));
        assert!(draws.mean_beta()[0] > 1.0);
    }

    #[test]
    fn split_rhat_is_one_for_identical_halves() {
        let chain: Vec<f64> = (0..100).map(|i| ((i % 50) as f64).sin()).collect();
        assert!((split_rhat(&chain) - (49.0f64 / 50.0).sqrt()).abs() < 1e-12);
        let drifting: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(split_rhat(&drifting) > 1.5);
    }

    #[test]
    fn too_few_draws_rejected() {
        let (y, x) = toy(10, 2, &[], 1);
        let cfg = HorseshoeConfig {
            draws: 50,
            ..Default::default()
        };
        assert!(matches!(fit_horseshoe(&y, &x, &cfg), Err(Error::InvalidParameter(_))));
    }
}
