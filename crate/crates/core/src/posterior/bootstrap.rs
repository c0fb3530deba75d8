use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Exp1};

use super::{check_regression_shapes, PosteriorDraws, PosteriorMethod, MIN_DRAWS, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, tag, Rng};

/// One Dirichlet(1, …, 1) weight vector of length `n` (normalized unit
/// exponentials).
pub fn dirichlet_weights(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Weighted least squares with intercept; weights sum to one.
/// Returns (intercept, coefficients, weighted residual SD).
fn weighted_fit(y: &DVector<f64>, x: &DMatrix<f64>, w: &[f64]) -> (f64, DVector<f64>, f64) {
    let (n, d) = x.shape();
    let y_bar: f64 = (0..n).map(|i| w[i] * y[i]).sum();
    let x_bar = DVector::from_fn(d, |j, _| (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>());
    // Rows scaled by √w_i, columns centered at the weighted means.
    let xs = DMatrix::from_fn(n, d, |i, j| w[i].sqrt() * (x[(i, j)] - x_bar[j]));
    let ys = DVector::from_fn(n, |i, _| w[i].sqrt() * (y[i] - y_bar));
    let gram = xs.tr_mul(&xs);
    let rhs = xs.tr_mul(&ys);
    let beta = match gram.cholesky() {
        Some(c) => c.solve(&rhs),
        None => {
            let sol = linalg::lstsq_min_norm(&xs, &DMatrix::from_column_slice(n, 1, ys.as_slice()));
            DVector::from_column_slice(sol.as_slice())
        }
    };
    let alpha = y_bar - x_bar.dot(&beta);
    let fitted = x * &beta;
    let var: f64 = (0..n)
        .map(|i| w[i] * (y[i] - alpha - fitted[i]).powi(2))
        .sum();
    // Degrees-of-freedom correction: Σ w r² is a plug-in (1/n) variance.
    let dof = n as f64 / (n - d - 1) as f64;
    (alpha, beta, (var * dof).sqrt().max(SIGMA_FLOOR))
}

/// Bayesian-bootstrap posterior for a low-dimensional regression: each draw
/// reweights the observations with Dirichlet(1, …, 1) weights and solves
/// weighted least squares.
pub fn fit_bayes_boot(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    check_regression_shapes(y, x)?;
    let (n, d) = x.shape();
    if n <= d + 2 {
        return Err(Error::Dimension(format!(
            "Bayesian bootstrap needs n > D + 2 (n = {n}, D = {d}); use the horseshoe reference model"
        )));
    }
    if draws < MIN_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "draws must be at least {MIN_DRAWS}, got {draws}"
        )));
    }
    let mut rng = rng::stream(seed, &[tag::REFERENCE, tag::WEIGHTS]);
    let mut beta = DMatrix::zeros(draws, d);
    let mut sigma = DVector::zeros(draws);
    let mut intercept = DVector::zeros(draws);
    for s in 0..draws {
        let w = dirichlet_weights(n, &mut rng);
        let (a, b, sd) = weighted_fit(y, x, &w);
        beta.set_row(s, &b.transpose());
        sigma[s] = sd;
        intercept[s] = a;
    }
    PosteriorDraws::new(beta, sigma, intercept, PosteriorMethod::BayesianBootstrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_weights_sum_to_one() {
        let mut rng = rng::stream(1, &[]);
        for n in [1, 5, 100] {
            let w = dirichlet_weights(n, &mut rng);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn exact_linear_response_is_recovered_by_every_draw() {
        // Orthonormal columns (discrete cosine basis), y = X b exactly.
        let n = 12;
        let x = DMatrix::from_fn(n, 3, |i, j| {
            let k = (j + 1) as f64;
            (std::f64::consts::PI * k * (i as f64 + 0.5) / n as f64).cos() * (2.0 / n as f64).sqrt()
        });
        let b = DVector::from_vec(vec![1.5, -0.5, 2.0]);
        let y = &x * &b;
        let post = fit_bayes_boot(&y, &x, 200, 3).unwrap();
        for s in 0..200 {
            for j in 0..3 {
                assert!((post.beta[(s, j)] - b[j]).abs() < 1e-9);
            }
            assert!(post.sigma[s] < 1e-9);
        }
    }

    #[test]
    fn too_few_observations_is_a_dimension_error() {
        let x = DMatrix::from_fn(5, 3, |i, j| (i + j) as f64);
        let y = DVector::from_fn(5, |i, _| i as f64);
        assert!(matches!(fit_bayes_boot(&y, &x, 100, 1), Err(Error::Dimension(_))));
    }
}
