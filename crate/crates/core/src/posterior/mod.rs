//! Reference-model posteriors for one node-wise regression
//! `y = α + Xβ + ε`, either from a horseshoe Gibbs sampler or from the
//! Bayesian bootstrap.

mod bootstrap;
mod horseshoe;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use bootstrap::{dirichlet_weights, fit_bayes_boot};
pub use horseshoe::{fit_horseshoe, split_rhat};

use crate::error::{Error, Result};

/// Residual SD draws are floored here so that every draw has a proper density.
pub const SIGMA_FLOOR: f64 = 1e-150;

/// Smallest number of draws the samplers will produce.
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorMethod {
    Horseshoe,
    BayesianBootstrap,
}

/// S draws of (intercept, coefficients, residual SD) for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub node: usize,
    /// S × D coefficient draws.
    pub beta: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub intercept: DVector<f64>,
    pub method: PosteriorMethod,
    /// Global scale hyperparameter (horseshoe only; 0 otherwise).
    pub tau0: f64,
    /// Split-chain R̂ per coefficient followed by σ (horseshoe only).
    pub rhat: Option<Vec<f64>>,
}

impl PosteriorDraws {
    /// Validates shapes, finiteness and positivity of σ. Accepts any S ≥ 1;
    /// the samplers themselves never return fewer than [`MIN_DRAWS`].
    pub fn new(
        beta: DMatrix<f64>,
        sigma: DVector<f64>,
        intercept: DVector<f64>,
        method: PosteriorMethod,
    ) -> Result<Self> {
        let s = beta.nrows();
        if s == 0 || sigma.len() != s || intercept.len() != s {
            return Err(Error::InvalidParameter(format!(
                "inconsistent draw counts: beta {s}, sigma {}, intercept {}",
                sigma.len(),
                intercept.len()
            )));
        }
        if beta.iter().chain(intercept.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite posterior draw".into()));
        }
        if sigma.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidData("residual SD draws must be positive".into()));
        }
        Ok(Self {
            node: 0,
            beta,
            sigma,
            intercept,
            method,
            tau0: 0.0,
            rhat: None,
        })
    }

    pub fn with_node(mut self, node: usize) -> Self {
        self.node = node;
        self
    }

    pub fn num_draws(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_predictors(&self) -> usize {
        self.beta.ncols()
    }

    pub fn mean_beta(&self) -> DVector<f64> {
        self.beta.row_mean().transpose()
    }

    pub fn mean_intercept(&self) -> f64 {
        self.intercept.mean()
    }

    /// Linear predictors `α_s + X β_s`, one column per draw (n × S).
    pub fn fits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut f = x * self.beta.transpose();
        for (s, mut col) in f.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.intercept[s]);
        }
        f
    }

    /// Draw dump: `draw,sigma,beta_1..beta_D`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["draw".to_string(), "sigma".to_string()];
        header.extend((1..=self.num_predictors()).map(|j| format!("beta_{j}")));
        w.write_record(&header)?;
        for s in 0..self.num_draws() {
            let mut rec = vec![(s + 1).to_string(), format!("{:e}", self.sigma[s])];
            rec.extend(self.beta.row(s).iter().map(|b| format!("{b:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Settings for [`fit_horseshoe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeConfig {
    /// Scale of the half-Cauchy prior on the global shrinkage τ.
    pub tau0: f64,
    /// Expected number of nonzero coefficients; when set, τ₀ is derived
    /// from it with [`tau0_from_p0`] and the sample SD of the response.
    pub p0: Option<f64>,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    /// Holds (λ, τ) fixed instead of sampling them. Only for checking the
    /// sampler against the conjugate Gaussian posterior.
    #[serde(skip)]
    pub frozen_scales: Option<(f64, f64)>,
}

impl Default for HorseshoeConfig {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            p0: None,
            warmup: 1000,
            draws: 1000,
            seed: 0,
            frozen_scales: None,
        }
    }
}

impl HorseshoeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < MIN_DRAWS {
            return Err(Error::InvalidParameter(format!(
                "draws must be at least {MIN_DRAWS}, got {}",
                self.draws
            )));
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if let Some(p0) = self.p0 {
            if !(p0 > 0.0) {
                return Err(Error::InvalidParameter(format!("p0 must be positive, got {p0}")));
            }
        }
        Ok(())
    }
}

/// `τ₀ = p₀ / (D − p₀) · σ / √N`.
pub fn tau0_from_p0(p0: f64, d: usize, sigma: f64, n: usize) -> Result<f64> {
    if !(p0 > 0.0) || p0 >= d as f64 {
        return Err(Error::InvalidParameter(format!(
            "p0 must lie in (0, D) = (0, {d}), got {p0}"
        )));
    }
    if !(sigma > 0.0) || n == 0 {
        return Err(Error::InvalidParameter("sigma must be positive and N >= 1".into()));
    }
    Ok(p0 / (d as f64 - p0) * sigma / (n as f64).sqrt())
}

pub(crate) fn check_regression_shapes(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::InvalidParameter(format!(
            "response has {} rows, design has {}",
            y.len(),
            x.nrows()
        )));
    }
    if y.len() < 2 {
        return Err(Error::InvalidData("need at least two observations".into()));
    }
    Ok(())
}
