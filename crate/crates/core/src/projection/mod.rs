//! Projection predictive selection for one node.
//!
//! Every reference draw `θ_s = (α_s, β_s, σ_s)` is projected onto a
//! submodel by minimizing the KL divergence between the two Gaussian
//! predictive distributions averaged over the observed design. For Gaussian
//! regression this is least squares of the reference fit `α_s + Xβ_s` on the
//! submodel columns (plus intercept), with
//! `σ⊥² = σ_s² + ‖f_s − f⊥_s‖² / n` and discrepancy `½ log(σ⊥² / σ_s²)`.

mod decision;
mod loo;
mod psis;
mod search;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use decision::{decide_size, Decision, DecisionRule};
pub use loo::{exact_loo_pointwise, loo_utility, reference_pointwise, LooUtility};
pub use psis::{gpd_fit, log_lik_matrix, psis_loo_weights, psis_smooth, LooWeights, KHAT_WARN};
pub use search::{default_max_size, forward_search, SearchPath};

use crate::error::{Error, Result};
use crate::linalg;
use crate::posterior::PosteriorDraws;

/// Projected draws on one support.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedDraws {
    /// Predictor indices (columns of the design), in the order given.
    pub support: Vec<usize>,
    /// S × k projected coefficients, columns in `support` order.
    pub beta_perp: DMatrix<f64>,
    pub intercept_perp: DVector<f64>,
    pub sigma_perp: DVector<f64>,
    /// Per-draw KL discrepancy.
    pub delta: DVector<f64>,
    /// n × S submodel fits.
    pub fitted: DMatrix<f64>,
}

impl ProjectedDraws {
    /// Mean discrepancy over draws.
    pub fn loss(&self) -> f64 {
        self.delta.mean()
    }

    /// Posterior-mean projected coefficients, in `support` order.
    pub fn mean_beta(&self) -> DVector<f64> {
        if self.beta_perp.ncols() == 0 {
            return DVector::zeros(0);
        }
        self.beta_perp.row_mean().transpose()
    }
}

/// `[1, X_support]`.
pub(crate) fn submodel_design(x: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), support.len() + 1, |i, c| {
        if c == 0 {
            1.0
        } else {
            x[(i, support[c - 1])]
        }
    })
}

fn check_support(x: &DMatrix<f64>, support: &[usize]) -> Result<()> {
    let d = x.ncols();
    let mut seen = vec![false; d];
    for &j in support {
        if j >= d || std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidParameter(format!(
                "support {support:?} is not a set of distinct predictors in 0..{d}"
            )));
        }
    }
    Ok(())
}

/// Projects reference fits (n × S, one column per draw) with residual SDs
/// `sigma` onto `support`. Rank-deficient designs use the minimum-norm
/// least-squares solution.
pub fn project_fits(
    x: &DMatrix<f64>,
    fits: &DMatrix<f64>,
    sigma: &DVector<f64>,
    support: &[usize],
) -> Result<ProjectedDraws> {
    check_support(x, support)?;
    let n = x.nrows();
    let design = submodel_design(x, support);
    let coef = linalg::lstsq_min_norm(&design, fits); // (k + 1) × S
    let fitted = &design * &coef;
    let s_count = fits.ncols();
    let mut sigma_perp = DVector::zeros(s_count);
    let mut delta = DVector::zeros(s_count);
    for s in 0..s_count {
        let rss: f64 = fits
            .column(s)
            .iter()
            .zip(fitted.column(s).iter())
            .map(|(f, g)| (f - g) * (f - g))
            .sum();
        let s2 = sigma[s] * sigma[s];
        let excess = rss / n as f64;
        sigma_perp[s] = (s2 + excess).sqrt();
        delta[s] = 0.5 * (excess / s2).ln_1p();
    }
    let coef_t = coef.transpose();
    Ok(ProjectedDraws {
        support: support.to_vec(),
        beta_perp: coef_t.columns(1, support.len()).into_owned(),
        intercept_perp: coef_t.column(0).into_owned(),
        sigma_perp,
        delta,
        fitted,
    })
}

/// Projection of a single draw. Returns (intercept⊥, β⊥, σ⊥, δ).
pub fn project_draw(
    beta: &DVector<f64>,
    intercept: f64,
    sigma: f64,
    x: &DMatrix<f64>,
    support: &[usize],
) -> Result<(f64, DVector<f64>, f64, f64)> {
    if beta.len() != x.ncols() {
        return Err(Error::InvalidParameter("coefficient length differs from design width".into()));
    }
    let f = (x * beta).add_scalar(intercept);
    let fits = DMatrix::from_column_slice(f.len(), 1, f.as_slice());
    let p = project_fits(x, &fits, &DVector::from_element(1, sigma), support)?;
    Ok((
        p.intercept_perp[0],
        p.beta_perp.row(0).transpose(),
        p.sigma_perp[0],
        p.delta[0],
    ))
}

/// Projects every reference draw onto `support`.
pub fn project(draws: &PosteriorDraws, x: &DMatrix<f64>, support: &[usize]) -> Result<ProjectedDraws> {
    project_fits(x, &draws.fits(x), &draws.sigma, support)
}

/// Mean KL discrepancy of the projection onto `support`.
pub fn projection_loss(draws: &PosteriorDraws, x: &DMatrix<f64>, support: &[usize]) -> Result<f64> {
    Ok(project(draws, x, support)?.loss())
}

/// Knobs for [`select`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    /// Largest submodel searched; `None` means [`default_max_size`].
    pub max_size: Option<usize>,
    pub rule: DecisionRule,
    /// Re-solve each projection without observation i when predicting it.
    pub exact_loo: bool,
    pub seed: u64,
}

/// Full record of one node's selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPath {
    pub node: usize,
    /// Predictor columns in the order the forward search added them.
    pub order: Vec<usize>,
    /// Projection loss for sizes `0..=order.len()`.
    pub loss_by_size: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub se: Vec<f64>,
    /// Pointwise LOO log predictive densities per size.
    pub pointwise: Vec<Vec<f64>>,
    pub u_ref: f64,
    pub pointwise_ref: Vec<f64>,
    pub u_null: f64,
    pub delta_u: f64,
    pub chosen_size: usize,
    /// Bootstrap estimate of `pr{u_* − u_k ≤ Δu}` per size.
    pub probabilities: Vec<f64>,
    /// No size met the threshold; the largest searched size was returned.
    pub none_qualified: bool,
    /// The reference did not beat the null model, so Δu was clamped to 0.
    pub degenerate_reference: bool,
    pub psis_khat: Vec<f64>,
}

impl SelectionPath {
    pub fn max_size(&self) -> usize {
        self.order.len()
    }

    pub fn chosen_support(&self) -> &[usize] {
        &self.order[..self.chosen_size]
    }

    /// Observations whose Pareto k̂ exceeds [`KHAT_WARN`].
    pub fn khat_warnings(&self) -> usize {
        self.psis_khat.iter().filter(|k| **k > KHAT_WARN).count()
    }

    /// `size,added,loss,u_hat,se,chosen`, where `added` names the predictor
    /// that entered at that size (`labels[j]` for design column j).
    pub fn write_csv<W: std::io::Write>(&self, out: W, labels: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["size", "added", "loss", "u_hat", "se", "chosen"])?;
        for k in 0..=self.max_size() {
            let added = match k {
                0 => String::new(),
                _ => labels.get(self.order[k - 1]).cloned().unwrap_or_else(|| (self.order[k - 1] + 1).to_string()),
            };
            w.write_record([
                k.to_string(),
                added,
                format!("{:e}", self.loss_by_size[k]),
                format!("{:e}", self.u_hat[k]),
                format!("{:e}", self.se[k]),
                u8::from(k == self.chosen_size).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `observation,khat`.
    pub fn write_khat_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["observation", "khat"])?;
        for (i, k) in self.psis_khat.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{k:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Forward search, LOO utilities along the path, and the size decision.
/// Returns the path and the projection at the chosen size.
pub fn select(
    draws: &PosteriorDraws,
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    options: &SelectionOptions,
) -> Result<(SelectionPath, ProjectedDraws)> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::InvalidParameter("response and design lengths differ".into()));
    }
    let max_size = options
        .max_size
        .unwrap_or_else(|| default_max_size(x.ncols(), n))
        .min(x.ncols());
    let fits = draws.fits(x);
    let weights = psis_loo_weights(draws, y, x)?;
    let pointwise_ref = reference_pointwise(&fits, &draws.sigma, &weights, y)?;
    let u_ref: f64 = pointwise_ref.iter().sum();

    let order = search::search_order(draws, x, max_size);
    let mut loss_by_size = Vec::with_capacity(max_size + 1);
    let mut u_hat = Vec::with_capacity(max_size + 1);
    let mut se = Vec::with_capacity(max_size + 1);
    let mut pointwise = Vec::with_capacity(max_size + 1);
    for k in 0..=order.len() {
        let proj = project_fits(x, &fits, &draws.sigma, &order[..k])?;
        let lpd = if options.exact_loo {
            exact_loo_pointwise(&proj, x, &fits, &draws.sigma, &weights, y)?
        } else {
            loo::pointwise_lpd(&proj, &weights, y)?
        };
        let util = LooUtility::from_pointwise(lpd);
        loss_by_size.push(proj.loss());
        u_hat.push(util.u_hat);
        se.push(util.se);
        pointwise.push(util.pointwise);
    }

    let mut path = SelectionPath {
        node: draws.node,
        order,
        loss_by_size,
        u_null: u_hat[0],
        u_hat,
        se,
        pointwise,
        u_ref,
        pointwise_ref,
        delta_u: 0.0,
        chosen_size: 0,
        probabilities: Vec::new(),
        none_qualified: false,
        degenerate_reference: false,
        psis_khat: weights.khat.clone(),
    };
    let decision = decide_size(&path, &options.rule, options.seed)?;
    path.delta_u = decision.delta_u;
    path.chosen_size = decision.size;
    path.probabilities = decision.probabilities;
    path.none_qualified = decision.none_qualified;
    path.degenerate_reference = decision.degenerate_reference;
    let chosen = project_fits(x, &fits, &draws.sigma, path.chosen_support())?;
    Ok((path, chosen))
}
