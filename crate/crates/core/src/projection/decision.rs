use serde::{Deserialize, Serialize};

use super::SelectionPath;
use crate::error::{Error, Result};
use crate::posterior::dirichlet_weights;
use crate::rng::{self, tag};

/// Stopping rule for the forward path: the smallest size whose utility is
/// within `Δu = delta_u_frac · (û_* − û₀)` of the reference with
/// probability at least `prob_threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub delta_u_frac: f64,
    pub prob_threshold: f64,
    /// Bayesian-bootstrap replicates.
    pub bootstrap: usize,
}

impl Default for DecisionRule {
    fn default() -> Self {
        Self {
            delta_u_frac: 0.10,
            prob_threshold: 0.10,
            bootstrap: 1000,
        }
    }
}

impl DecisionRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_u_frac >= 0.0 && self.delta_u_frac.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta_u_frac must be non-negative, got {}",
                self.delta_u_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.prob_threshold) {
            return Err(Error::InvalidParameter(format!(
                "prob_threshold must lie in [0, 1], got {}",
                self.prob_threshold
            )));
        }
        if self.bootstrap == 0 {
            return Err(Error::InvalidParameter("bootstrap replicates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub size: usize,
    /// Estimated `pr{u_* − u_k ≤ Δu}` for each size examined, in order.
    pub probabilities: Vec<f64>,
    pub delta_u: f64,
    pub none_qualified: bool,
    pub degenerate_reference: bool,
}

/// Applies the rule to a completed path. All sizes share one set of
/// Dirichlet weight vectors, drawn from the decision stream of `seed`.
pub fn decide_size(path: &SelectionPath, rule: &DecisionRule, seed: u64) -> Result<Decision> {
    rule.validate()?;
    let n = path.pointwise_ref.len();
    if path.pointwise.is_empty() || path.pointwise.iter().any(|p| p.len() != n) {
        return Err(Error::InvalidParameter("selection path lacks pointwise utilities".into()));
    }
    let gap = path.u_ref - path.u_null;
    let degenerate_reference = !(gap > 0.0);
    let delta_u = if degenerate_reference { 0.0 } else { rule.delta_u_frac * gap };

    let mut rng = rng::stream(seed, &[tag::DECISION]);
    let weights: Vec<Vec<f64>> = (0..rule.bootstrap).map(|_| dirichlet_weights(n, &mut rng)).collect();

    let mut probabilities = Vec::with_capacity(path.pointwise.len());
    for (k, lpd) in path.pointwise.iter().enumerate() {
        let d: Vec<f64> = path.pointwise_ref.iter().zip(lpd).map(|(r, l)| r - l).collect();
        let hits = weights
            .iter()
            .filter(|w| n as f64 * w.iter().zip(&d).map(|(wi, di)| wi * di).sum::<f64>() <= delta_u)
            .count();
        let pr = hits as f64 / rule.bootstrap as f64;
        probabilities.push(pr);
        if pr >= rule.prob_threshold {
            return Ok(Decision {
                size: k,
                probabilities,
                delta_u,
                none_qualified: false,
                degenerate_reference,
            });
        }
    }
    Ok(Decision {
        size: path.pointwise.len() - 1,
        probabilities,
        delta_u,
        none_qualified: true,
        degenerate_reference,
    })
}
