//! The full estimator: standardize, fit a reference posterior for every
//! node, select its neighbourhood, symmetrize with the or-rule and assemble
//! partial correlations and a positive-definite precision matrix.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble, or_rule_symmetrize, AssemblyConfig, CoefficientMatrix, EstimatedGraph, OrRuleReport,
    PdReport, PrecisionSymmetrization,
};
use crate::error::{Error, Result};
use crate::model::{standardize, DataMatrix};
use crate::posterior::{fit_bayes_boot, fit_horseshoe, HorseshoeConfig, PosteriorDraws, PosteriorMethod};
use crate::projection::{project_fits, psis_loo_weights, select, KHAT_WARN, DecisionRule, ProjectedDraws, SelectionOptions, SelectionPath};
use crate::rng::{derive_seed, tag};

/// In auto mode a Bayesian-bootstrap reference is replaced by the horseshoe
/// when more than this fraction of observations have Pareto k̂ above
/// [`KHAT_WARN`], i.e. when its leave-one-out estimates are unreliable.
pub const AUTO_KHAT_FRACTION: f64 = 0.01;

/// Largest n for which the exact leave-one-out projection is allowed.
pub const EXACT_LOO_MAX_N: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    /// Bayesian bootstrap when `n ≥ 2(p − 1)`, horseshoe otherwise or when
    /// the bootstrap draws fail the PSIS diagnostic.
    #[default]
    Auto,
    Horseshoe,
    BayesBoot,
}

impl std::str::FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "horseshoe" => Ok(Self::Horseshoe),
            "bayes-boot" => Ok(Self::BayesBoot),
            _ => Err(Error::InvalidParameter(format!(
                "unknown method `{s}` (expected auto, horseshoe or bayes-boot)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: MethodChoice,
    pub tau0: f64,
    pub p0: Option<f64>,
    pub warmup: usize,
    pub draws: usize,
    pub rule: DecisionRule,
    pub max_size: Option<usize>,
    pub eps_pd: f64,
    pub max_pd_iter: usize,
    pub exact_loo: bool,
    pub seed: u64,
    /// Worker threads for node fits; 0 uses the global pool.
    pub threads: usize,
    pub standardize: bool,
    pub symmetrization: PrecisionSymmetrization,
}

impl Default for FitConfig {
    fn default() -> Self {
        let hs = HorseshoeConfig::default();
        let asm = AssemblyConfig::default();
        Self {
            method: MethodChoice::Auto,
            tau0: hs.tau0,
            p0: hs.p0,
            warmup: hs.warmup,
            draws: hs.draws,
            rule: DecisionRule::default(),
            max_size: None,
            eps_pd: asm.eps_pd,
            max_pd_iter: asm.max_pd_iter,
            exact_loo: false,
            seed: 0,
            threads: 0,
            standardize: true,
            symmetrization: asm.symmetrization,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.horseshoe(0).validate()?;
        self.rule.validate()?;
        if !(self.eps_pd > 0.0 && self.eps_pd.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps_pd must be positive, got {}", self.eps_pd)));
        }
        Ok(())
    }

    /// Posterior used for a design with `n` rows and `d` predictors.
    pub fn resolve_method(&self, n: usize, d: usize) -> PosteriorMethod {
        match self.method {
            MethodChoice::Horseshoe => PosteriorMethod::Horseshoe,
            MethodChoice::BayesBoot => PosteriorMethod::BayesianBootstrap,
            MethodChoice::Auto if n >= 2 * d && n > d + 2 => PosteriorMethod::BayesianBootstrap,
            MethodChoice::Auto => PosteriorMethod::Horseshoe,
        }
    }

    fn horseshoe(&self, seed: u64) -> HorseshoeConfig {
        HorseshoeConfig {
            tau0: self.tau0,
            p0: self.p0,
            warmup: self.warmup,
            draws: self.draws,
            seed,
            frozen_scales: None,
        }
    }

    fn assembly(&self) -> AssemblyConfig {
        AssemblyConfig {
            symmetrization: self.symmetrization,
            eps_pd: self.eps_pd,
            max_pd_iter: self.max_pd_iter,
        }
    }
}

/// Seed for node `i`.
pub fn node_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &[tag::NODE, i as u64])
}

/// Response column `i` and the remaining columns as design.
pub fn node_design(data: &DataMatrix, i: usize) -> (DVector<f64>, DMatrix<f64>) {
    let x = data.values();
    let keep: Vec<usize> = (0..x.ncols()).filter(|&j| j != i).collect();
    (x.column(i).into_owned(), x.select_columns(&keep))
}

/// Design column `c` of node `i` is data column `c` if `c < i`, else `c + 1`.
fn to_node_index(i: usize, c: usize) -> usize {
    if c < i {
        c
    } else {
        c + 1
    }
}

fn to_design_index(i: usize, j: usize) -> usize {
    if j < i {
        j
    } else {
        j - 1
    }
}

/// One node's reference posterior, selection and chosen projection.
#[derive(Debug, Clone)]
pub struct NodeFit {
    pub draws: PosteriorDraws,
    pub path: SelectionPath,
    pub projected: ProjectedDraws,
    /// Auto mode abandoned the bootstrap reference for this node.
    pub fallback: bool,
}

impl NodeFit {
    /// Row of Λ: posterior-mean projected coefficients placed at the data
    /// column of each selected predictor, zero elsewhere.
    pub fn coefficient_row(&self) -> Vec<f64> {
        row_from_projection(self.draws.node, self.draws.num_predictors() + 1, &self.projected)
    }

    /// Chosen neighbours as data column indices.
    pub fn neighbours(&self) -> Vec<usize> {
        let i = self.draws.node;
        self.path.chosen_support().iter().map(|&c| to_node_index(i, c)).collect()
    }
}

fn row_from_projection(i: usize, p: usize, proj: &ProjectedDraws) -> Vec<f64> {
    let mut row = vec![0.0; p];
    for (k, v) in proj.support.iter().zip(proj.mean_beta().iter()) {
        row[to_node_index(i, *k)] = *v;
    }
    row
}

/// Reference fit and selection for node `i` on `data` as given.
pub fn fit_single_node(data: &DataMatrix, i: usize, config: &FitConfig) -> Result<NodeFit> {
    fit_node_inner(data, i, config).map_err(|e| e.at_node(i))
}

fn fit_node_inner(data: &DataMatrix, i: usize, config: &FitConfig) -> Result<NodeFit> {
    let p = data.p();
    if i >= p {
        return Err(Error::InvalidParameter(format!("node {i} out of range for p = {p}")));
    }
    if p < 2 {
        return Err(Error::InvalidData("need at least two variables".into()));
    }
    let (y, x) = node_design(data, i);
    let seed = node_seed(config.seed, i);
    let mut draws = match config.resolve_method(x.nrows(), x.ncols()) {
        PosteriorMethod::Horseshoe => fit_horseshoe(&y, &x, &config.horseshoe(seed))?,
        PosteriorMethod::BayesianBootstrap => fit_bayes_boot(&y, &x, config.draws, seed)?,
    }
    .with_node(i);
    let mut fallback = false;
    if config.method == MethodChoice::Auto && draws.method == PosteriorMethod::BayesianBootstrap {
        let weights = psis_loo_weights(&draws, &y, &x)?;
        let bad = weights.khat.iter().filter(|k| **k > KHAT_WARN).count();
        if bad as f64 > AUTO_KHAT_FRACTION * x.nrows() as f64 {
            log::info!("node {i}: {bad} observations with k-hat > {KHAT_WARN} under the bootstrap; using the horseshoe");
            draws = fit_horseshoe(&y, &x, &config.horseshoe(seed))?.with_node(i);
            fallback = true;
        }
    }
    let options = SelectionOptions {
        max_size: config.max_size,
        rule: config.rule,
        exact_loo: config.exact_loo,
        seed,
    };
    let (path, projected) = select(&draws, &y, &x, &options)?;
    Ok(NodeFit {
        draws,
        path,
        projected,
        fallback,
    })
}

/// Per-node summary kept in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: usize,
    pub method: PosteriorMethod,
    pub fallback: bool,
    pub tau0: f64,
    pub chosen_size: usize,
    pub max_size: usize,
    pub neighbours: Vec<usize>,
    pub none_qualified: bool,
    pub degenerate_reference: bool,
    pub khat_warnings: usize,
    pub max_rhat: Option<f64>,
}

/// Everything needed to reproduce a fit, plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub version: String,
    pub config: FitConfig,
    pub n: usize,
    pub p: usize,
    pub standardized_input: bool,
    pub nodes: Vec<NodeSummary>,
    pub or_rule: OrRuleReport,
    pub pd_report: PdReport,
    pub edge_count: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct GgmFit {
    pub graph: EstimatedGraph,
    pub nodes: Vec<NodeFit>,
    /// Λ after the or-rule.
    pub lambda: CoefficientMatrix,
    pub manifest: FitManifest,
}

impl GgmFit {
    pub fn paths(&self) -> impl Iterator<Item = &SelectionPath> {
        self.nodes.iter().map(|n| &n.path)
    }
}

/// Runs the full estimator. Output depends only on `data` and `config`.
pub fn fit_ggm(data: &DataMatrix, config: &FitConfig) -> Result<GgmFit> {
    config.validate()?;
    if config.exact_loo && data.n() > EXACT_LOO_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "exact leave-one-out projection is limited to n <= {EXACT_LOO_MAX_N} (n = {})",
            data.n()
        )));
    }
    if config.threads == 0 {
        return fit_ggm_inner(data, config);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| fit_ggm_inner(data, config))
}

fn fit_ggm_inner(input: &DataMatrix, config: &FitConfig) -> Result<GgmFit> {
    let start = Instant::now();
    let standardized;
    let data = if config.standardize && !input.is_standardized() {
        standardized = standardize(input)?;
        &standardized
    } else {
        input
    };
    let p = data.p();

    let nodes: Vec<NodeFit> = (0..p)
        .into_par_iter()
        .map(|i| fit_single_node(data, i, config))
        .collect::<Result<_>>()?;

    let mut raw = DMatrix::zeros(p, p);
    for node in &nodes {
        for (j, v) in node.coefficient_row().into_iter().enumerate() {
            raw[(node.draws.node, j)] = v;
        }
    }
    let lambda = CoefficientMatrix::new(raw)?;

    let (lambda, or_rule) = or_rule_symmetrize(&lambda, |i, forced| {
        let node = &nodes[i];
        let (_, x) = node_design(data, i);
        let mut support = node.projected.support.clone();
        for c in forced.iter().map(|&j| to_design_index(i, j)) {
            if !support.contains(&c) {
                support.push(c);
            }
        }
        let proj = project_fits(&x, &node.draws.fits(&x), &node.draws.sigma, &support)?;
        Ok(row_from_projection(i, p, &proj))
    })?;

    let graph = assemble(&lambda, data, &config.assembly())?;

    let summaries = nodes
        .iter()
        .map(|nf| NodeSummary {
            node: nf.draws.node,
            method: nf.draws.method,
            fallback: nf.fallback,
            tau0: nf.draws.tau0,
            chosen_size: nf.path.chosen_size,
            max_size: nf.path.max_size(),
            neighbours: nf.neighbours(),
            none_qualified: nf.path.none_qualified,
            degenerate_reference: nf.path.degenerate_reference,
            khat_warnings: nf.path.khat_warnings(),
            max_rhat: nf
                .draws
                .rhat
                .as_ref()
                .map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        })
        .collect();

    let manifest = FitManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        n: data.n(),
        p,
        standardized_input: input.is_standardized(),
        nodes: summaries,
        or_rule,
        pd_report: graph.pd_report.clone(),
        edge_count: graph.edges.len(),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(GgmFit {
        graph,
        nodes,
        lambda,
        manifest,
    })
}
