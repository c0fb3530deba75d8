//! Synthetic ground truth: AR(1), AR(2), cluster, random and scale-free
//! precision matrices, and multivariate-normal sampling from them.
//!
//! Random-pattern precision matrices are drawn from an ordinary Wishart
//! (Bartlett construction, `max(df, p + 2)` degrees of freedom), restricted
//! to the sampled pattern, and pushed back into the positive-definite cone
//! with [`nearest_pd_fixed_pattern`]. This approximates a G-Wishart draw:
//! the pattern is exact, the magnitudes are only roughly Wishart-like.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assembly::nearest_pd_fixed_pattern;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{precision_to_pcor, DataMatrix, EdgeSet, PartialCorrelationMatrix, PrecisionMatrix};
use crate::rng::{self, tag, Rng};

/// Entries of Ω with magnitude at or below this are treated as structural zeros.
pub const PATTERN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Ar1,
    Ar2,
    Cluster,
    Random,
    ScaleFree,
}

impl Structure {
    pub const ALL: [Structure; 5] = [
        Structure::Ar1,
        Structure::Ar2,
        Structure::Cluster,
        Structure::Random,
        Structure::ScaleFree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Ar1 => "ar1",
            Structure::Ar2 => "ar2",
            Structure::Cluster => "cluster",
            Structure::Random => "random",
            Structure::ScaleFree => "scale-free",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Structure::ALL
            .into_iter()
            .find(|st| st.as_str() == s || (s == "scale_free" && *st == Structure::ScaleFree))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown structure `{s}` (expected ar1, ar2, cluster, random or scale-free)"
                ))
            })
    }
}

/// Everything needed to regenerate a [`TrueModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub structure: Structure,
    pub p: usize,
    /// AR(1) correlation.
    pub rho: f64,
    /// AR(2) band values.
    pub lag1: f64,
    pub lag2: f64,
    /// Edge probability for `random`; within-block probability for `cluster`.
    pub edge_prob: f64,
    pub df: usize,
    pub seed: u64,
}

impl GraphSpec {
    /// Defaults used for the high-dimensional structures.
    pub fn new(structure: Structure, p: usize, seed: u64) -> Self {
        Self {
            structure,
            p,
            rho: 0.7,
            lag1: 0.5,
            lag2: 0.25,
            edge_prob: match structure {
                Structure::Cluster => DEFAULT_CLUSTER_EDGE_PROB,
                _ => 0.1,
            },
            df: 3,
            seed,
        }
    }

    pub fn generate(&self) -> Result<TrueModel> {
        match self.structure {
            Structure::Ar1 => gen_ar1(self.p, self.rho),
            Structure::Ar2 => gen_ar2(self.p, self.lag1, self.lag2),
            Structure::Random => gen_random(self.p, self.edge_prob, self.df, self.seed),
            Structure::Cluster => gen_cluster_with(self.p, self.df, self.edge_prob, self.seed),
            Structure::ScaleFree => gen_scale_free(self.p, self.df, self.seed),
        }
    }
}

/// Within-block edge probability for [`gen_cluster`].
pub const DEFAULT_CLUSTER_EDGE_PROB: f64 = 0.2;

/// A generated truth: precision Ω, the matching unit-diagonal covariance Σ,
/// and the edge set read off Ω.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub structure: Structure,
    pub omega: PrecisionMatrix,
    pub sigma: DMatrix<f64>,
    pub adjacency: EdgeSet,
    pub seed: u64,
}

impl TrueModel {
    pub fn p(&self) -> usize {
        self.omega.dim()
    }

    pub fn pcor(&self) -> PartialCorrelationMatrix {
        precision_to_pcor(&self.omega).expect("generated precision is positive definite")
    }

    /// Rescales a positive definite Ω so that Σ = Ω⁻¹ has unit diagonal.
    fn from_raw_precision(structure: Structure, raw: DMatrix<f64>, seed: u64) -> Result<Self> {
        let raw_sigma = linalg::spd_inverse(&raw)?;
        let p = raw.nrows();
        let d: Vec<f64> = (0..p).map(|i| raw_sigma[(i, i)].sqrt()).collect();
        let mut omega = DMatrix::from_fn(p, p, |i, j| raw[(i, j)] * d[i] * d[j]);
        linalg::symmetrize(&mut omega);
        let mut sigma = DMatrix::from_fn(p, p, |i, j| raw_sigma[(i, j)] / (d[i] * d[j]));
        linalg::symmetrize(&mut sigma);
        sigma.fill_diagonal(1.0);
        let adjacency = EdgeSet::from_pattern(&omega, PATTERN_TOL);
        Ok(Self {
            structure,
            omega: PrecisionMatrix::new(omega)?,
            sigma,
            adjacency,
            seed,
        })
    }
}

/// AR(1): `Σ_ij = rho^|i−j|`. Ω is tridiagonal and written down directly.
pub fn gen_ar1(p: usize, rho: f64) -> Result<TrueModel> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|rho| must be below 1, got {rho}")));
    }
    let scale = 1.0 / (1.0 - rho * rho);
    let mut omega = DMatrix::zeros(p, p);
    for i in 0..p {
        let interior = i > 0 && i + 1 < p;
        omega[(i, i)] = if interior { (1.0 + rho * rho) * scale } else { scale };
        if i + 1 < p {
            omega[(i, i + 1)] = -rho * scale;
            omega[(i + 1, i)] = -rho * scale;
        }
    }
    TrueModel::from_raw_precision(Structure::Ar1, omega, 0)
}

/// AR(2)-style band: unit diagonal, `lag1` on the first off-diagonals,
/// `lag2` on the second.
pub fn gen_ar2(p: usize, lag1: f64, lag2: f64) -> Result<TrueModel> {
    if p < 3 {
        return Err(Error::InvalidParameter(format!("AR(2) needs p >= 3, got {p}")));
    }
    let omega = DMatrix::from_fn(p, p, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => lag1,
        2 => lag2,
        _ => 0.0,
    });
    let min_eigenvalue = linalg::min_eigenvalue(&omega);
    if !(min_eigenvalue > 0.0) {
        return Err(Error::NonPdConstruction { min_eigenvalue });
    }
    TrueModel::from_raw_precision(Structure::Ar2, omega, 0)
}

fn check_prob(edge_prob: f64) -> Result<()> {
    if edge_prob > 0.0 && edge_prob < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "edge probability must lie in (0, 1), got {edge_prob}"
        )))
    }
}

/// Wishart(df, I_p) draw via the Bartlett decomposition.
fn wishart_identity(p: usize, df: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new((df - i) as f64).expect("df > p - 1");
        l[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            l[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    &l * l.transpose()
}

fn precision_on_pattern(edges: &EdgeSet, df: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    let p = edges.p();
    let df = df.max(p + 2);
    let m = wishart_identity(p, df, rng);
    let (omega, _) = nearest_pd_fixed_pattern(&m, edges, 1e-6, 500)?;
    Ok(omega.into_inner())
}

/// Random pattern (each pair an edge with probability `edge_prob`) with
/// Wishart-derived magnitudes.
pub fn gen_random(p: usize, edge_prob: f64, df: usize, seed: u64) -> Result<TrueModel> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    check_prob(edge_prob)?;
    let mut rng = rng::stream(seed, &[tag::GRAPH]);
    let mut edges = EdgeSet::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random::<f64>() < edge_prob {
                edges.insert(i, j)?;
            }
        }
    }
    let omega = precision_on_pattern(&edges, df, &mut rng)?;
    TrueModel::from_raw_precision(Structure::Random, omega, seed)
}

/// `max{2, [p/20]}` with `[·]` rounding half to even.
pub fn cluster_count(p: usize) -> usize {
    ((p as f64 / 20.0).round_ties_even() as usize).max(2)
}

/// Contiguous blocks whose sizes differ by at most one.
pub fn cluster_blocks(p: usize) -> Vec<std::ops::Range<usize>> {
    let k = cluster_count(p);
    let (base, extra) = (p / k, p % k);
    let mut start = 0;
    (0..k)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

pub fn gen_cluster(p: usize, df: usize, seed: u64) -> Result<TrueModel> {
    gen_cluster_with(p, df, DEFAULT_CLUSTER_EDGE_PROB, seed)
}

/// Block-diagonal random structure; no edges between blocks.
pub fn gen_cluster_with(p: usize, df: usize, within_prob: f64, seed: u64) -> Result<TrueModel> {
    if p < 4 {
        return Err(Error::InvalidParameter(format!("cluster graphs need p >= 4, got {p}")));
    }
    check_prob(within_prob)?;
    let mut rng = rng::stream(seed, &[tag::GRAPH]);
    let mut edges = EdgeSet::empty(p);
    for block in cluster_blocks(p) {
        for i in block.clone() {
            for j in (i + 1)..block.end {
                if rng.random::<f64>() < within_prob {
                    edges.insert(i, j)?;
                }
            }
        }
    }
    let omega = precision_on_pattern(&edges, df, &mut rng)?;
    TrueModel::from_raw_precision(Structure::Cluster, omega, seed)
}

/// Barabási–Albert tree: every arriving node attaches to one existing node
/// chosen proportionally to its degree, giving exactly p − 1 edges.
pub fn barabasi_albert_tree(p: usize, rng: &mut Rng) -> EdgeSet {
    let mut edges = EdgeSet::empty(p);
    if p < 2 {
        return edges;
    }
    // Each edge contributes both endpoints, so a uniform pick from this list
    // is a degree-proportional pick.
    let mut endpoints = vec![0, 1];
    edges.insert(0, 1).expect("p >= 2");
    for new in 2..p {
        let target = endpoints[rng.random_range(0..endpoints.len())];
        edges.insert(new, target).expect("distinct nodes");
        endpoints.push(new);
        endpoints.push(target);
    }
    edges
}

pub fn gen_scale_free(p: usize, df: usize, seed: u64) -> Result<TrueModel> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    let mut rng = rng::stream(seed, &[tag::GRAPH]);
    let edges = barabasi_albert_tree(p, &mut rng);
    let omega = precision_on_pattern(&edges, df, &mut rng)?;
    TrueModel::from_raw_precision(Structure::ScaleFree, omega, seed)
}

/// `n` independent draws from N(0, Σ) as rows, via the Cholesky factor of Σ.
pub fn sample_mvn(model: &TrueModel, n: usize, seed: u64) -> Result<DataMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {n}")));
    }
    let p = model.p();
    let chol = model.sigma.clone().cholesky().ok_or(Error::Singular)?;
    let mut rng = rng::stream(seed, &[tag::DATA]);
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = z * chol.l().transpose();
    DataMatrix::unnamed(x)
}
