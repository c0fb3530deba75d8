//! Sparse Gaussian graphical models by projection predictive covariance
//! selection.
//!
//! Each variable is regressed on all others under a reference posterior
//! (horseshoe Gibbs sampler or Bayesian bootstrap). The posterior is
//! projected onto nested submodels found by forward search, and the
//! smallest submodel whose leave-one-out predictive utility is close enough
//! to the reference is kept. The node-wise neighbourhoods are symmetrized
//! with the or-rule and turned into partial correlations and a
//! positive-definite precision matrix with the selected sparsity pattern.
//!
//! [`pipeline::fit_ggm`] runs the whole estimator; [`generate`] builds
//! synthetic truths and [`evaluation`] scores estimates against them.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod assembly;
pub mod error;
pub mod evaluation;
pub mod generate;
pub mod io;
mod linalg;
pub mod model;
pub mod pipeline;
pub mod posterior;
pub mod projection;
pub mod rng;

pub use error::{Error, ErrorClass, Result};
pub use model::{DataMatrix, EdgeSet, PartialCorrelationMatrix, PrecisionMatrix};
pub use pipeline::{fit_ggm, FitConfig, GgmFit, MethodChoice};
