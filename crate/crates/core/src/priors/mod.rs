//! Priors over the reward vector and atom means, posterior representations
//! and the Bayesian concentration harnesses.

mod atoms;
mod harness;
mod linear;
mod posterior;

pub use atoms::{AssumptionReport, AtomPrior, BetaAtom};
pub use harness::{
    contraction_harness, scalar_subgaussian_estimate, subgaussian_norm_estimate, subgaussian_tail_check, ContractionReport,
    ScalarModel, TailCheck,
};
pub use linear::{LinearPrior, ObsModel, PriorSpec};
pub(crate) use linear::logistic;
pub use posterior::{condition, condition_on_statistics, ConditionOptions, GaussianPosterior, PosteriorState, SlicePosterior, TruncatedPosterior, WeightedCloud};
