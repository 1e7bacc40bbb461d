//! Simulation laboratory for Bayesian-incentive-compatible bandit exploration.
//!
//! The crate is organised bottom-up:
//!
//! - [`lp`]: a small dense simplex solver used for geometry and game LPs.
//! - [`geometry`]: convex bodies, unit action sets, widths and convex decompositions.
//! - [`priors`]: priors over the reward vector, posterior representations and
//!   Bayesian concentration harnesses.
//! - [`linear_ts`]: spectral-exploration histories, Thompson sampling, the GLM
//!   maximum-likelihood estimator and episode simulation.
//! - [`bic_audit`]: Monte-Carlo estimates of incentive-compatibility margins and
//!   the two counterexample drivers.
//! - [`semibandit`]: the combinatorial semibandit environment and the
//!   initial-exploration algorithm.
//! - [`recgame`]: the recommendation game, its minimax solution and padding
//!   certificates.
//! - [`runner`]: experiment configuration, seeding and result persistence.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod bic_audit;
pub mod error;
pub mod geometry;
pub mod linear_ts;
pub mod lp;
pub mod priors;
pub mod recgame;
pub mod rng;
pub mod runner;
pub mod semibandit;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{ConvexBody, PolytopeVertexSet, UnitActionSet};
pub use linear_ts::{LinkFunction, SpectralHistory};
pub use priors::{AtomPrior, LinearPrior, ObsModel, PosteriorState};
pub use rng::{derive_stream, Stream};
