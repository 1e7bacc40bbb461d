//! Monte-Carlo audits of Bayesian incentive compatibility.
//!
//! Margins are estimated from per-replication i.i.d. terms so standard errors
//! are plain sample standard errors and parallel merges are exact.

mod corollary;
mod counterexamples;
mod margin;
mod report;
mod spectral;
mod wrapper;

pub use corollary::{audit_corollary_margins, prior_optimality_margins, CorollaryReport, OptimalityRow, PairMargin};
pub use counterexamples::{
    biased_box, decay_probe_counterexample_2, run_counterexample_1, run_counterexample_1_on, tail_action, Cx1Instance, Cx1Report,
    Cx1SubCase, Cx2Report, Cx2Row, CX2_MIN_R2,
};
pub use margin::{all_pairs, estimate_bic_margin, posterior_action_stats, BicExperiment};
pub use report::{AveragingCheck, BicReport, BicRow};
pub use spectral::{calibrate_spectral_constant, spectral_audit, SpectralAudit, SpectralAuditRow, SpectralInstance, DESK_SCALE_C};
pub use wrapper::{simulate_extreme_point_wrapper, WrappedSlot, WrappedTranscript};
