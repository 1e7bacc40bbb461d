//! Spectral-exploration histories, Thompson sampling, the GLM estimator and
//! episode simulation.

mod glm;
mod history;
mod link;
mod probe;
mod thompson;

pub use glm::{glm_mle, least_squares, GlmFit, MAX_ITERATIONS, SCORE_TOL};
pub use history::{min_eigenvalue, SpectralHistory, Step};
pub use link::{link_constants, LinkFunction};
pub use probe::{calibrate_glm_constant, glm_frequency_probe, glm_gamma, glm_calibration_set, GLM_PROBE_C, GlmProbeConfig, GlmProbeReport};
pub use thompson::{
    gamma_threshold, round_robin, run_episode, thompson_step, EpisodeOptions, PolicySpec, StepSummary, ThresholdVariant, Transcript,
};
