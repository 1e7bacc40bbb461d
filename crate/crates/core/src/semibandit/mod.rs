//! Combinatorial semibandit with independent Beta–Bernoulli atoms.
//!
//! Atoms are explored one at a time. Stage `j` first exploits a mixed signal
//! built from the event that every earlier atom returned only zeros, then runs
//! phases whose exploration probability grows geometrically at rate `1 + λ`,
//! following the padded policy of the stage's recommendation game.

mod algorithm;
mod audit;
mod instance;
mod zeros;

pub use algorithm::{
    prepare_algorithm1, run_algorithm1, Algorithm1Plan, ExplorationTranscript, PhaseLabel, PhaseRecord, PreparedAlgorithm, StagePlan, StepRecord,
};
pub use audit::{audit_transcript_bic, PhaseAuditRow, StageProbe, TranscriptAudit, MIN_CONDITIONING_COUNT};
pub use instance::{InstanceDoc, SemibanditInstance};
pub use zeros::{
    epsilon_j, epsilon_j_mc, epsilon_shape_ratio, greedy_after_zeros, mixed_signal_means, n_lower_bound, sort_atoms, zeros_posterior_mean,
    zeros_posterior_means, zeros_probability, zeros_tail_check, TailCheck,
};
