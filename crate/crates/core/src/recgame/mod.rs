//! The j-recommendation game.
//!
//! A signal-informed planner either recommends an action containing atom `j`
//! or does nothing; the agent answers with an action avoiding `j`. The planner's
//! payoff is the value difference of the two actions (zero after "do nothing").
//! Payoffs use posterior means of the signal, which gives the same value as
//! using `θ` directly by the tower property.

mod game;
mod lift;
mod solve;
mod sweep;

pub use game::{build_game, GameSpec, Scenario, SignalSpec, ENUMERATION_LIMIT, MIN_SCENARIOS};
pub use lift::{bic_lift, lift_threshold, LiftPair, LiftedStrategy};
pub use solve::{solve_minimax, verify_padding, GameSolution, PaddedPolicy, PaddingCertificate, PADDING_TOL};
pub use sweep::{
    easy_game_value, finite_sample_gap, infinite_sample_value, stage_values, EasyGameReport, GapCurve, GapRow, LambdaLower, StageValue,
};
