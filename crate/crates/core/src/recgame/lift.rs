use serde::Serialize;

use super::game::GameSpec;
use super::solve::PaddedPolicy;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftPair {
    pub a: usize,
    pub b: usize,
    /// `E[(θ̃_A − θ̃_B)·1{π̂ = A}]` summed over scenarios.
    pub gain: f64,
    /// `p·λ_A − d(1−p)·q(A)`.
    pub bound: f64,
}

/// Mixture of a padded policy with the padding distribution `q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftedStrategy {
    pub p: f64,
    /// `q(A) = λ_A / λ_j`.
    pub q: Vec<f64>,
    /// Per-scenario recommendation probabilities of the lift.
    pub probs: Vec<Vec<f64>>,
    pub pairs: Vec<LiftPair>,
    pub pass: bool,
}

/// Smallest mixing probability for which the lift is incentive compatible.
pub fn lift_threshold(d: usize, total: f64) -> f64 {
    d as f64 / (d as f64 + total)
}

/// Follows `policy` with probability `p` and otherwise recommends `A ~ q`.
///
/// Action values are sums of at most `d` atom means, so every difference is
/// at least `−d`; that is where the `d(1−p)q(A)` term comes from.
pub fn bic_lift(policy: &PaddedPolicy, game: &GameSpec, p: f64, d: usize) -> Result<LiftedStrategy> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("mixing probability must lie in [0, 1]"));
    }
    if policy.probs.len() != game.scenarios.len() || policy.padding.len() != game.rec_menu.len() {
        return Err(Error::invalid("policy dimensions do not match the game"));
    }
    let total: f64 = policy.padding.iter().sum();
    if total <= 0.0 {
        return Err(Error::LiftUndefined);
    }
    let threshold = lift_threshold(d, total);
    if p < threshold * (1.0 - 1e-12) {
        return Err(Error::PreconditionViolation(format!("p = {p} is below d/(d + λ) = {threshold}")));
    }
    let q: Vec<f64> = policy.padding.iter().map(|l| l / total).collect();
    let probs: Vec<Vec<f64>> = policy.probs.iter().map(|row| row.iter().zip(&q).map(|(x, qa)| p * x + (1.0 - p) * qa).collect()).collect();
    let mut pairs = Vec::with_capacity(game.rec_menu.len() * game.resp_menu.len());
    for a in 0..game.rec_menu.len() {
        for b in 0..game.resp_menu.len() {
            pairs.push(LiftPair { a, b, gain: game.gain(&probs, a, b), bound: p * policy.padding[a] - d as f64 * (1.0 - p) * q[a] });
        }
    }
    let pass = pairs.iter().all(|r| r.bound >= -1e-12 && r.gain >= r.bound - 1e-12);
    Ok(LiftedStrategy { p, q, probs, pairs, pass })
}
