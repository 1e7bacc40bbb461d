use serde::Serialize;

use crate::geometry::{best_action, ActionSet, ConvexBody, UnitActionSet};
use crate::priors::LinearPrior;
use crate::stats::{replicate, RunningStats};
use crate::{Error, Result};

/// Gap of action `i` over `j`, on the event that `i` is optimal for `ℓ*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMargin {
    pub j: usize,
    /// `E[⟨ℓ*, A_i − A_j⟩·1{A* = A_i}]`.
    pub unconditional: f64,
    pub unconditional_se: Option<f64>,
    /// `E[⟨ℓ*, A_i − A_j⟩ | A* = A_i]`; `None` when `A_i` was never optimal.
    pub conditional: Option<f64>,
    pub conditional_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityRow {
    pub i: usize,
    /// `P̂[A* = A_i]`.
    pub prob: f64,
    pub prob_se: Option<f64>,
    pub margins: Vec<PairMargin>,
}

/// Optimality probabilities and margins under the prior (no history).
pub fn prior_optimality_margins(prior: &LinearPrior, actions: &ActionSet, replications: u64, seed: u64) -> Result<Vec<OptimalityRow>> {
    let n = actions.len();
    if prior.dim() != actions.dim() {
        return Err(Error::invalid("action and prior dimensions differ"));
    }
    if replications == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    // layout: indicators | unconditional n×n | conditional n×n
    let acc = replicate(seed, replications, || vec![RunningStats::default(); n + 2 * n * n], |rng, _, acc| {
        let ell = prior.sample(rng)?;
        let theta: Vec<f64> = actions.vectors().iter().map(|a| a.dot(&ell)).collect();
        let star = best_action(actions, ell.as_slice());
        for i in 0..n {
            acc[i].push(if i == star { 1.0 } else { 0.0 });
            for j in 0..n {
                let gap = theta[i] - theta[j];
                acc[n + i * n + j].push(if i == star { gap } else { 0.0 });
            }
        }
        for j in 0..n {
            acc[n + n * n + star * n + j].push(theta[star] - theta[j]);
        }
        Ok(())
    })?;
    Ok((0..n)
        .map(|i| OptimalityRow {
            i,
            prob: acc[i].mean(),
            prob_se: acc[i].std_error(),
            margins: (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let u = &acc[n + i * n + j];
                    let c = &acc[n + n * n + i * n + j];
                    PairMargin {
                        j,
                        unconditional: u.mean(),
                        unconditional_se: u.std_error(),
                        conditional: (c.count > 0).then(|| c.mean()),
                        conditional_se: c.std_error(),
                    }
                })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub regularity: f64,
    pub separation: f64,
    /// `(rε/4)^d`.
    pub bound: f64,
    pub rows: Vec<OptimalityRow>,
    /// Every `P̂[A* = A_i] + 3·SE` reaches the bound.
    pub pass: bool,
}

/// Checks the optimality-probability floor `(rε/4)^d` under the uniform prior on `body`.
pub fn audit_corollary_margins(body: &ConvexBody, actions: &UnitActionSet, replications: u64, seed: u64) -> Result<CorollaryReport> {
    let prior = LinearPrior::uniform(body, 1.0)?;
    let eps = actions.separation()?;
    let r = body.regularity;
    let bound = (r * eps / 4.0).powi(body.dim() as i32);
    let rows = prior_optimality_margins(&prior, actions.as_set(), replications, seed)?;
    let pass = rows.iter().all(|row| row.prob + 3.0 * row.prob_se.unwrap_or(0.0) >= bound);
    Ok(CorollaryReport { regularity: r, separation: eps, bound, rows, pass })
}
