use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::report::{AveragingCheck, BicReport, BicRow};
use crate::geometry::{best_action, ActionSet};
use crate::linear_ts::{run_episode, EpisodeOptions, PolicySpec};
use crate::priors::{condition, condition_on_statistics, ConditionOptions, LinearPrior, ObsModel, PosteriorState};
use crate::stats::{replicate, RunningStats};
use crate::{Error, Result};

/// Relative slack on the spectral gate; rounding in unit actions costs ~1e-16.
const GATE_SLACK: f64 = 1.0 - 1e-9;

/// Everything needed to simulate Thompson sampling up to an audit time.
#[derive(Debug, Clone)]
pub struct BicExperiment {
    pub prior: LinearPrior,
    pub actions: ActionSet,
    pub obs: ObsModel,
    /// Policy for steps `1..t−1`.
    pub policy: PolicySpec,
    /// Posterior draws per inner batch when probabilities or means are not exact.
    pub n_inner: usize,
    pub condition: ConditionOptions,
    /// Weighted-cloud posteriors below this effective sample size are refused.
    pub min_ess: f64,
    /// Audit only replications with `γ(t−1)` at least this value.
    pub gamma_gate: Option<f64>,
    pub z: f64,
}

impl BicExperiment {
    pub fn new(prior: LinearPrior, actions: ActionSet, obs: ObsModel, policy: PolicySpec) -> Self {
        BicExperiment {
            prior,
            actions,
            obs,
            policy,
            n_inner: 2000,
            condition: ConditionOptions::default(),
            min_ess: 1000.0,
            gamma_gate: None,
            z: crate::stats::Z99,
        }
    }
}

/// `P^t[A* = A_i]` and `E^t[θ_i]` for every action.
///
/// Exact where the representation allows; otherwise the probabilities and the
/// means come from two independent batches of `n_inner` posterior draws, so
/// their product is unbiased for `p_i·μ_i` at any batch size.
pub fn posterior_action_stats<R: Rng + ?Sized>(
    post: &PosteriorState,
    actions: &ActionSet,
    n_inner: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = actions.len();
    let probs = match post.action_probabilities_exact(actions) {
        Some(p) => p,
        None => {
            let mut p = vec![0.0; n];
            for _ in 0..n_inner {
                let x = post.sample(rng)?;
                p[best_action(actions, x.as_slice())] += 1.0;
            }
            p.iter().map(|c| c / n_inner as f64).collect()
        }
    };
    let means = match post.mean_exact() {
        Some(m) => actions.vectors().iter().map(|a| a.dot(&m)).collect(),
        None => {
            let mut m = DVector::zeros(actions.dim());
            for _ in 0..n_inner {
                m += post.sample(rng)?;
            }
            m /= n_inner as f64;
            actions.vectors().iter().map(|a| a.dot(&m)).collect()
        }
    };
    Ok((probs, means))
}

/// Per-schedule sufficient statistics: play counts per action and the fixed Gram matrix.
struct Aggregate {
    counts: Vec<f64>,
    gram: DMatrix<f64>,
    floor: f64,
}

fn aggregate(exp: &BicExperiment, t: usize) -> Option<Aggregate> {
    let PolicySpec::Schedule { actions: sched } = &exp.policy else { return None };
    let fast = matches!(
        (&exp.prior, &exp.obs),
        (LinearPrior::Gaussian { .. }, ObsModel::Gaussian { .. })
            | (LinearPrior::Uniform { .. }, ObsModel::Gaussian { .. })
            | (LinearPrior::Uniform { .. }, ObsModel::Noiseless)
    );
    if !fast || sched.len() < t.saturating_sub(1) {
        return None;
    }
    let d = exp.actions.dim();
    let mut counts = vec![0.0; exp.actions.len()];
    for &k in &sched[..t - 1] {
        counts[k] += 1.0;
    }
    let mut gram = DMatrix::zeros(d, d);
    for (k, &c) in counts.iter().enumerate() {
        if c > 0.0 {
            let a = exp.actions.get(k);
            gram.ger(c, a, a, 1.0);
        }
    }
    let floor = crate::linear_ts::min_eigenvalue(&gram).max(0.0);
    Some(Aggregate { counts, gram, floor })
}

/// Monte-Carlo estimate of the BIC margins at time `t` for the given pairs.
///
/// Each replication draws `ℓ*`, simulates the policy for `t − 1` steps and
/// accumulates the Rao–Blackwellised term `p̂_i·(μ̂_i − μ̂_j)`, alongside the
/// conditional-form term `1{A^(t) = A_i}·(θ_i − θ_j)` from one Thompson draw.
pub fn estimate_bic_margin(exp: &BicExperiment, t: usize, pairs: &[(usize, usize)], replications: u64, seed: u64) -> Result<BicReport> {
    let n = exp.actions.len();
    if t == 0 || replications == 0 {
        return Err(Error::invalid("need t ≥ 1 and at least one replication"));
    }
    if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
        return Err(Error::invalid("pair refers to a missing action"));
    }
    if exp.n_inner == 0 {
        return Err(Error::invalid("n_inner must be positive"));
    }
    if exp.actions.dim() != exp.prior.dim() {
        return Err(Error::invalid("action and prior dimensions differ"));
    }
    let p = pairs.len();
    // layout: margins | direct | freq | averaging gaps | gate indicator
    let width = 2 * p + 2 * n + 1;
    let agg = aggregate(exp, t);
    if let (Some(a), Some(g)) = (&agg, exp.gamma_gate) {
        if a.floor < g * GATE_SLACK {
            return Err(Error::PreconditionViolation(format!("schedule reaches γ = {} < {g}", a.floor)));
        }
    }
    let episode_opts = EpisodeOptions { condition: exp.condition, mean_samples: exp.n_inner, track_gamma: false };
    let acc = replicate(seed, replications, || vec![RunningStats::default(); width], |rng, _, acc| {
        let (ell_star, post) = match &agg {
            Some(a) => {
                let ell = exp.prior.sample(rng)?;
                let mut response = DVector::zeros(exp.actions.dim());
                for (k, &c) in a.counts.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let act = exp.actions.get(k);
                    let mut sum = c * act.dot(&ell);
                    if let ObsModel::Gaussian { sigma } = exp.obs {
                        sum += sigma * c.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    }
                    response.axpy(sum, act, 1.0);
                }
                let post = condition_on_statistics(&exp.prior, &a.gram, &response, &exp.obs)?;
                (ell, post)
            }
            None => {
                let tr = run_episode(&exp.prior, &exp.actions, &exp.obs, &exp.policy, t - 1, rng, &episode_opts)?;
                if let Some(g) = exp.gamma_gate {
                    if tr.history.spectral_floor() < g * GATE_SLACK {
                        acc[width - 1].push(0.0);
                        return Ok(());
                    }
                }
                let post = condition(&exp.prior, &tr.history, &exp.obs, &exp.condition, rng)?;
                (tr.ell_star, post)
            }
        };
        if let PosteriorState::WeightedCloud(c) = &post {
            if c.ess < exp.min_ess {
                return Err(Error::PreconditionViolation(format!("posterior ESS {} below {}", c.ess, exp.min_ess)));
            }
        }
        acc[width - 1].push(1.0);
        let (probs, means) = posterior_action_stats(&post, &exp.actions, exp.n_inner, rng)?;
        let theta: Vec<f64> = exp.actions.vectors().iter().map(|a| a.dot(&ell_star)).collect();
        let rec = best_action(&exp.actions, post.sample(rng)?.as_slice());
        for (k, &(i, j)) in pairs.iter().enumerate() {
            acc[k].push(probs[i] * (means[i] - means[j]));
            acc[p + k].push(if rec == i { theta[i] - theta[j] } else { 0.0 });
        }
        let value: f64 = probs.iter().zip(&means).map(|(a, b)| a * b).sum();
        for i in 0..n {
            acc[2 * p + i].push(probs[i]);
            acc[2 * p + n + i].push(value - theta[i]);
        }
        Ok(())
    })?;
    let freq: Vec<f64> = (0..n).map(|i| acc[2 * p + i].mean()).collect();
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| BicRow::from_stats(t, (i, j), &acc[k], &acc[p + k], freq[i], exp.z))
        .collect();
    let gaps: Vec<(f64, Option<f64>)> = (0..n).map(|i| (acc[2 * p + n + i].mean(), acc[2 * p + n + i].std_error())).collect();
    let pass = gaps.iter().all(|(m, se)| m + 3.0 * se.unwrap_or(0.0) >= 0.0);
    Ok(BicReport {
        seed,
        config_hash: None,
        z: exp.z,
        t,
        replications,
        gated_fraction: acc[width - 1].mean(),
        action_freq: freq,
        rows,
        averaging: AveragingCheck { gaps, pass },
    })
}

/// All ordered pairs `(i, j)` with `i ≠ j`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConvexBody, UnitActionSet};
    use crate::linear_ts::round_robin;

    fn two_arm() -> BicExperiment {
        let acts = UnitActionSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        BicExperiment::new(LinearPrior::standard_gaussian(2), acts.as_set().clone(), ObsModel::Noiseless, PolicySpec::Thompson)
    }

    #[test]
    fn identical_arms_have_zero_margin() {
        let r = estimate_bic_margin(&two_arm(), 1, &[(0, 0)], 1000, 1).unwrap();
        assert_eq!(r.rows[0].margin, 0.0);
        assert_eq!(r.rows[0].direct_margin, 0.0);
    }

    #[test]
    fn centered_prior_gives_zero_margin_at_t1() {
        // the recommendation at t = 1 is independent of ℓ*
        let mut e = two_arm();
        e.n_inner = 20;
        let r = estimate_bic_margin(&e, 1, &[(0, 1), (1, 0)], 100_000, 2).unwrap();
        for row in &r.rows {
            assert!(row.margin.abs() < 1e-15);
            assert!(row.direct_margin.abs() < 4.0 * row.direct_se.unwrap(), "{row:?}");
            assert_eq!(row.certified, Some(true));
        }
        assert!((r.action_freq.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn centered_uniform_prior_certifies_at_t1() {
        let acts = UnitActionSet::equally_spaced(5).unwrap();
        let prior = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let mut e = BicExperiment::new(prior, acts.as_set().clone(), ObsModel::Noiseless, PolicySpec::Thompson);
        e.n_inner = 200;
        let r = estimate_bic_margin(&e, 1, &all_pairs(5), 2000, 3).unwrap();
        assert!(r.all_certified());
        assert!(r.averaging.pass);
    }

    #[test]
    fn rao_blackwell_and_direct_forms_agree() {
        let acts = UnitActionSet::axes(2, true).unwrap();
        let prior = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let mut e = BicExperiment::new(prior, acts.as_set().clone(), ObsModel::Gaussian { sigma: 1.0 }, PolicySpec::Schedule { actions: round_robin(4, 10) });
        e.n_inner = 8;
        let r = estimate_bic_margin(&e, 7, &all_pairs(4), 40_000, 4).unwrap();
        for row in &r.rows {
            let comb = (row.se.unwrap().powi(2) + row.direct_se.unwrap().powi(2)).sqrt();
            assert!((row.margin - row.direct_margin).abs() < 4.0 * comb, "{row:?}");
        }
        assert!((r.action_freq.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn axis_symmetry_permutes_rows() {
        // rotation by 90° maps e1→e2→−e1→−e2; action order (e1, −e1, e2, −e2)
        let acts = UnitActionSet::axes(2, true).unwrap();
        let prior = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let mut e = BicExperiment::new(prior, acts.as_set().clone(), ObsModel::Gaussian { sigma: 1.0 }, PolicySpec::Schedule { actions: round_robin(4, 8) });
        e.n_inner = 8;
        let r = estimate_bic_margin(&e, 5, &all_pairs(4), 40_000, 5).unwrap();
        let rot = [2usize, 3, 1, 0];
        for row in &r.rows {
            let image = r.rows.iter().find(|x| x.i == rot[row.i] && x.j == rot[row.j]).unwrap();
            let comb = (row.se.unwrap().powi(2) + image.se.unwrap().powi(2)).sqrt();
            assert!((row.margin - image.margin).abs() < 4.0 * comb, "{row:?} vs {image:?}");
        }
    }

    #[test]
    fn single_replication_has_no_standard_error() {
        let r = estimate_bic_margin(&two_arm(), 1, &[(0, 1)], 1, 6).unwrap();
        assert!(r.rows[0].se.is_none() && r.rows[0].certified.is_none());
        assert!(r.to_csv().contains(",NA,"));
    }

    #[test]
    fn never_recommended_action_is_undefined() {
        // the zero action only ties on a null set
        let acts = ActionSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let mut e = BicExperiment::new(LinearPrior::standard_gaussian(2), acts, ObsModel::Noiseless, PolicySpec::Thompson);
        e.n_inner = 50;
        let r = estimate_bic_margin(&e, 1, &[(2, 0), (0, 2)], 500, 7).unwrap();
        assert!(r.rows[0].undefined_conditional);
        assert_eq!(r.rows[0].certified, None);
        assert!(!r.rows[1].undefined_conditional);
        assert!(r.to_csv().contains("undefined"));
    }
}
