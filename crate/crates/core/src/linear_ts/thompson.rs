use std::fmt::Write as _;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LinkFunction, SpectralHistory};
use crate::geometry::{best_action, ActionSet};
use crate::priors::{condition, ConditionOptions, LinearPrior, ObsModel, PosteriorState};
use crate::{Error, Result};

/// Exploration threshold formula: linear rewards or a GLM link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdVariant {
    /// `C d⁴ log t log(4/rε) / (r² ε²)`.
    Linear,
    /// `C M_χ² d³ log(4/rε) / (r² m_χ⁴ ε²)`.
    Glm { link: LinkFunction },
}

/// Spectral-exploration level after which Thompson sampling is BIC.
pub fn gamma_threshold(d: usize, t: f64, r: f64, eps: f64, c: f64, variant: ThresholdVariant) -> Result<f64> {
    if d == 0 || !(t >= 2.0) || !(r > 0.0 && r <= 1.0) || !(eps > 0.0 && eps <= 2.0) || !(c > 0.0) {
        return Err(Error::invalid("need d ≥ 1, t ≥ 2, r ∈ (0,1], ε ∈ (0,2], C > 0"));
    }
    let df = d as f64;
    let log_term = (4.0 / (r * eps)).ln();
    Ok(match variant {
        ThresholdVariant::Linear => c * df.powi(4) * t.ln() * log_term / (r * r * eps * eps),
        ThresholdVariant::Glm { link } => {
            let (m, big_m) = link.constants();
            c * big_m * big_m * df.powi(3) * log_term / (r * r * m.powi(4) * eps * eps)
        }
    })
}

/// Draws `ℓ̃` from the posterior and recommends `best_action(ℓ̃)`.
pub fn thompson_step<R: Rng + ?Sized>(posterior: &PosteriorState, actions: &ActionSet, rng: &mut R) -> Result<(usize, DVector<f64>)> {
    let draw = posterior.sample(rng)?;
    Ok((best_action(actions, draw.as_slice()), draw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    Thompson,
    /// Fixed action indices, one per step.
    Schedule { actions: Vec<usize> },
    /// Best action under the posterior mean.
    Greedy,
}

/// Round-robin over action indices `0..n`, repeated to `len` steps.
pub fn round_robin(n: usize, len: usize) -> Vec<usize> {
    (0..len).map(|t| t % n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub condition: ConditionOptions,
    /// Posterior draws averaged when a greedy policy needs a mean that the
    /// representation does not give exactly.
    pub mean_samples: usize,
    /// Record `γ(t)` in every step summary (one eigen-solve per step).
    pub track_gamma: bool,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions { condition: ConditionOptions::default(), mean_samples: 2000, track_gamma: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub time: usize,
    pub action_index: usize,
    pub gamma: Option<f64>,
    pub posterior_mean: Option<Vec<f64>>,
    /// Thompson draw behind the recommendation.
    pub draw: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Transcript {
    /// The true reward vector; for audits only.
    pub ell_star: DVector<f64>,
    pub history: SpectralHistory,
    pub summaries: Vec<StepSummary>,
}

impl Transcript {
    /// `time,action_index,action,reward,gamma` with `;`-joined action vectors.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,action_index,action,reward,gamma\n");
        for (s, sum) in self.history.steps().iter().zip(&self.summaries) {
            let a: Vec<String> = s.action.iter().map(|x| x.to_string()).collect();
            let g = sum.gamma.map(|g| g.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", s.time, s.action_index, a.join(";"), s.reward, g);
        }
        out
    }
}

/// Draws `ℓ*` from the prior once and plays `horizon` steps of the policy.
pub fn run_episode<R: Rng + ?Sized>(
    prior: &LinearPrior,
    actions: &ActionSet,
    obs: &ObsModel,
    policy: &PolicySpec,
    horizon: usize,
    rng: &mut R,
    opts: &EpisodeOptions,
) -> Result<Transcript> {
    if actions.dim() != prior.dim() {
        return Err(Error::invalid("action and prior dimensions differ"));
    }
    if let PolicySpec::Schedule { actions: sched } = policy {
        if sched.len() < horizon {
            return Err(Error::invalid(format!("schedule has {} steps, horizon is {horizon}", sched.len())));
        }
        if sched.iter().any(|&i| i >= actions.len()) {
            return Err(Error::invalid("schedule refers to a missing action"));
        }
    }
    obs.validate()?;
    let ell_star = prior.sample(rng)?;
    let mut history = SpectralHistory::new(prior.dim());
    let mut summaries = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let (idx, mean, draw) = match policy {
            PolicySpec::Schedule { actions: sched } => (sched[t], None, None),
            PolicySpec::Thompson => {
                let post = condition(prior, &history, obs, &opts.condition, rng)?;
                let (i, d) = thompson_step(&post, actions, rng)?;
                (i, post.mean_exact(), Some(d))
            }
            PolicySpec::Greedy => {
                let post = condition(prior, &history, obs, &opts.condition, rng)?;
                let mean = match post.mean_exact() {
                    Some(m) => m,
                    None => {
                        let mut m = DVector::zeros(prior.dim());
                        for _ in 0..opts.mean_samples.max(1) {
                            m += post.sample(rng)?;
                        }
                        m / opts.mean_samples.max(1) as f64
                    }
                };
                (best_action(actions, mean.as_slice()), Some(mean), None)
            }
        };
        let a = actions.get(idx);
        let reward = obs.observe(rng, a.dot(&ell_star));
        history.push(idx, a, reward)?;
        summaries.push(StepSummary {
            time: t + 1,
            action_index: idx,
            gamma: opts.track_gamma.then(|| history.spectral_floor()),
            posterior_mean: mean.map(|m| m.iter().copied().collect()),
            draw: draw.map(|d| d.iter().copied().collect()),
        });
    }
    Ok(Transcript { ell_star, history, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConvexBody, UnitActionSet};
    use crate::priors::GaussianPosterior;
    use crate::rng::derive_stream;
    use nalgebra::DMatrix;

    #[test]
    fn threshold_examples() {
        let eps = 2f64.sqrt();
        let g = gamma_threshold(2, 100.0, 1.0, eps, 1.0, ThresholdVariant::Linear).unwrap();
        let oracle = 16.0 * 100f64.ln() * (4.0 / eps).ln() / 2.0;
        assert!((g - oracle).abs() < 1e-12 && (g - 38.30).abs() < 0.01, "{g}");
        let e = std::f64::consts::E;
        let g1 = gamma_threshold(1, e, 1.0, 4.0 / e, 1.0, ThresholdVariant::Linear).unwrap();
        assert!((g1 - e * e / 16.0).abs() < 1e-12);
        for d in 1..5 {
            let t = 50.0;
            let lin = gamma_threshold(d, t, 0.5, 0.7, 3.0, ThresholdVariant::Linear).unwrap();
            let glm = gamma_threshold(d, t, 0.5, 0.7, 3.0, ThresholdVariant::Glm { link: LinkFunction::Identity }).unwrap();
            assert!((glm - lin / (d as f64 * t.ln())).abs() < 1e-9 * lin);
        }
        assert!(gamma_threshold(2, 1.5, 1.0, 1.0, 1.0, ThresholdVariant::Linear).is_err());
        assert!(gamma_threshold(2, 10.0, 1.0, 1.0, 0.0, ThresholdVariant::Linear).is_err());
    }

    #[test]
    fn point_mass_posterior_picks_its_best_action() {
        let acts = UnitActionSet::axes(2, false).unwrap();
        let post = PosteriorState::ExactGaussian(GaussianPosterior {
            mean: DVector::from_row_slice(&[1.0, 0.0]),
            cov: DMatrix::zeros(2, 2),
            factor: DMatrix::zeros(2, 0),
        });
        let mut rng = derive_stream(1, 0);
        for _ in 0..100 {
            assert_eq!(thompson_step(&post, &acts, &mut rng).unwrap().0, 0);
        }
    }

    fn frequencies(acts: &ActionSet, n: usize, seed: u64) -> Vec<f64> {
        let prior = LinearPrior::standard_gaussian(2);
        let post = condition(&prior, &SpectralHistory::new(2), &ObsModel::Noiseless, &ConditionOptions::default(), &mut derive_stream(0, 0)).unwrap();
        let mut rng = derive_stream(seed, 0);
        let mut counts = vec![0.0; acts.len()];
        for _ in 0..n {
            counts[thompson_step(&post, acts, &mut rng).unwrap().0] += 1.0 / n as f64;
        }
        counts
    }

    #[test]
    fn symmetric_gaussian_frequencies() {
        let two = UnitActionSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        for f in frequencies(&two, 10_000, 2) {
            assert!((f - 0.5).abs() < 0.01 + 1e-12, "{f}");
        }
        let four = UnitActionSet::axes(2, true).unwrap();
        for f in frequencies(&four, 10_000, 3) {
            assert!((f - 0.25).abs() < 0.015, "{f}");
        }
    }

    #[test]
    fn schedule_episode_reaches_gram_identity() {
        let prior = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let acts = UnitActionSet::axes(2, false).unwrap();
        let m = 6;
        let policy = PolicySpec::Schedule { actions: round_robin(2, 2 * m) };
        let tr = run_episode(&prior, &acts, &ObsModel::Noiseless, &policy, 2 * m, &mut derive_stream(4, 0), &EpisodeOptions::default()).unwrap();
        assert!((tr.history.spectral_floor() - m as f64).abs() < 1e-9);
        assert!(tr.to_csv().starts_with("time,action_index,action,reward,gamma\n1,0,1;0,"));
        let short = PolicySpec::Schedule { actions: vec![0] };
        assert!(run_episode(&prior, &acts, &ObsModel::Noiseless, &short, 2, &mut derive_stream(4, 0), &EpisodeOptions::default()).is_err());
    }

    #[test]
    fn greedy_after_full_information_plays_best_action() {
        // one noiseless look at ℓ ∈ ℝ¹ pins it down exactly
        let prior = LinearPrior::standard_gaussian(1);
        let acts = ActionSet::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        for seed in 0..20 {
            let tr = run_episode(&prior, &acts, &ObsModel::Noiseless, &PolicySpec::Greedy, 5, &mut derive_stream(5, seed), &EpisodeOptions::default()).unwrap();
            let best = best_action(&acts, tr.ell_star.as_slice());
            assert!(tr.summaries[1..].iter().all(|s| s.action_index == best));
        }
    }

    #[test]
    fn empty_horizon_gives_empty_transcript() {
        let prior = LinearPrior::standard_gaussian(2);
        let acts = UnitActionSet::axes(2, false).unwrap();
        let tr = run_episode(&prior, &acts, &ObsModel::Gaussian { sigma: 1.0 }, &PolicySpec::Thompson, 0, &mut derive_stream(6, 0), &EpisodeOptions::default()).unwrap();
        assert!(tr.history.is_empty() && tr.summaries.is_empty());
    }

    #[test]
    fn spectral_floor_is_monotone_along_thompson_episode() {
        let prior = LinearPrior::standard_gaussian(3);
        let acts = UnitActionSet::axes(3, true).unwrap();
        let tr = run_episode(&prior, &acts, &ObsModel::Gaussian { sigma: 1.0 }, &PolicySpec::Thompson, 60, &mut derive_stream(7, 0), &EpisodeOptions::default()).unwrap();
        assert!(tr.summaries.windows(2).all(|w| w[1].gamma.unwrap() >= w[0].gamma.unwrap() - 1e-12));
    }
}
