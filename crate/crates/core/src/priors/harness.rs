use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::stats::{normal_pdf, normal_quantile, replicate, RunningStats, Z99};
use crate::{Error, Result};

/// Scalar prior, observation channel and estimator for the Bayesian Chernoff
/// harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarModel {
    /// `ξ ~ Beta(a, b)`, `n` Bernoulli(ξ) samples, estimator = empirical mean.
    BetaBernoulli { a: f64, b: f64, n: u64 },
    /// `ξ ~ N(0, prior_var)`, `n` samples `ξ + N(0, noise²)`, estimator = sample mean.
    GaussianMean { prior_var: f64, noise: f64, n: u64 },
    /// `ξ ~ U[0, 1]` observed exactly.
    Noiseless,
}

impl ScalarModel {
    /// Hoeffding radius for `n` samples in `[0, 1]` at level δ.
    pub fn hoeffding_epsilon(n: u64, delta: f64) -> f64 {
        ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
    }

    /// Draws `(ξ, estimator, posterior sample)`.
    fn replicate_once<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64, f64)> {
        match *self {
            ScalarModel::BetaBernoulli { a, b, n } => {
                let prior = Beta::new(a, b).map_err(|e| Error::invalid(e.to_string()))?;
                let xi: f64 = prior.sample(rng);
                let k = Binomial::new(n, xi).map_err(|e| Error::invalid(e.to_string()))?.sample(rng) as f64;
                let post = Beta::new(a + k, b + n as f64 - k).map_err(|e| Error::invalid(e.to_string()))?;
                Ok((xi, k / n as f64, post.sample(rng)))
            }
            ScalarModel::GaussianMean { prior_var, noise, n } => {
                let xi = prior_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let nf = n as f64;
                // the sample mean is sufficient: x̄ ~ N(ξ, noise²/n)
                let xbar = xi + noise / nf.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let prec = 1.0 / prior_var + nf / (noise * noise);
                let mean = (nf / (noise * noise)) * xbar / prec;
                let draw = mean + prec.powf(-0.5) * rng.sample::<f64, _>(StandardNormal);
                Ok((xi, xbar, draw))
            }
            ScalarModel::Noiseless => {
                let xi: f64 = rng.random();
                Ok((xi, xi, xi))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionReport {
    pub epsilon: f64,
    pub delta: f64,
    pub replications: u64,
    /// Empirical `P[|θ̂ − ξ| ≥ ε]`.
    pub hypothesis_frequency: f64,
    /// Empirical `P[|ξ̂ − ξ| ≥ 2ε]` for a posterior draw `ξ̂`.
    pub frequency: f64,
    /// 99% CI half-width of `frequency`.
    pub halfwidth: f64,
    pub pass: bool,
}

/// Estimates the posterior `2ε`-tail frequency and checks it against `2δ`.
///
/// The estimator's own `(ε, δ)` guarantee is validated on the same
/// replications first; a violation is reported as a precondition failure.
pub fn contraction_harness(model: &ScalarModel, epsilon: f64, delta: f64, replications: u64, seed: u64) -> Result<ContractionReport> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || replications < 2 {
        return Err(Error::invalid("need ε > 0, δ ∈ (0,1) and at least two replications"));
    }
    let (hyp, conc) = replicate(
        seed,
        replications,
        || (RunningStats::default(), RunningStats::default()),
        |rng, _, acc| {
            let (xi, est, draw) = model.replicate_once(rng)?;
            acc.0.push(f64::from((est - xi).abs() >= epsilon));
            acc.1.push(f64::from((draw - xi).abs() >= 2.0 * epsilon));
            Ok(())
        },
    )?;
    let hw = |s: &RunningStats| Z99 * s.std_error().unwrap_or(0.0).max((s.mean() * (1.0 - s.mean()) / s.count as f64).sqrt());
    if hyp.mean() > delta + hw(&hyp) {
        return Err(Error::PreconditionViolation(format!(
            "estimator misses ε = {epsilon} with frequency {} > δ = {delta}",
            hyp.mean()
        )));
    }
    let halfwidth = hw(&conc);
    Ok(ContractionReport {
        epsilon,
        delta,
        replications,
        hypothesis_frequency: hyp.mean(),
        frequency: conc.mean(),
        halfwidth,
        pass: conc.mean() <= 2.0 * delta + halfwidth,
    })
}

/// Empirical lower-bound certificate for the subgaussian norm: the maximum
/// over directions and `t ∈ {±0.5, ±1, ±2}/σ̂` of `√(2 log Ê[e^{tX}] / t²)`.
pub fn subgaussian_norm_estimate(samples: &[Vec<f64>], directions: &[Vec<f64>]) -> Result<f64> {
    if directions.is_empty() {
        return Err(Error::invalid("at least one direction required"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let mut best: f64 = 0.0;
    for u in directions {
        let xs: Vec<f64> = samples.iter().map(|s| s.iter().zip(u).map(|(a, b)| a * b).sum()).collect();
        best = best.max(scalar_subgaussian_estimate(&xs));
    }
    Ok(best)
}

pub fn scalar_subgaussian_estimate(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for g in [0.5, 1.0, 2.0, -0.5, -1.0, -2.0] {
        let t = g / sd;
        // log-mean-exp with a max shift
        let top = xs.iter().map(|x| t * x).fold(f64::NEG_INFINITY, f64::max);
        let lme = top + (xs.iter().map(|x| (t * x - top).exp()).sum::<f64>() / n).ln();
        if lme > 0.0 {
            best = best.max((2.0 * lme / (t * t)).sqrt());
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCheck {
    pub delta: f64,
    /// Monte-Carlo `E[|X|·1_E]` for the upper-tail event of probability δ.
    pub empirical: f64,
    pub empirical_se: f64,
    /// Closed form `φ(z_δ)`.
    pub analytic: f64,
    /// `3δ√(log(1/δ))`.
    pub bound: f64,
    pub pass: bool,
}

/// Worst-case event check for a standard normal `X`: the event `E` with
/// `P[E] = δ` maximising `E[|X|·1_E]` is the tail `{|X| ≥ z}`, which by
/// symmetry has the same value as the upper tail `{X ≥ z_δ}` used here.
pub fn subgaussian_tail_check(delta: f64, samples: u64, seed: u64) -> Result<TailCheck> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("δ must lie in (0, 1)"));
    }
    let z = normal_quantile(1.0 - delta);
    let s = replicate(seed, samples, RunningStats::default, |rng, _, acc| {
        let x: f64 = rng.sample(StandardNormal);
        acc.push(if x >= z { x.abs() } else { 0.0 });
        Ok(())
    })?;
    let bound = 3.0 * delta * (1.0 / delta).ln().sqrt();
    let se = s.std_error().unwrap_or(0.0);
    Ok(TailCheck {
        delta,
        empirical: s.mean(),
        empirical_se: se,
        analytic: normal_pdf(z),
        bound,
        pass: s.mean() - Z99 * se <= bound && normal_pdf(z) <= bound,
    })
}
