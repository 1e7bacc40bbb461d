use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::margin::posterior_action_stats;
use crate::geometry::{best_action, ActionSet, ConvexBody};
use crate::linear_ts::SpectralHistory;
use crate::priors::{condition, ConditionOptions, LinearPrior, ObsModel};
use crate::rng::child_seed;
use crate::stats::{fit_line, replicate, LineFit, RunningStats, Z99};
use crate::{Error, Result};

/// Two-step instance on which Thompson sampling's second recommendation is not BIC.
#[derive(Debug, Clone)]
pub struct Cx1Instance {
    pub prior: LinearPrior,
    pub actions: ActionSet,
}

impl Cx1Instance {
    /// `N(0, I₂)` prior with actions `(1, 0)`, `(−1, 0)`, `(1.8, 0.6)`.
    pub fn standard() -> Self {
        Cx1Instance {
            prior: LinearPrior::standard_gaussian(2),
            actions: ActionSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.8, 0.6]]).expect("static"),
        }
    }

    /// Change of basis `B` with `B·(1.8, 0.6) = e₂`, so every action is unit norm.
    pub fn reparameterization() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 0.0, 5.0 / 3.0])
    }

    /// Same instance under `A ↦ B A`, `ℓ ↦ B^{-T} ℓ`; every reward is unchanged.
    pub fn unit_reparameterized() -> Self {
        let b = Self::reparameterization();
        let b_inv = b.clone().try_inverse().expect("invertible");
        let cov = b_inv.transpose() * &b_inv;
        Cx1Instance {
            prior: LinearPrior::gaussian(cov).expect("positive definite"),
            actions: Self::standard().actions.transformed(&b).expect("static"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cx1SubCase {
    /// Index of the first recommendation `A^(1)`.
    pub first_action: usize,
    pub freq: f64,
    /// `E[p̂_1·(μ̂_3 − μ̂_1) | A^(1)]`.
    pub margin: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cx1Report {
    pub replications: u64,
    /// `E[(θ_3 − θ_1)·1{A^(2) = A_1}]`.
    pub margin: f64,
    pub se: f64,
    /// `P̂[A^(2) = A_1]`.
    pub cond_freq: f64,
    /// `E[θ_3 − θ_1 | A^(2) = A_1]` as the ratio of the two estimates.
    pub conditional_margin: f64,
    pub direct_margin: f64,
    pub direct_se: f64,
    pub subcases: Vec<Cx1SubCase>,
    /// `margin − z·se > 0`.
    pub positive: bool,
    /// The `A^(1) = A_3` sub-case is zero within its interval.
    pub neutral_subcase: bool,
}

/// Simulates two Thompson steps with noiseless feedback and exact Gaussian posteriors.
pub fn run_counterexample_1(replications: u64, seed: u64) -> Result<Cx1Report> {
    run_counterexample_1_on(&Cx1Instance::standard(), replications, seed)
}

pub fn run_counterexample_1_on(inst: &Cx1Instance, replications: u64, seed: u64) -> Result<Cx1Report> {
    if replications < 2 {
        return Err(Error::invalid("need at least two replications"));
    }
    let opts = ConditionOptions::default();
    // layout: margin | direct | freq | sub-case margins ×3 | sub-case indicators ×3
    let acc = replicate(seed, replications, || [RunningStats::default(); 9], |rng, _, acc| {
        let ell = inst.prior.sample(rng)?;
        let first = best_action(&inst.actions, inst.prior.sample(rng)?.as_slice());
        let a = inst.actions.get(first);
        let mut h = SpectralHistory::new(2);
        h.push(first, a, a.dot(&ell))?;
        let post = condition(&inst.prior, &h, &ObsModel::Noiseless, &opts, rng)?;
        let (p, mu) = posterior_action_stats(&post, &inst.actions, 0, rng)?;
        let term = p[0] * (mu[2] - mu[0]);
        acc[0].push(term);
        let rec = best_action(&inst.actions, post.sample(rng)?.as_slice());
        let theta: Vec<f64> = inst.actions.vectors().iter().map(|v| v.dot(&ell)).collect();
        acc[1].push(if rec == 0 { theta[2] - theta[0] } else { 0.0 });
        acc[2].push(p[0]);
        acc[3 + first].push(term);
        for k in 0..3 {
            acc[6 + k].push(if k == first { 1.0 } else { 0.0 });
        }
        Ok(())
    })?;
    let se = acc[0].std_error().expect("two replications");
    let subcases: Vec<Cx1SubCase> = (0..3)
        .map(|k| Cx1SubCase { first_action: k, freq: acc[6 + k].mean(), margin: acc[3 + k].mean(), se: acc[3 + k].std_error() })
        .collect();
    let neutral = subcases[2].se.is_some_and(|s| subcases[2].margin.abs() <= Z99 * s);
    Ok(Cx1Report {
        replications,
        margin: acc[0].mean(),
        se,
        cond_freq: acc[2].mean(),
        conditional_margin: acc[0].mean() / acc[2].mean(),
        direct_margin: acc[1].mean(),
        direct_se: acc[1].std_error().expect("two replications"),
        positive: acc[0].mean() - Z99 * se > 0.0,
        neutral_subcase: neutral,
        subcases,
    })
}

/// Biased box `[−0.5, 1]^{d−1} × [−1, 1]`.
pub fn biased_box(d: usize) -> Result<ConvexBody> {
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    let mut lower = vec![-0.5; d];
    let mut upper = vec![1.0; d];
    lower[d - 1] = -1.0;
    upper[d - 1] = 1.0;
    ConvexBody::boxed(lower, upper)
}

/// `A_1 = (1, …, 1, 0)/(2√d)`.
pub fn tail_action(d: usize) -> DVector<f64> {
    let mut a = DVector::from_element(d, 0.5 / (d as f64).sqrt());
    a[d - 1] = 0.0;
    a
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cx2Row {
    pub d: usize,
    /// `E[(1/10 − ⟨ℓ*, A_1⟩)₊]`.
    pub tail: f64,
    pub tail_se: f64,
    /// Estimate below `1/replications`; reported as that bound and left out of the fit.
    pub censored: bool,
    pub mean: f64,
    pub mean_se: f64,
    /// `(d − 1)/(8d)`.
    pub closed_form_mean: f64,
    pub mean_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cx2Report {
    pub replications: u64,
    pub rows: Vec<Cx2Row>,
    /// Least squares of `ln tail` on `d` over uncensored rows.
    pub fit: Option<LineFit>,
    pub pass: bool,
}

pub const CX2_MIN_R2: f64 = 0.9;

/// Tail probe for the uniform prior on the biased box scaled by `1/√d`.
pub fn decay_probe_counterexample_2(dims: &[usize], replications: u64, seed: u64) -> Result<Cx2Report> {
    if replications < 2 {
        return Err(Error::invalid("need at least two replications"));
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &d in dims {
        let prior = LinearPrior::uniform(&biased_box(d)?, 1.0 / (d as f64).sqrt())?;
        let a1 = tail_action(d);
        let acc = replicate(child_seed(seed, &format!("d={d}")), replications, || [RunningStats::default(); 2], |rng, _, acc| {
            let x = prior.sample(rng)?.dot(&a1);
            acc[0].push((0.1 - x).max(0.0));
            acc[1].push(x);
            Ok(())
        })?;
        let floor = 1.0 / replications as f64;
        let censored = acc[0].mean() < floor;
        let closed = (d as f64 - 1.0) / (8.0 * d as f64);
        let mean_se = acc[1].std_error().expect("two replications");
        rows.push(Cx2Row {
            d,
            tail: if censored { floor } else { acc[0].mean() },
            tail_se: acc[0].std_error().expect("two replications"),
            censored,
            mean: acc[1].mean(),
            mean_se,
            closed_form_mean: closed,
            mean_ok: (acc[1].mean() - closed).abs() <= 3.0 * mean_se,
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| !r.censored).map(|r| (r.d as f64, r.tail.ln())).unzip();
    let fit = fit_line(&x, &y);
    let pass = fit.as_ref().is_some_and(|f| f.slope < 0.0 && f.r_squared >= CX2_MIN_R2) && rows.iter().all(|r| r.mean_ok);
    Ok(Cx2Report { replications, rows, fit, pass })
}
