use rand_distr::{Beta, Distribution};
use serde::Serialize;
use statrs::function::beta::ln_beta;

use super::instance::SemibanditInstance;
use crate::stats::{replicate, RunningStats};
use crate::{Error, Result};

/// `P[ZEROS]` over `atoms`: `∏ B(a, b + N)/B(a, b)`.
pub fn zeros_probability(inst: &SemibanditInstance, n: u32, atoms: &[usize]) -> f64 {
    atoms
        .iter()
        .map(|&i| {
            let p = inst.prior.atoms[i];
            (ln_beta(p.a, p.b + n as f64) - ln_beta(p.a, p.b)).exp()
        })
        .product()
}

/// `ε_j`: every atom before `j` (in index order) has zero successes in its first `n` samples.
pub fn epsilon_j(inst: &SemibanditInstance, n: u32, j: usize) -> f64 {
    let before: Vec<usize> = (0..j.min(inst.dim())).collect();
    zeros_probability(inst, n, &before)
}

/// Monte-Carlo estimate of [`epsilon_j`] with its standard error.
pub fn epsilon_j_mc(inst: &SemibanditInstance, n: u32, j: usize, replications: u64, seed: u64) -> Result<(f64, f64)> {
    let betas = inst.prior.atoms[..j.min(inst.dim())]
        .iter()
        .map(|p| Beta::new(p.a, p.b).map_err(|e| Error::invalid(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let stats = replicate(seed, replications, RunningStats::default, |rng, _, acc| {
        // zero successes in n Bernoulli(θ) draws has probability (1 − θ)^n
        let hit = betas.iter().all(|b| {
            let theta: f64 = b.sample(rng);
            rand::Rng::random_bool(rng, (1.0 - theta).powi(n as i32))
        });
        acc.push(if hit { 1.0 } else { 0.0 });
        Ok(())
    })?;
    Ok((stats.mean(), stats.std_error().unwrap_or(0.0)))
}

/// Smallest `N ≥ guard·(20d/τ)^{1+α}·ln(20d/τ)`.
pub fn n_lower_bound(inst: &SemibanditInstance, guard: f64) -> Result<u64> {
    let tau = inst.prior.tau();
    if !(tau > 0.0) || !(guard > 0.0) {
        return Err(Error::invalid("τ and the guard factor must be positive"));
    }
    let x = 20.0 * inst.dim() as f64 / tau;
    Ok((guard * x.powf(1.0 + inst.prior.alpha) * x.ln()).ceil() as u64)
}

/// `E[θ_a | ZEROS]` over the explored atoms: `a/(a + b + N)` on explored atoms, the prior mean elsewhere.
pub fn zeros_posterior_mean(inst: &SemibanditInstance, n: u32, explored: &[usize], a: usize) -> f64 {
    let p = inst.prior.atoms[a];
    if explored.contains(&a) {
        p.a / (p.a + p.b + n as f64)
    } else {
        p.mean()
    }
}

pub fn zeros_posterior_means(inst: &SemibanditInstance, n: u32, explored: &[usize]) -> Vec<f64> {
    (0..inst.dim()).map(|a| zeros_posterior_mean(inst, n, explored, a)).collect()
}

/// Posterior-greedy action given ZEROS over `explored`.
pub fn greedy_after_zeros(inst: &SemibanditInstance, n: u32, explored: &[usize]) -> usize {
    inst.greedy(&zeros_posterior_means(inst, n, explored))
}

/// Atom means given the mixed signal `x = max(1{ZEROS}, y)`, `y ~ Ber(q)` independent.
pub fn mixed_signal_means(inst: &SemibanditInstance, n: u32, explored: &[usize], q: f64, x: bool) -> Vec<f64> {
    let eps = zeros_probability(inst, n, explored);
    (0..inst.dim())
        .map(|a| {
            let prior = inst.prior.atoms[a].mean();
            if !explored.contains(&a) {
                return prior;
            }
            let given_zeros = zeros_posterior_mean(inst, n, explored, a);
            let given_not = (prior - eps * given_zeros) / (1.0 - eps);
            if x {
                (eps * given_zeros + (1.0 - eps) * q * given_not) / (eps + (1.0 - eps) * q)
            } else {
                given_not
            }
        })
        .collect()
}

/// Exploration order: atom `j` is the smallest new atom of the greedy action after ZEROS on atoms `order[..j]`.
///
/// The first atom comes from the prior-greedy action.
pub fn sort_atoms(inst: &SemibanditInstance, n: u32) -> Result<Vec<usize>> {
    let d = inst.dim();
    let mut order = Vec::with_capacity(d);
    while order.len() < d {
        let g = greedy_after_zeros(inst, n, &order);
        match inst.actions[g].iter().find(|a| !order.contains(*a)) {
            Some(&a) => order.push(a),
            None => {
                return Err(Error::PreconditionViolation(format!(
                    "greedy action {:?} after ZEROS on {order:?} adds no new atom (N = {n} may be too small)",
                    inst.actions[g]
                )))
            }
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub atom: usize,
    /// `P[θ_a ≥ τ/(5d) | ZEROS]`, exact from the Beta CDF.
    pub prob: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Likelihood-ratio bound: `P[θ_a ≥ τ/(5d) | ZEROS] ≤ τ/(5d)` for every atom.
pub fn zeros_tail_check(inst: &SemibanditInstance, n: u64) -> Vec<TailCheck> {
    let bound = inst.prior.tau() / (5.0 * inst.dim() as f64);
    inst.prior
        .atoms
        .iter()
        .enumerate()
        .map(|(atom, p)| {
            let post = crate::priors::BetaAtom { a: p.a, b: p.b + n as f64 };
            let prob = 1.0 - post.cdf(bound);
            TailCheck { atom, prob, bound, pass: prob <= bound }
        })
        .collect()
}

/// `max_j ln(1/ε_j) / (d^{1+α} N^α)`, the constant the `ε_j` lower-bound shape needs.
pub fn epsilon_shape_ratio(inst: &SemibanditInstance, n: u32) -> f64 {
    let d = inst.dim() as f64;
    let alpha = inst.prior.alpha;
    let worst = -epsilon_j(inst, n, inst.dim() - 1).ln();
    worst / (d.powf(1.0 + alpha) * (n as f64).powf(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singletons(d: usize) -> SemibanditInstance {
        SemibanditInstance::uniform(d, (0..d).map(|i| vec![i]).collect()).unwrap()
    }

    #[test]
    fn epsilon_closed_forms() {
        let inst = singletons(3);
        assert_eq!(epsilon_j(&inst, 3, 0), 1.0);
        assert!((epsilon_j(&inst, 3, 1) - 0.25).abs() < 1e-14);
        assert!((epsilon_j(&inst, 3, 2) - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn epsilon_matches_monte_carlo() {
        let inst = SemibanditInstance::new(
            crate::priors::AtomPrior::new(vec![crate::priors::BetaAtom { a: 1.0, b: 2.0 }, crate::priors::BetaAtom { a: 0.5, b: 0.5 }, crate::priors::BetaAtom { a: 1.0, b: 1.0 }], 1.0)
                .unwrap(),
            vec![vec![0], vec![1], vec![2]],
        )
        .unwrap();
        for j in 1..3 {
            let exact = epsilon_j(&inst, 4, j);
            let (m, se) = epsilon_j_mc(&inst, 4, j, 40_000, 3).unwrap();
            assert!((m - exact).abs() < 3.0 * se, "j={j}: {m} vs {exact}");
        }
    }

    #[test]
    fn epsilon_is_nonincreasing() {
        let inst = singletons(4);
        for n in 1..20 {
            for j in 1..4 {
                assert!(epsilon_j(&inst, n, j) <= epsilon_j(&inst, n, j - 1));
                assert!(epsilon_j(&inst, n + 1, j) <= epsilon_j(&inst, n, j));
            }
        }
    }

    #[test]
    fn sample_size_formula() {
        let inst = singletons(2);
        assert_eq!(n_lower_bound(&inst, 1.0).unwrap(), 28045);
        assert_eq!(n_lower_bound(&inst, 1e-3).unwrap(), 29);
        assert_eq!(n_lower_bound(&inst, 2.0).unwrap(), 56090);
        let flat = SemibanditInstance::new(crate::priors::AtomPrior::uniform(2, 0.0).unwrap(), vec![vec![0], vec![1]]);
        // α = 0 would need P[θ < x] ≥ 1/e everywhere, which uniform atoms fail
        assert!(flat.is_err());
    }

    #[test]
    fn zeros_means() {
        let inst = singletons(3);
        assert_eq!(zeros_posterior_mean(&inst, 3, &[0], 2), 0.5);
        assert!((zeros_posterior_mean(&inst, 3, &[0], 0) - 0.2).abs() < 1e-15);
        let mut last = 1.0;
        for n in 0..50 {
            let m = zeros_posterior_mean(&inst, n, &[0], 0);
            assert!(m < last);
            last = m;
        }
    }

    #[test]
    fn greedy_after_zeros_examples() {
        let inst = singletons(2);
        assert_eq!(inst.actions[greedy_after_zeros(&inst, 3, &[0])], vec![1]);
        assert_eq!(greedy_after_zeros(&inst, 3, &[]), inst.greedy(&inst.prior_means()));
        let inst = SemibanditInstance::uniform(3, vec![vec![0], vec![1], vec![2], vec![0, 1]]).unwrap();
        assert_eq!(inst.actions[greedy_after_zeros(&inst, 3, &[0, 1])], vec![2]);
        assert_eq!(sort_atoms(&inst, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn mixed_signal_averages_back_to_prior() {
        let inst = singletons(3);
        let (n, explored) = (5, [0usize, 1]);
        let eps = zeros_probability(&inst, n, &explored);
        let q = eps;
        let px = eps + (1.0 - eps) * q;
        let one = mixed_signal_means(&inst, n, &explored, q, true);
        let zero = mixed_signal_means(&inst, n, &explored, q, false);
        for a in 0..3 {
            assert!((px * one[a] + (1.0 - px) * zero[a] - 0.5).abs() < 1e-14);
        }
        assert!(one[0] < 0.5 && zero[0] > 0.5);
    }

    #[test]
    fn tail_bound_holds_at_full_sample_size() {
        let inst = singletons(2);
        let n = n_lower_bound(&inst, 1.0).unwrap();
        assert!(zeros_tail_check(&inst, n).iter().all(|c| c.pass));
        assert!(zeros_tail_check(&inst, 1).iter().all(|c| !c.pass));
    }

    #[test]
    fn epsilon_shape_probe() {
        let kappa = epsilon_shape_ratio(&singletons(2), 4);
        assert!((kappa - 5f64.ln() / 16.0).abs() < 1e-14);
        for d in 2..=5 {
            for n in [4, 8, 16, 64, 256] {
                assert!(epsilon_shape_ratio(&singletons(d), n) <= kappa + 1e-15, "d={d} n={n}");
            }
        }
    }
}
