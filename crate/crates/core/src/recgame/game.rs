use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;

use crate::rng::derive_stream;
use crate::semibandit::SemibanditInstance;
use crate::{Error, Result};

/// Largest success-count product space enumerated exactly.
pub const ENUMERATION_LIMIT: u64 = 100_000;
pub const MIN_SCENARIOS: usize = 10;
const WEIGHT_TOL: f64 = 1e-12;

/// What the planner sees before moving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalSpec {
    /// `counts[i]` Bernoulli samples of atom `i` (zero for uninformed atoms).
    Samples { counts: Vec<u32> },
    /// Exact `θ_i` for every atom with `informed[i]`.
    Exact { informed: Vec<bool> },
}

impl SignalSpec {
    /// `n` samples of each atom in `atoms`.
    pub fn samples(d: usize, atoms: &[usize], n: u32) -> Self {
        let mut counts = vec![0; d];
        for &a in atoms {
            counts[a] = n;
        }
        SignalSpec::Samples { counts }
    }

    pub fn exact(d: usize, atoms: &[usize]) -> Self {
        let mut informed = vec![false; d];
        for &a in atoms {
            informed[a] = true;
        }
        SignalSpec::Exact { informed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub weight: f64,
    /// `θ̃_A` for every action of the instance.
    pub values: Vec<f64>,
    /// Success counts per atom when the scenario comes from enumeration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u32>>,
}

/// A discretised j-recommendation game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub j: usize,
    /// Action indices containing atom `j`.
    pub rec_menu: Vec<usize>,
    /// Action indices avoiding atom `j`.
    pub resp_menu: Vec<usize>,
    pub scenarios: Vec<Scenario>,
    /// Scenarios are i.i.d. draws with equal weights (so MC standard errors apply).
    pub sampled: bool,
    pub signal: Option<SignalSpec>,
}

impl GameSpec {
    /// Builds a game from explicit scenario values, for instances without a Beta prior.
    pub fn from_scenarios(j: usize, rec_menu: Vec<usize>, resp_menu: Vec<usize>, scenarios: Vec<Scenario>, sampled: bool) -> Result<Self> {
        let g = GameSpec { j, rec_menu, resp_menu, scenarios, sampled, signal: None };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rec_menu.is_empty() || self.resp_menu.is_empty() {
            return Err(Error::invalid("both menus must be nonempty"));
        }
        if self.scenarios.is_empty() {
            return Err(Error::invalid("game has no scenarios"));
        }
        let width = self.scenarios[0].values.len();
        let menus_ok = self.rec_menu.iter().chain(&self.resp_menu).all(|&k| k < width);
        if !menus_ok || self.rec_menu.iter().any(|k| self.resp_menu.contains(k)) {
            return Err(Error::invalid("menus must be disjoint action indices"));
        }
        if self.scenarios.iter().any(|s| s.values.len() != width || !(s.weight >= 0.0) || s.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("scenario values must be finite with nonnegative weights"));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("scenario weights sum to {total}")));
        }
        Ok(())
    }

    /// `Σ_s w_s (θ̃_A − θ̃_B)·π_s(A)` with `probs[s][a]` the probability of `rec_menu[a]`.
    pub fn gain(&self, probs: &[Vec<f64>], a: usize, b: usize) -> f64 {
        let (ka, kb) = (self.rec_menu[a], self.resp_menu[b]);
        self.scenarios.iter().zip(probs).map(|(s, p)| s.weight * (s.values[ka] - s.values[kb]) * p[a]).sum()
    }

    /// Returns a copy with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut g = self.clone();
        for s in &mut g.scenarios {
            for v in &mut s.values {
                *v *= c;
            }
        }
        g
    }
}

fn action_values(inst: &SemibanditInstance, atom_means: &[f64]) -> Vec<f64> {
    (0..inst.actions.len()).map(|k| inst.action_value(k, atom_means)).collect()
}

/// Scenario construction for atom `j` under the given signal.
///
/// Sample signals enumerate every success-count tuple (Beta–binomial weights)
/// when the product space has at most [`ENUMERATION_LIMIT`] points, and
/// otherwise draw `scenario_count` signals. Exact signals draw `θ` from the prior.
pub fn build_game(inst: &SemibanditInstance, j: usize, signal: &SignalSpec, scenario_count: usize, seed: u64) -> Result<GameSpec> {
    let d = inst.dim();
    if j >= d {
        return Err(Error::invalid("atom index out of range"));
    }
    let rec_menu = inst.containing(j).to_vec();
    let resp_menu = inst.avoiding(j);
    if resp_menu.is_empty() {
        return Err(Error::invalid(format!("every action contains atom {j}; the game has no response")));
    }
    let prior = &inst.prior.atoms;
    let mc_check = |n: usize| {
        if n < MIN_SCENARIOS {
            Err(Error::invalid(format!("scenario count must be at least {MIN_SCENARIOS}")))
        } else {
            Ok(())
        }
    };
    let (scenarios, sampled) = match signal {
        SignalSpec::Samples { counts } => {
            if counts.len() != d {
                return Err(Error::invalid("one sample count per atom required"));
            }
            let space = counts.iter().try_fold(1u64, |acc, &n| acc.checked_mul(n as u64 + 1));
            if space.is_some_and(|s| s <= ENUMERATION_LIMIT) {
                (enumerate(inst, counts), false)
            } else {
                mc_check(scenario_count)?;
                let w = 1.0 / scenario_count as f64;
                let mut out = Vec::with_capacity(scenario_count);
                for s in 0..scenario_count {
                    let mut rng = derive_stream(seed, s as u64);
                    let mut means = Vec::with_capacity(d);
                    for (atom, &n) in prior.iter().zip(counts) {
                        if n == 0 {
                            means.push(atom.mean());
                            continue;
                        }
                        let theta = draw_beta(atom.a, atom.b, &mut rng)?;
                        let k = Binomial::new(n as u64, theta).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng) as f64;
                        means.push((atom.a + k) / (atom.a + atom.b + n as f64));
                    }
                    out.push(Scenario { weight: w, values: action_values(inst, &means), counts: None });
                }
                (out, true)
            }
        }
        SignalSpec::Exact { informed } => {
            if informed.len() != d {
                return Err(Error::invalid("one informed flag per atom required"));
            }
            mc_check(scenario_count)?;
            let w = 1.0 / scenario_count as f64;
            let mut out = Vec::with_capacity(scenario_count);
            for s in 0..scenario_count {
                let mut rng = derive_stream(seed, s as u64);
                let mut means = Vec::with_capacity(d);
                for (atom, &known) in prior.iter().zip(informed) {
                    means.push(if known { draw_beta(atom.a, atom.b, &mut rng)? } else { atom.mean() });
                }
                out.push(Scenario { weight: w, values: action_values(inst, &means), counts: None });
            }
            (out, true)
        }
    };
    let g = GameSpec { j, rec_menu, resp_menu, scenarios, sampled, signal: Some(signal.clone()) };
    g.validate()?;
    Ok(g)
}

fn draw_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    Ok(Beta::new(a, b).map_err(|e| Error::invalid(e.to_string()))?.sample(rng))
}

fn enumerate(inst: &SemibanditInstance, counts: &[u32]) -> Vec<Scenario> {
    let prior = &inst.prior.atoms;
    // Beta–binomial log-pmf per atom and count
    let log_pmf: Vec<Vec<f64>> = prior
        .iter()
        .zip(counts)
        .map(|(p, &n)| {
            (0..=n)
                .map(|k| {
                    let (k, n) = (k as f64, n as f64);
                    ln_binomial(n as u64, k as u64) + ln_beta(p.a + k, p.b + n - k) - ln_beta(p.a, p.b)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut k = vec![0u32; counts.len()];
    loop {
        let mut lw = 0.0;
        let mut means = Vec::with_capacity(counts.len());
        for (i, p) in prior.iter().enumerate() {
            lw += log_pmf[i][k[i] as usize];
            means.push((p.a + k[i] as f64) / (p.a + p.b + counts[i] as f64));
        }
        out.push(Scenario { weight: lw.exp(), values: action_values(inst, &means), counts: Some(k.clone()) });
        // mixed-radix increment
        let mut i = 0;
        while i < k.len() && k[i] == counts[i] {
            k[i] = 0;
            i += 1;
        }
        if i == k.len() {
            break;
        }
        k[i] += 1;
    }
    // weights are exact up to rounding; renormalise so they sum to 1 at machine precision
    let total: f64 = out.iter().map(|s| s.weight).sum();
    for s in &mut out {
        s.weight /= total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_singletons() -> SemibanditInstance {
        SemibanditInstance::uniform(2, vec![vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn no_information_gives_prior_means() {
        let g = build_game(&two_singletons(), 1, &SignalSpec::samples(2, &[], 0), 0, 0).unwrap();
        assert_eq!(g.scenarios.len(), 1);
        assert_eq!(g.scenarios[0].values, vec![0.5, 0.5]);
    }

    #[test]
    fn single_sample_of_uniform_atom() {
        let g = build_game(&two_singletons(), 1, &SignalSpec::samples(2, &[1], 1), 0, 0).unwrap();
        assert_eq!(g.scenarios.len(), 2);
        for (s, want) in g.scenarios.iter().zip([1.0 / 3.0, 2.0 / 3.0]) {
            assert!((s.weight - 0.5).abs() < 1e-15);
            assert!((s.values[1] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn product_of_two_atoms() {
        let g = build_game(&two_singletons(), 1, &SignalSpec::samples(2, &[0, 1], 1), 0, 0).unwrap();
        assert_eq!(g.scenarios.len(), 4);
        assert!(g.scenarios.iter().all(|s| (s.weight - 0.25).abs() < 1e-15));
        assert!(!g.sampled);
    }

    #[test]
    fn beta_binomial_weights_sum_to_one() {
        let inst = SemibanditInstance::new(
            crate::priors::AtomPrior::new(vec![crate::priors::BetaAtom { a: 1.0, b: 2.0 }, crate::priors::BetaAtom { a: 1.0, b: 1.0 }], 1.0).unwrap(),
            vec![vec![0], vec![1]],
        )
        .unwrap();
        let g = build_game(&inst, 1, &SignalSpec::samples(2, &[0, 1], 7), 0, 0).unwrap();
        assert_eq!(g.scenarios.len(), 64);
        // P[k₀ = 0] = B(1, 9)/B(1, 2) = 2/9 and P[k₁ = 0] = 1/8
        let zero = g.scenarios.iter().find(|s| s.counts.as_deref() == Some(&[0, 0][..])).unwrap();
        assert!((zero.weight - 1.0 / 36.0).abs() < 1e-14);
    }

    #[test]
    fn too_few_sampled_scenarios() {
        let e = build_game(&two_singletons(), 1, &SignalSpec::exact(2, &[0, 1]), 5, 0);
        assert!(matches!(e, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn large_sample_spaces_switch_to_monte_carlo() {
        let g = build_game(&two_singletons(), 1, &SignalSpec::samples(2, &[0, 1], 400), 50, 1).unwrap();
        assert!(g.sampled);
        assert_eq!(g.scenarios.len(), 50);
        for s in &g.scenarios {
            assert!(s.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn full_menu_has_no_game() {
        let inst = SemibanditInstance::uniform(2, vec![vec![0, 1], vec![1]]).unwrap();
        assert!(build_game(&inst, 1, &SignalSpec::samples(2, &[], 0), 0, 0).is_err());
    }
}
