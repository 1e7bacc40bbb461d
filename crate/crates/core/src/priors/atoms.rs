use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::{Error, Result};

/// Beta(a, b) prior of one Bernoulli atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaAtom {
    pub a: f64,
    pub b: f64,
}

impl BetaAtom {
    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> f64 {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + 1.0))
    }

    /// `P[θ < x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(self.a, self.b, x)
        }
    }
}

/// Independent Beta priors over atom means with the declared tail exponent α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomPrior {
    pub atoms: Vec<BetaAtom>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub tau: f64,
    pub sigma2: f64,
    /// Smallest `P[θ_i < x] − exp(−x^{−α})` over atoms and the grid.
    pub worst_tail_slack: f64,
    pub worst_tail_at: (usize, f64),
    pub holds: bool,
}

impl AtomPrior {
    pub fn new(atoms: Vec<BetaAtom>, alpha: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("at least one atom required"));
        }
        if atoms.iter().any(|p| !(p.a > 0.0 && p.b > 0.0) || !p.a.is_finite() || !p.b.is_finite()) {
            return Err(Error::invalid("Beta parameters must be positive and finite"));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid("tail exponent α must be nonnegative"));
        }
        Ok(AtomPrior { atoms, alpha })
    }

    pub fn uniform(d: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![BetaAtom { a: 1.0, b: 1.0 }; d], alpha)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `τ = min_i E[θ_i]`.
    pub fn tau(&self) -> f64 {
        self.atoms.iter().map(BetaAtom::mean).fold(f64::INFINITY, f64::min)
    }

    /// `σ² = min_i Var[θ_i]`.
    pub fn sigma2(&self) -> f64 {
        self.atoms.iter().map(BetaAtom::variance).fold(f64::INFINITY, f64::min)
    }

    /// Checks `P[θ_i < x] ≥ exp(−x^{−α})` on `x ∈ {0.01, …, 1}`.
    pub fn check_assumptions(&self) -> AssumptionReport {
        let mut worst = f64::INFINITY;
        let mut at = (0, 0.0);
        for (i, atom) in self.atoms.iter().enumerate() {
            for k in 1..=100 {
                let x = k as f64 / 100.0;
                let slack = atom.cdf(x) - (-x.powf(-self.alpha)).exp();
                if slack < worst {
                    worst = slack;
                    at = (i, x);
                }
            }
        }
        AssumptionReport { tau: self.tau(), sigma2: self.sigma2(), worst_tail_slack: worst, worst_tail_at: at, holds: worst >= 0.0 }
    }
}
