use serde::{Deserialize, Serialize};

use crate::priors::{AtomPrior, BetaAtom};
use crate::{Error, Result};

/// Independent Beta–Bernoulli atoms and a family of atom subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SemibanditInstance {
    pub prior: AtomPrior,
    /// Sorted, duplicate-free atom index sets.
    pub actions: Vec<Vec<usize>>,
    containing: Vec<Vec<usize>>,
}

/// On-disk form: `{"atoms": [{"a":1,"b":1}, …], "actions": [[0],[1]], "alpha": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub atoms: Vec<BetaAtom>,
    pub actions: Vec<Vec<usize>>,
    pub alpha: f64,
}

impl SemibanditInstance {
    pub fn new(prior: AtomPrior, actions: Vec<Vec<usize>>) -> Result<Self> {
        let d = prior.len();
        if actions.is_empty() {
            return Err(Error::invalid("action family is empty"));
        }
        let mut actions = actions;
        for a in &mut actions {
            if a.is_empty() {
                return Err(Error::invalid("actions must be nonempty atom sets"));
            }
            a.sort_unstable();
            if a.windows(2).any(|w| w[0] == w[1]) || a.iter().any(|&i| i >= d) {
                return Err(Error::invalid(format!("action {a:?} repeats an atom or names a missing one")));
            }
        }
        let containing: Vec<Vec<usize>> = (0..d).map(|j| (0..actions.len()).filter(|&k| actions[k].contains(&j)).collect()).collect();
        if let Some(j) = containing.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("atom {j} appears in no action")));
        }
        let report = prior.check_assumptions();
        if !report.holds {
            return Err(Error::PreconditionViolation(format!(
                "prior tail condition fails at atom {} x = {}",
                report.worst_tail_at.0, report.worst_tail_at.1
            )));
        }
        Ok(SemibanditInstance { prior, actions, containing })
    }

    pub fn uniform(d: usize, actions: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(AtomPrior::uniform(d, 1.0)?, actions)
    }

    pub fn from_doc(doc: &InstanceDoc) -> Result<Self> {
        Self::new(AtomPrior::new(doc.atoms.clone(), doc.alpha)?, doc.actions.clone())
    }

    pub fn to_doc(&self) -> InstanceDoc {
        InstanceDoc { atoms: self.prior.atoms.clone(), actions: self.actions.clone(), alpha: self.prior.alpha }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(s)?)
    }

    pub fn dim(&self) -> usize {
        self.prior.len()
    }

    /// Indices of actions containing atom `j`.
    pub fn containing(&self, j: usize) -> &[usize] {
        &self.containing[j]
    }

    /// Indices of actions avoiding atom `j`.
    pub fn avoiding(&self, j: usize) -> Vec<usize> {
        (0..self.actions.len()).filter(|k| !self.containing[j].contains(k)).collect()
    }

    /// `Σ_{a ∈ A} values[a]`.
    pub fn action_value(&self, action: usize, values: &[f64]) -> f64 {
        self.actions[action].iter().map(|&a| values[a]).sum()
    }

    /// Smallest-index maximiser of the action value.
    pub fn greedy(&self, values: &[f64]) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for k in 0..self.actions.len() {
            let v = self.action_value(k, values);
            if v > best_v {
                best = k;
                best_v = v;
            }
        }
        best
    }

    pub fn prior_means(&self) -> Vec<f64> {
        self.prior.atoms.iter().map(BetaAtom::mean).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_by_atom() {
        let inst = SemibanditInstance::uniform(3, vec![vec![0], vec![1], vec![2], vec![1, 0]]).unwrap();
        assert_eq!(inst.actions[3], vec![0, 1]);
        assert_eq!(inst.containing(0), &[0, 3]);
        assert_eq!(inst.avoiding(0), vec![1, 2]);
        for j in 0..3 {
            let mut all: Vec<usize> = inst.containing(j).to_vec();
            all.extend(inst.avoiding(j));
            all.sort_unstable();
            assert_eq!(all, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn rejects_bad_families() {
        assert!(SemibanditInstance::uniform(2, vec![vec![0]]).is_err());
        assert!(SemibanditInstance::uniform(2, vec![vec![0, 0], vec![1]]).is_err());
        assert!(SemibanditInstance::uniform(2, vec![vec![0], vec![2]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = r#"{"atoms": [{"a":1,"b":1},{"a":2,"b":3}], "actions": [[0],[1],[0,1]], "alpha": 1}"#;
        let inst = SemibanditInstance::from_json(s).unwrap();
        let back = SemibanditInstance::from_json(&serde_json::to_string(&inst.to_doc()).unwrap()).unwrap();
        assert_eq!(inst, back);
    }
}
