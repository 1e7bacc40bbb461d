use std::cell::Cell;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One played step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub time: usize,
    pub action_index: usize,
    pub action: Vec<f64>,
    pub reward: f64,
}

/// Played actions and rewards with the running Gram matrix
/// `G_t = Σ_s A_s A_sᵀ`, the response vector `Σ_s R_s A_s` and the spectral
/// floor `γ(t) = λ_min(G_t)`, computed on first request and cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralHistory {
    dim: usize,
    steps: Vec<Step>,
    gram: DMatrix<f64>,
    response: DVector<f64>,
    gamma: Cell<Option<f64>>,
}

impl SpectralHistory {
    pub fn new(dim: usize) -> Self {
        SpectralHistory {
            dim,
            steps: Vec::new(),
            gram: DMatrix::zeros(dim, dim),
            response: DVector::zeros(dim),
            gamma: Cell::new(Some(0.0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Σ_s R_s A_s`.
    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// `λ_min(G_t)`, zero for the empty history.
    pub fn spectral_floor(&self) -> f64 {
        if let Some(g) = self.gamma.get() {
            return g;
        }
        let g = min_eigenvalue(&self.gram).max(0.0);
        self.gamma.set(Some(g));
        g
    }

    pub fn push(&mut self, action_index: usize, action: &DVector<f64>, reward: f64) -> Result<()> {
        if action.len() != self.dim {
            return Err(Error::invalid("action dimension does not match history"));
        }
        if !reward.is_finite() {
            return Err(Error::invalid("reward must be finite"));
        }
        self.gram.ger(1.0, action, action, 1.0);
        self.response.axpy(reward, action, 1.0);
        self.gamma.set(None);
        self.steps.push(Step {
            time: self.steps.len() + 1,
            action_index,
            action: action.iter().copied().collect(),
            reward,
        });
        Ok(())
    }

    /// Gram matrix recomputed from the step list.
    pub fn recomputed_gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for s in &self.steps {
            let a = DVector::from_row_slice(&s.action);
            g.ger(1.0, &a, &a, 1.0);
        }
        g
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => return 0.0,
        1 => return m[(0, 0)],
        2 => {
            let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
            return 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
        }
        _ => {}
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
