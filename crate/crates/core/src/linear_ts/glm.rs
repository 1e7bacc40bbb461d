use nalgebra::{Cholesky, DMatrix, DVector};

use super::{LinkFunction, SpectralHistory};
use crate::{Error, Result};

pub const SCORE_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub estimate: DVector<f64>,
    /// Final score norm `‖Σ (R_s − χ(⟨A_s, ℓ̂⟩)) A_s‖`.
    pub residual: f64,
    pub iterations: usize,
}

fn score(history: &SpectralHistory, link: LinkFunction, ell: &DVector<f64>) -> DVector<f64> {
    let mut s = DVector::zeros(ell.len());
    for step in history.steps() {
        let a = DVector::from_row_slice(&step.action);
        s.axpy(step.reward - link.eval(a.dot(ell)), &a, 1.0);
    }
    s
}

fn hessian(history: &SpectralHistory, link: LinkFunction, ell: &DVector<f64>) -> DMatrix<f64> {
    let d = ell.len();
    let mut h = DMatrix::zeros(d, d);
    for step in history.steps() {
        let a = DVector::from_row_slice(&step.action);
        h.ger(link.derivative(a.dot(ell)), &a, &a, 1.0);
    }
    h
}

/// Solves `Σ_s (R_s − χ(⟨A_s, ℓ̂⟩)) A_s = 0` by Newton's method, halving the
/// step whenever the score norm would increase.
pub fn glm_mle(history: &SpectralHistory, link: LinkFunction) -> Result<GlmFit> {
    let gamma = history.spectral_floor();
    if history.is_empty() || gamma <= 1e-12 * history.gram().amax().max(1.0) {
        return Err(Error::RankDeficient { min_eigenvalue: gamma });
    }
    let d = history.dim();
    let mut ell = DVector::zeros(d);
    let mut s = score(history, link, &ell);
    let mut norm = s.norm();
    for it in 0..MAX_ITERATIONS {
        if norm <= SCORE_TOL {
            return Ok(GlmFit { estimate: ell, residual: norm, iterations: it });
        }
        let h = hessian(history, link, &ell);
        let step = Cholesky::new(h)
            .ok_or(Error::RankDeficient { min_eigenvalue: gamma })?
            .solve(&s);
        let mut t = 1.0;
        loop {
            let cand = &ell + &step * t;
            let cs = score(history, link, &cand);
            let cn = cs.norm();
            if cn <= norm || t < 1e-12 {
                ell = cand;
                s = cs;
                norm = cn;
                break;
            }
            t *= 0.5;
        }
    }
    if norm <= SCORE_TOL {
        Ok(GlmFit { estimate: ell, residual: norm, iterations: MAX_ITERATIONS })
    } else {
        Err(Error::IterationLimit { iterations: MAX_ITERATIONS, residual: norm })
    }
}

/// Ordinary least squares `G⁻¹ Σ R_s A_s`.
pub fn least_squares(history: &SpectralHistory) -> Result<DVector<f64>> {
    Cholesky::new(history.gram().clone())
        .ok_or(Error::RankDeficient { min_eigenvalue: history.spectral_floor() })
        .map(|c| c.solve(history.response()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use rand::Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn identity_link_is_least_squares() {
        let mut rng = derive_stream(1, 0);
        let mut h = SpectralHistory::new(3);
        for i in 0..40 {
            let a = crate::geometry::random_unit(&mut rng, 3);
            h.push(i, &a, rng.random::<f64>() - 0.3).unwrap();
        }
        let fit = glm_mle(&h, LinkFunction::Identity).unwrap();
        let ls = least_squares(&h).unwrap();
        assert!((fit.estimate - ls).amax() < 1e-10);
        assert!(fit.residual <= SCORE_TOL);
    }

    #[test]
    fn logistic_noiseless_recovers_truth() {
        let truth = v(&[0.4, -0.7]);
        let mut rng = derive_stream(2, 0);
        let mut h = SpectralHistory::new(2);
        for i in 0..30 {
            let a = crate::geometry::random_unit(&mut rng, 2);
            let r = LinkFunction::Logistic.eval(a.dot(&truth));
            h.push(i, &a, r).unwrap();
        }
        let fit = glm_mle(&h, LinkFunction::Logistic).unwrap();
        assert!((fit.estimate - truth).amax() < 1e-8);
    }

    #[test]
    fn logistic_one_dimensional_root() {
        let mut h = SpectralHistory::new(1);
        for i in 0..10 {
            h.push(i, &v(&[1.0]), if i < 6 { 1.0 } else { 0.0 }).unwrap();
        }
        let fit = glm_mle(&h, LinkFunction::Logistic).unwrap();
        // oracle: bisection on χ(x) = 0.6
        let (mut lo, mut hi) = (-5.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if LinkFunction::Logistic.eval(mid) < 0.6 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((fit.estimate[0] - lo).abs() < 1e-8);
        assert!((lo - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_design_is_rank_deficient() {
        let mut h = SpectralHistory::new(2);
        h.push(0, &v(&[1.0, 0.0]), 0.5).unwrap();
        assert!(matches!(glm_mle(&h, LinkFunction::Logistic), Err(Error::RankDeficient { .. })));
    }
}
