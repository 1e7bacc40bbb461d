use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{BodyShape, ConvexBody, SamplerConfig};
use crate::{Error, Result};

/// Prior over the reward vector `ℓ*`.
#[derive(Debug, Clone)]
pub enum LinearPrior {
    /// Centered Gaussian with covariance `cov = L Lᵀ`.
    Gaussian { cov: DMatrix<f64>, chol: DMatrix<f64> },
    /// Uniform on a (possibly scaled) regular body.
    Uniform { body: ConvexBody, sampler: SamplerConfig },
}

/// JSON form of a prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec {
    Gaussian {
        covariance: Vec<Vec<f64>>,
    },
    Uniform {
        body: ConvexBody,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl LinearPrior {
    pub fn gaussian(cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() == 0 || !cov.is_square() {
            return Err(Error::invalid("covariance must be a nonempty square matrix"));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
            return Err(Error::invalid("covariance must be symmetric"));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::invalid("covariance must be positive definite"))?
            .l();
        Ok(LinearPrior::Gaussian { cov, chol })
    }

    pub fn standard_gaussian(d: usize) -> Self {
        Self::gaussian(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    /// Uniform prior on `scale·K`; the scaled body must be regular.
    pub fn uniform(body: &ConvexBody, scale: f64) -> Result<Self> {
        let body = if scale == 1.0 { body.clone() } else { body.scaled(scale)? };
        if !(body.regularity > 0.0) {
            return Err(Error::invalid("uniform prior needs a declared regularity r > 0"));
        }
        let rep = body.check_regularity()?;
        if !rep.holds() {
            return Err(Error::InfeasibleGeometry(format!(
                "body is not {}-regular (min support {}, max norm {})",
                body.regularity, rep.min_support, rep.max_norm
            )));
        }
        Ok(LinearPrior::Uniform { body, sampler: SamplerConfig::default() })
    }

    pub fn with_sampler(mut self, cfg: SamplerConfig) -> Self {
        if let LinearPrior::Uniform { sampler, .. } = &mut self {
            *sampler = cfg;
        }
        self
    }

    pub fn from_spec(spec: &PriorSpec) -> Result<Self> {
        match spec {
            PriorSpec::Gaussian { covariance } => {
                let d = covariance.len();
                if covariance.iter().any(|r| r.len() != d) {
                    return Err(Error::invalid("covariance rows must have equal length"));
                }
                Self::gaussian(DMatrix::from_fn(d, d, |i, j| covariance[i][j]))
            }
            PriorSpec::Uniform { body, scale } => Self::uniform(body, *scale),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LinearPrior::Gaussian { cov, .. } => cov.nrows(),
            LinearPrior::Uniform { body, .. } => body.dim(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        match self {
            LinearPrior::Gaussian { chol, .. } => {
                let d = chol.nrows();
                let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                Ok(chol * z)
            }
            LinearPrior::Uniform { body, sampler } => body.sample_uniform(rng, sampler),
        }
    }

    /// Prior mean when available in closed form.
    pub fn mean(&self) -> Option<DVector<f64>> {
        match self {
            LinearPrior::Gaussian { cov, .. } => Some(DVector::zeros(cov.nrows())),
            LinearPrior::Uniform { body, .. } => match &body.shape {
                BodyShape::Ball { dim, .. } => Some(DVector::zeros(*dim)),
                BodyShape::Box { lower, upper } => Some(DVector::from_iterator(
                    lower.len(),
                    lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)),
                )),
                BodyShape::HalfSpaces { .. } => None,
            },
        }
    }
}

/// Reward channel given the mean `⟨A, ℓ*⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObsModel {
    Noiseless,
    /// Additive `N(0, σ²)` noise.
    Gaussian { sigma: f64 },
    /// Reward in `{−1, +1}` with `P[+1] = (1 + mean)/2`; mean must lie in `[−1, 1]`.
    BernoulliSign,
    /// Reward in `{0, 1}` with `P[1] = e^mean/(1 + e^mean)`.
    Logistic,
}

impl ObsModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ObsModel::Gaussian { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::invalid("gaussian noise needs sigma > 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn observe<R: Rng + ?Sized>(&self, rng: &mut R, mean: f64) -> f64 {
        match self {
            ObsModel::Noiseless => mean,
            ObsModel::Gaussian { sigma } => mean + sigma * rng.sample::<f64, _>(StandardNormal),
            ObsModel::BernoulliSign => {
                let p = 0.5 * (1.0 + mean.clamp(-1.0, 1.0));
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    -1.0
                }
            }
            ObsModel::Logistic => {
                if rng.random::<f64>() < logistic(mean) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `log p(r | mean)` up to a constant independent of the mean.
    pub fn log_likelihood(&self, r: f64, mean: f64) -> f64 {
        match self {
            ObsModel::Noiseless => {
                if (r - mean).abs() <= 1e-9 * (1.0 + r.abs()) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            ObsModel::Gaussian { sigma } => -0.5 * ((r - mean) / sigma).powi(2),
            ObsModel::BernoulliSign => (0.5 * (1.0 + r * mean)).max(0.0).ln(),
            ObsModel::Logistic => {
                let p = logistic(mean);
                if r > 0.5 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
        }
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Symmetric square-root factor `F` with `F Fᵀ = cov`, dropping numerically
/// null directions.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] > 1e-12 * top.max(1e-300)).collect();
    let mut f = DMatrix::zeros(d, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        for r in 0..d {
            f[(r, c)] = eig.eigenvectors[(r, k)] * s;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn gaussian_prior_is_centered() {
        let p = LinearPrior::standard_gaussian(2);
        let mut rng = derive_stream(11, 0);
        let n = 100_000;
        let mut m = [0.0; 2];
        for _ in 0..n {
            let x = p.sample(&mut rng).unwrap();
            m[0] += x[0] / n as f64;
            m[1] += x[1] / n as f64;
        }
        let tol = 3.0 / (n as f64).sqrt();
        assert!(m[0].abs() < tol && m[1].abs() < tol, "{m:?}");
    }

    #[test]
    fn uniform_disc_mean_radius() {
        let p = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let mut rng = derive_stream(12, 0);
        let n = 100_000;
        let mean_r: f64 = (0..n).map(|_| p.sample(&mut rng).unwrap().norm()).sum::<f64>() / n as f64;
        assert!((mean_r - 2.0 / 3.0).abs() < 0.005, "{mean_r}");
    }

    #[test]
    fn uniform_box_mean() {
        // [−0.5,1]×[−1,1] is not inside the unit ball; scale by 1/√2 and undo
        let k = ConvexBody::boxed(vec![-0.5, -1.0], vec![1.0, 1.0]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let p = LinearPrior::uniform(&k, s).unwrap();
        let mut rng = derive_stream(13, 0);
        let n = 100_000;
        let mut m = [0.0; 2];
        for _ in 0..n {
            let x = p.sample(&mut rng).unwrap() / s;
            m[0] += x[0] / n as f64;
            m[1] += x[1] / n as f64;
        }
        assert!((m[0] - 0.25).abs() < 0.01 && m[1].abs() < 0.01, "{m:?}");
    }

    #[test]
    fn irregular_body_rejected() {
        let k = ConvexBody::boxed(vec![-0.5, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(LinearPrior::uniform(&k, 1.0).is_err());
    }

    #[test]
    fn non_spd_covariance_rejected() {
        assert!(LinearPrior::gaussian(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }
}
