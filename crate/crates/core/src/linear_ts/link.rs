use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::priors::logistic;
use crate::{Error, Result};

/// Strictly increasing GLM link `χ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkFunction {
    Identity,
    Logistic,
}

impl FromStr for LinkFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(LinkFunction::Identity),
            "logistic" => Ok(LinkFunction::Logistic),
            other => Err(Error::invalid(format!("unsupported link `{other}`"))),
        }
    }
}

impl LinkFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Identity => x,
            LinkFunction::Logistic => logistic(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Identity => 1.0,
            LinkFunction::Logistic => {
                let p = logistic(x);
                p * (1.0 - p)
            }
        }
    }

    /// `(m_χ, M_χ)`: infimum and supremum of `χ′` on `[−1, 1]`.
    pub fn constants(&self) -> (f64, f64) {
        match self {
            LinkFunction::Identity => (1.0, 1.0),
            LinkFunction::Logistic => {
                let e = std::f64::consts::E;
                (e / ((1.0 + e) * (1.0 + e)), 0.25)
            }
        }
    }

    /// Largest gap between the analytic constants and a `1e-4` grid scan of
    /// `χ′` over `[−1, 1]` (endpoints included).
    pub fn verify_constants(&self) -> f64 {
        let (m, big_m) = self.constants();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=20_000 {
            let x = -1.0 + k as f64 * 1e-4;
            let v = self.derivative(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo - m).abs().max((hi - big_m).abs())
    }
}

pub fn link_constants(link: LinkFunction) -> (f64, f64) {
    link.constants()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_constants() {
        assert_eq!(link_constants(LinkFunction::Identity), (1.0, 1.0));
    }

    #[test]
    fn logistic_constants() {
        let (m, big_m) = link_constants(LinkFunction::Logistic);
        assert_eq!(big_m, LinkFunction::Logistic.derivative(0.0));
        assert!((m - 0.19661).abs() < 1e-5);
        assert!((m - LinkFunction::Logistic.derivative(1.0)).abs() < 1e-15);
        assert!((m - LinkFunction::Logistic.derivative(-1.0)).abs() < 1e-15);
        assert!(LinkFunction::Logistic.verify_constants() < 1e-12);
        assert_eq!(LinkFunction::Identity.verify_constants(), 0.0);
    }

    #[test]
    fn unknown_link_is_invalid() {
        assert!(matches!("probit".parse::<LinkFunction>(), Err(Error::InvalidInput(_))));
    }
}
