use nalgebra::DVector;
use serde::Serialize;

use super::{glm_mle, LinkFunction, SpectralHistory, SCORE_TOL};
use crate::priors::ObsModel;
use crate::stats::{replicate, RunningStats};
use crate::{Error, Result};

/// Constant in [`glm_gamma`] for the logistic link: the smallest value on the
/// grid `10^{k/4}·1e-3` passing every instance of [`glm_calibration_set`].
pub const GLM_PROBE_C: f64 = 0.056_234_132_519_034_91;

/// Logistic `d = 2` instances at `δ = 0.05` used to fix [`GLM_PROBE_C`].
pub fn glm_calibration_set() -> Vec<GlmProbeConfig> {
    [([0.3, -0.2], [1.0, 1.0]), ([0.0, 0.0], [1.0, 0.0]), ([0.6, 0.5], [1.0, -1.0]), ([-0.5, 0.4], [0.3, 1.0])]
        .into_iter()
        .map(|(ell, v)| GlmProbeConfig { link: LinkFunction::Logistic, c: GLM_PROBE_C, delta: 0.05, ell_star: ell.to_vec(), v: v.to_vec() })
        .collect()
}

/// Spectral level `⌈C M_χ² (d² + ln(1/δ)) / m_χ⁴⌉` at which the MLE concentrates.
pub fn glm_gamma(d: usize, link: LinkFunction, c: f64, delta: f64) -> Result<usize> {
    if d == 0 || !(c > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("need d ≥ 1, C > 0, δ ∈ (0, 1)"));
    }
    let (m, big_m) = link.constants();
    let g = c * big_m * big_m * ((d * d) as f64 + (1.0 / delta).ln()) / m.powi(4);
    Ok(g.ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmProbeConfig {
    pub link: LinkFunction,
    pub c: f64,
    pub delta: f64,
    pub ell_star: Vec<f64>,
    /// Test direction.
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmProbeReport {
    pub gamma: usize,
    /// `‖v‖ / (m_χ √γ)`.
    pub radius: f64,
    /// Frequency of `|⟨ℓ̂ − ℓ*, v⟩| > radius`; failed fits count as exceedances.
    pub exceed_freq: f64,
    pub exceed_se: f64,
    pub failed_fits: f64,
    /// Largest score norm among converged fits.
    pub max_residual: f64,
    /// `exceed_freq ≤ δ + 3·SE`.
    pub pass: bool,
}

/// Frequentist check of MLE concentration under a round-robin schedule over
/// the coordinate axes, each played `γ` times.
pub fn glm_frequency_probe(cfg: &GlmProbeConfig, replications: u64, seed: u64) -> Result<GlmProbeReport> {
    let d = cfg.ell_star.len();
    if cfg.v.len() != d || replications < 2 {
        return Err(Error::invalid("v must match ℓ* and replications must be ≥ 2"));
    }
    let obs = match cfg.link {
        LinkFunction::Identity => ObsModel::Gaussian { sigma: 1.0 },
        LinkFunction::Logistic => ObsModel::Logistic,
    };
    let gamma = glm_gamma(d, cfg.link, cfg.c, cfg.delta)?;
    let (m, _) = cfg.link.constants();
    let v = DVector::from_column_slice(&cfg.v);
    let ell = DVector::from_column_slice(&cfg.ell_star);
    let radius = v.norm() / (m * (gamma as f64).sqrt());
    let axes: Vec<DVector<f64>> = (0..d).map(|i| DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 })).collect();
    // layout: exceedance | failed fit | converged residual
    let acc = replicate(seed, replications, || (vec![RunningStats::default(); 2], Residuals::default()), |rng, _, (acc, res)| {
        let mut h = SpectralHistory::new(d);
        for s in 0..gamma * d {
            let a = &axes[s % d];
            h.push(s % d, a, obs.observe(rng, a.dot(&ell)))?;
        }
        match glm_mle(&h, cfg.link) {
            Ok(fit) => {
                res.max = res.max.max(fit.residual);
                acc[0].push(if (&fit.estimate - &ell).dot(&v).abs() > radius { 1.0 } else { 0.0 });
                acc[1].push(0.0);
            }
            Err(Error::IterationLimit { .. }) | Err(Error::RankDeficient { .. }) => {
                acc[0].push(1.0);
                acc[1].push(1.0);
            }
            Err(e) => return Err(e),
        }
        Ok(())
    })?;
    let (acc, res) = acc;
    let f = acc[0].mean();
    let se = (f * (1.0 - f) / replications as f64).sqrt();
    Ok(GlmProbeReport {
        gamma,
        radius,
        exceed_freq: f,
        exceed_se: se,
        failed_fits: acc[1].mean(),
        max_residual: res.max,
        pass: f <= cfg.delta + 3.0 * se && res.max <= SCORE_TOL,
    })
}

/// Smallest `C = 10^{k/4}·lo` up to `hi` for which the probe passes on every instance.
pub fn calibrate_glm_constant(instances: &[GlmProbeConfig], lo: f64, hi: f64, replications: u64, seed: u64) -> Result<Option<f64>> {
    if !(lo > 0.0 && hi >= lo) || instances.is_empty() {
        return Err(Error::invalid("need 0 < lo ≤ hi and at least one instance"));
    }
    let mut k = 0;
    loop {
        let c = lo * 10f64.powf(k as f64 / 4.0);
        if c > hi * (1.0 + 1e-12) {
            return Ok(None);
        }
        let mut all = true;
        for inst in instances {
            if !glm_frequency_probe(&GlmProbeConfig { c, ..inst.clone() }, replications, seed)?.pass {
                all = false;
                break;
            }
        }
        if all {
            return Ok(Some(c));
        }
        k += 1;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Residuals {
    max: f64,
}

impl crate::stats::Accumulator for Residuals {
    fn merge(&mut self, other: Self) {
        self.max = self.max.max(other.max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_matches_formula() {
        // M²/m⁴ ≈ 41.8 for the logistic link on [−1, 1]
        let g = glm_gamma(2, LinkFunction::Logistic, 1.0, 0.05).unwrap();
        let (m, big_m) = LinkFunction::Logistic.constants();
        let exact = big_m * big_m / m.powi(4) * (4.0 + 20f64.ln());
        assert_eq!(g, exact.ceil() as usize);
        assert!((big_m * big_m / m.powi(4) - 41.8).abs() < 0.1);
    }

    #[test]
    fn identity_link_probe_concentrates() {
        let cfg = GlmProbeConfig { link: LinkFunction::Identity, c: 1.0, delta: 0.05, ell_star: vec![0.3, -0.2], v: vec![1.0, 1.0] };
        let r = glm_frequency_probe(&cfg, 4000, 1).unwrap();
        // ⟨ℓ̂ − ℓ*, v⟩ ~ N(0, 2/γ) against radius √2/√γ: a one-SD band
        assert!((r.exceed_freq - 0.3173).abs() < 4.0 * r.exceed_se, "{r:?}");
        assert_eq!(r.failed_fits, 0.0);
    }
}
