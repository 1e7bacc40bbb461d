use serde::Serialize;

use super::margin::{all_pairs, estimate_bic_margin, BicExperiment};
use super::report::BicReport;
use crate::geometry::{ConvexBody, UnitActionSet};
use crate::linear_ts::{gamma_threshold, PolicySpec, ThresholdVariant};
use crate::priors::{LinearPrior, ObsModel};
use crate::rng::child_seed;
use crate::{Error, Result};

/// Constant in the linear spectral threshold, calibrated on the disc with
/// eight actions (smallest passing value on a log grid over `[1e-3, 10]`).
pub const DESK_SCALE_C: f64 = 1e-3;

/// Uniform ball prior, unit actions containing `±e_i`, Gaussian rewards.
#[derive(Debug, Clone)]
pub struct SpectralInstance {
    pub prior: LinearPrior,
    pub actions: UnitActionSet,
    pub regularity: f64,
    /// Indices of `e_1, …, e_d` in `actions`, cycled by the schedule.
    pub axes: Vec<usize>,
    pub obs: ObsModel,
}

impl SpectralInstance {
    /// Unit disc, eight equally spaced actions.
    pub fn disc_eight() -> Result<Self> {
        Ok(SpectralInstance {
            prior: LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0)?,
            actions: UnitActionSet::equally_spaced(8)?,
            regularity: 1.0,
            axes: vec![0, 2],
            obs: ObsModel::Gaussian { sigma: 1.0 },
        })
    }

    /// Unit ball in three dimensions, the six octahedral actions `±e_i`.
    pub fn octahedron() -> Result<Self> {
        Ok(SpectralInstance {
            prior: LinearPrior::uniform(&ConvexBody::unit_ball(3), 1.0)?,
            actions: UnitActionSet::axes(3, true)?,
            regularity: 1.0,
            axes: vec![0, 2, 4],
            obs: ObsModel::Gaussian { sigma: 1.0 },
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Smallest `γ ≥ 1` with `γ ≥ threshold(dγ + offset)`.
    ///
    /// Cycling the `d` axes `γ` times gives Gram `γI`, so the audit at time
    /// `t = dγ + offset` (offset ≥ 1) sees at least `γ`-spectral exploration.
    pub fn gamma_for(&self, c: f64, offset: usize) -> Result<usize> {
        let d = self.dim();
        let eps = self.actions.separation()?;
        let mut g = 1usize;
        for _ in 0..200 {
            let t = (d * g + offset) as f64;
            let need = gamma_threshold(d, t, self.regularity, eps, c, ThresholdVariant::Linear)?.ceil().max(1.0) as usize;
            if need <= g {
                return Ok(g);
            }
            g = need;
        }
        Err(Error::IterationLimit { iterations: 200, residual: g as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralAuditRow {
    pub offset: usize,
    pub gamma: usize,
    pub report: BicReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralAudit {
    pub c: f64,
    pub rows: Vec<SpectralAuditRow>,
    pub pass: bool,
}

/// Audits every ordered pair at `t = dγ + offset` for each offset.
pub fn spectral_audit(inst: &SpectralInstance, c: f64, offsets: &[usize], replications: u64, n_inner: usize, seed: u64) -> Result<SpectralAudit> {
    let d = inst.dim();
    let pairs = all_pairs(inst.actions.len());
    let mut rows = Vec::with_capacity(offsets.len());
    for &offset in offsets {
        if offset == 0 {
            return Err(Error::invalid("offset must be at least 1"));
        }
        let gamma = inst.gamma_for(c, offset)?;
        let t = d * gamma + offset;
        let schedule = (0..t - 1).map(|s| inst.axes[s % d]).collect();
        let mut exp = BicExperiment::new(inst.prior.clone(), inst.actions.as_set().clone(), inst.obs, PolicySpec::Schedule { actions: schedule });
        exp.n_inner = n_inner;
        exp.gamma_gate = Some(gamma as f64);
        let report = estimate_bic_margin(&exp, t, &pairs, replications, child_seed(seed, &format!("offset={offset}")))?;
        rows.push(SpectralAuditRow { offset, gamma, report });
    }
    let pass = rows.iter().all(|r| r.report.all_certified());
    Ok(SpectralAudit { c, rows, pass })
}

/// Smallest constant on a log grid in `[lo, hi]` for which the audit passes,
/// scanning upward; `None` when no grid point passes.
pub fn calibrate_spectral_constant(
    inst: &SpectralInstance,
    lo: f64,
    hi: f64,
    points: usize,
    offsets: &[usize],
    replications: u64,
    n_inner: usize,
    seed: u64,
) -> Result<Option<f64>> {
    if !(lo > 0.0 && hi >= lo) || points < 2 {
        return Err(Error::invalid("need 0 < lo ≤ hi and at least two grid points"));
    }
    let step = (hi / lo).ln() / (points - 1) as f64;
    for k in 0..points {
        let c = lo * (step * k as f64).exp();
        if spectral_audit(inst, c, offsets, replications, n_inner, seed)?.pass {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_fixed_point() {
        let inst = SpectralInstance::disc_eight().unwrap();
        let eps = inst.actions.separation().unwrap();
        assert!((eps - 2.0 * (std::f64::consts::PI / 8.0).sin()).abs() < 1e-12);
        for offset in [1, 50] {
            let g = inst.gamma_for(1.0, offset).unwrap();
            let at = |g: usize| gamma_threshold(2, (2 * g + offset) as f64, 1.0, eps, 1.0, ThresholdVariant::Linear).unwrap();
            assert!(g as f64 >= at(g));
            assert!(((g - 1) as f64) < at(g - 1));
        }
    }

    #[test]
    fn small_audit_runs_on_both_instances() {
        for inst in [SpectralInstance::disc_eight().unwrap(), SpectralInstance::octahedron().unwrap()] {
            let a = spectral_audit(&inst, 0.01, &[1], 500, 8, 3).unwrap();
            let rep = &a.rows[0].report;
            assert_eq!(rep.gated_fraction, 1.0);
            assert!((rep.action_freq.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
