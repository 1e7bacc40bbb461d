use std::fmt::Write as _;

use serde::Serialize;

use crate::stats::RunningStats;

/// Margin estimate for one `(t, i, j)` triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicRow {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    /// Estimate of `E[(θ_i − θ_j)·1{A^(t) = A_i}]`.
    pub margin: f64,
    /// `None` when fewer than two replications were audited.
    pub se: Option<f64>,
    pub replications: u64,
    /// `P̂[A^(t) = A_i]`.
    pub cond_freq: f64,
    /// Conditional-form estimate: realised gap times the realised recommendation indicator.
    pub direct_margin: f64,
    pub direct_se: Option<f64>,
    /// `margin ≥ −z·se`; `None` without a standard error.
    pub certified: Option<bool>,
    /// Set when `A_i` was never recommended (the conditional is undefined).
    pub undefined_conditional: bool,
}

impl BicRow {
    pub(crate) fn from_stats(t: usize, (i, j): (usize, usize), m: &RunningStats, direct: &RunningStats, freq: f64, z: f64) -> Self {
        let se = m.std_error();
        let undefined = freq <= 0.0;
        BicRow {
            t,
            i,
            j,
            margin: m.mean(),
            se,
            replications: m.count,
            cond_freq: freq,
            direct_margin: direct.mean(),
            direct_se: direct.std_error(),
            certified: if undefined { None } else { se.map(|s| m.mean() >= -z * s) },
            undefined_conditional: undefined,
        }
    }
}

/// `E[θ_{A^(t)}] ≥ max_j E[θ_j]`: recommendations beat exploiting the prior on average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingCheck {
    /// Per alternative `j`: mean and SE of `θ_{A^(t)} − θ_j`.
    pub gaps: Vec<(f64, Option<f64>)>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicReport {
    pub seed: u64,
    pub config_hash: Option<String>,
    pub z: f64,
    pub t: usize,
    /// Replications run, and the fraction passing the spectral gate.
    pub replications: u64,
    pub gated_fraction: f64,
    /// `P̂[A^(t) = A_i]` for every action.
    pub action_freq: Vec<f64>,
    pub rows: Vec<BicRow>,
    pub averaging: AveragingCheck,
}

impl BicReport {
    /// True when no row with a standard error fails certification.
    pub fn all_certified(&self) -> bool {
        self.rows.iter().all(|r| r.certified != Some(false))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,i,j,margin,se,replications,cond_freq,direct_margin,direct_se,certified\n");
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        for r in &self.rows {
            let cert = match r.certified {
                Some(true) => "pass",
                Some(false) => "fail",
                None if r.undefined_conditional => "undefined",
                None => "NA",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.i,
                r.j,
                r.margin,
                opt(r.se),
                r.replications,
                r.cond_freq,
                r.direct_margin,
                opt(r.direct_se),
                cert
            );
        }
        out
    }
}
