use serde::Serialize;

use super::algorithm::{run_phases, Algorithm1Plan};
use crate::stats::{replicate, RunningStats};
use crate::Result;

/// Rows whose recommendation was seen fewer times than this are not certified.
pub const MIN_CONDITIONING_COUNT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseAuditRow {
    pub phase: usize,
    /// First step of the phase; every step in it makes the same recommendation.
    pub start: u64,
    pub stage: usize,
    pub a: usize,
    pub b: usize,
    /// `E[(θ_A − θ_B)·1{recommend A}]`.
    pub margin: f64,
    pub se: Option<f64>,
    pub freq: f64,
    pub under_sampled: bool,
    pub certified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageProbe {
    pub stage: usize,
    pub atom: usize,
    /// Steps before the stage atom is first recommended.
    pub first_play: f64,
    pub first_play_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptAudit {
    pub replications: u64,
    pub z: f64,
    pub phases: usize,
    pub rows: Vec<PhaseAuditRow>,
    pub stages: Vec<StageProbe>,
    /// Fraction of runs ending with every atom sampled at least `N` times.
    pub explored_fraction: f64,
    pub all_certified: bool,
}

impl TranscriptAudit {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,start,stage,a,b,margin,se,freq,certified\n");
        for r in &self.rows {
            let cert = match r.certified {
                Some(true) => "pass",
                Some(false) => "fail",
                None if r.under_sampled => "under-sampled",
                None => "NA",
            };
            let se = r.se.map_or("NA".to_string(), |s| s.to_string());
            out.push_str(&format!("{},{},{},{},{},{},{},{},{}\n", r.phase, r.start, r.stage, r.a, r.b, r.margin, se, r.freq, cert));
        }
        out
    }
}

/// Audits every phase of the algorithm: each phase is a step class because
/// phase boundaries are deterministic and recommendations are constant within a phase.
pub fn audit_transcript_bic(plan: &Algorithm1Plan, replications: u64, seed: u64, z: f64) -> Result<TranscriptAudit> {
    let na = plan.instance.actions.len();
    let d = plan.instance.dim();
    let np = plan.phase_count();
    let n = plan.n as u64;
    let stages = plan.stages.len();
    let init = || {
        (
            (vec![RunningStats::default(); np * na * na], vec![RunningStats::default(); np * na]),
            (vec![RunningStats::default(); stages], RunningStats::default()),
        )
    };
    let ((margins, freq), (first_play, explored)) = replicate(seed, replications, init, |rng, _, ((m, f), (fp, ex))| {
        let (theta, phases) = run_phases(plan, rng)?;
        let values: Vec<f64> = (0..na).map(|k| plan.instance.action_value(k, &theta)).collect();
        let mut counts = vec![0u64; d];
        let mut first = vec![None; d];
        for (k, ph) in phases.iter().enumerate() {
            for a in 0..na {
                let hit = ph.action == a;
                f[k * na + a].push(hit as u8 as f64);
                for b in 0..na {
                    if a != b {
                        m[(k * na + a) * na + b].push(if hit { values[a] - values[b] } else { 0.0 });
                    }
                }
            }
            for &atom in &plan.instance.actions[ph.action] {
                counts[atom] += n;
                first[atom].get_or_insert(ph.start - 1);
            }
        }
        for (s, st) in plan.stages.iter().enumerate() {
            fp[s].push(first[st.atom].unwrap_or(phases.len() as u64 * n) as f64);
        }
        ex.push(counts.iter().all(|&c| c >= n) as u8 as f64);
        Ok(())
    })?;
    let mut starts = Vec::with_capacity(np);
    let mut stage_of = Vec::with_capacity(np);
    starts.push(1);
    stage_of.push(0);
    for (s, st) in plan.stages.iter().enumerate() {
        for _ in 0..=st.iterations() {
            starts.push(starts.len() as u64 * n + 1);
            stage_of.push(s + 1);
        }
    }
    let mut rows = Vec::new();
    for k in 0..np {
        for a in 0..na {
            let fr = freq[k * na + a].mean();
            let under = fr * (replications as f64) < MIN_CONDITIONING_COUNT;
            for b in (0..na).filter(|&b| b != a) {
                let st = &margins[(k * na + a) * na + b];
                let se = st.std_error();
                let certified = if under { None } else { se.map(|s| st.mean() >= -z * s) };
                rows.push(PhaseAuditRow {
                    phase: k,
                    start: starts[k],
                    stage: stage_of[k],
                    a,
                    b,
                    margin: st.mean(),
                    se,
                    freq: fr,
                    under_sampled: under,
                    certified,
                });
            }
        }
    }
    let all_certified = rows.iter().all(|r| r.certified != Some(false));
    let stages = plan
        .stages
        .iter()
        .zip(&first_play)
        .enumerate()
        .map(|(s, (st, fp))| StageProbe { stage: s + 1, atom: st.atom, first_play: fp.mean(), first_play_se: fp.std_error() })
        .collect();
    Ok(TranscriptAudit { replications, z, phases: np, rows, stages, explored_fraction: explored.mean(), all_certified })
}
