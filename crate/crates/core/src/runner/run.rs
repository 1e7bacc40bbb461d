use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::bic_audit::{
    audit_corollary_margins, decay_probe_counterexample_2, run_counterexample_1, simulate_extreme_point_wrapper, spectral_audit, SpectralInstance,
    DESK_SCALE_C,
};
use crate::geometry::{ConvexBody, SlabPolytope, UnitActionSet};
use crate::linear_ts::{glm_calibration_set, glm_frequency_probe, GLM_PROBE_C};
use crate::recgame::{build_game, finite_sample_gap, solve_minimax, verify_padding, SignalSpec};
use crate::rng::{child_seed, derive_stream};
use crate::semibandit::{audit_transcript_bic, n_lower_bound, prepare_algorithm1, run_algorithm1, zeros_tail_check, Algorithm1Plan, SemibanditInstance};
use crate::stats::{normal_quantile, replicate, RunningStats};
use crate::{Error, Result};

/// Default certification level (one-sided 99%).
pub const DEFAULT_Z: f64 = 2.58;
const DEFAULT_SCENARIOS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_secs: f64,
    pub pass: bool,
    pub failures: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub pass: bool,
    pub failures: Vec<String>,
    /// Result files written, excluding the manifest.
    pub files: Vec<PathBuf>,
    pub manifest: Manifest,
}

impl RunOutcome {
    /// 0 when every assertion of the experiment held, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// Result files of one experiment before they are written.
struct Artifacts {
    csv: Option<String>,
    json: String,
    extra: Vec<(String, String)>,
    failures: Vec<String>,
}

impl Artifacts {
    fn new<T: Serialize>(summary: &T) -> Result<Self> {
        Ok(Artifacts { csv: None, json: serde_json::to_string_pretty(summary)? + "\n", extra: Vec::new(), failures: Vec::new() })
    }

    fn csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    fn check(mut self, ok: bool, what: impl Into<String>) -> Self {
        if !ok {
            self.failures.push(what.into());
        }
        self
    }
}

/// Runs the experiment and writes `<kind>.json`, `<kind>.csv` (when tabular),
/// any extra files and `manifest.json` into the output directory (default `out`).
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let artifacts = match config.parallelism {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(|| dispatch(config))?,
        None => dispatch(config)?,
    };
    let out = config.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;
    let stem = config.kind.as_str();
    let mut files = Vec::new();
    let mut write = |name: String, body: &str| -> Result<()> {
        let path = out.join(&name);
        fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };
    write(format!("{stem}.json"), &artifacts.json)?;
    if let Some(csv) = &artifacts.csv {
        write(format!("{stem}.csv"), csv)?;
    }
    for (name, body) in &artifacts.extra {
        write(name.clone(), body)?;
    }
    let pass = artifacts.failures.is_empty();
    let manifest = Manifest {
        kind: stem.to_string(),
        config_hash: config.hash()?,
        seed: config.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        pass,
        failures: artifacts.failures.clone(),
        files: files.iter().filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect(),
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    fs::write(out.join("config.json"), config.to_json()? + "\n")?;
    Ok(RunOutcome { pass, failures: artifacts.failures, files, manifest })
}

fn load_instance(config: &ExperimentConfig) -> Result<SemibanditInstance> {
    let path = config.instance.as_deref().ok_or_else(|| Error::invalid("instance file required"))?;
    let text = fs::read_to_string(path)?;
    SemibanditInstance::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Parse(format!("{}: {j}", path.display())),
        other => other,
    })
}

fn dispatch(config: &ExperimentConfig) -> Result<Artifacts> {
    let p = &config.params;
    let (reps, seed) = (config.replications, config.seed);
    let z = p.z.unwrap_or(DEFAULT_Z);
    match config.kind {
        ExperimentKind::BicAudit => {
            let inst = match p.geometry.as_deref().unwrap_or("disc-eight") {
                "disc-eight" => SpectralInstance::disc_eight()?,
                "octahedron" => SpectralInstance::octahedron()?,
                other => return Err(Error::invalid(format!("unknown geometry {other:?}"))),
            };
            let offsets = p.offsets.clone().unwrap_or_else(|| vec![1, 50]);
            let audit = spectral_audit(&inst, p.c.unwrap_or(DESK_SCALE_C), &offsets, reps, p.n_inner.unwrap_or(64), seed)?;
            let mut csv = String::new();
            for (k, row) in audit.rows.iter().enumerate() {
                let body = row.report.to_csv();
                csv.push_str(if k == 0 { &body } else { body.split_once('\n').map_or("", |(_, rest)| rest) });
            }
            let failing: Vec<String> = audit
                .rows
                .iter()
                .flat_map(|r| r.report.rows.iter().filter(|b| b.certified == Some(false)).map(|b| format!("t={} i={} j={} margin={}", b.t, b.i, b.j, b.margin)))
                .collect();
            let mut a = Artifacts::new(&audit)?.csv(csv);
            a.failures.extend(failing);
            Ok(a)
        }
        ExperimentKind::Corollary => {
            let n = p.actions.unwrap_or(4);
            let actions = if n == 4 { UnitActionSet::axes(2, true)? } else { UnitActionSet::equally_spaced(n)? };
            let rep = audit_corollary_margins(&ConvexBody::unit_ball(2), &actions, reps, seed)?;
            let mut csv = String::from("i,prob,prob_se,j,margin,margin_se,conditional,conditional_se\n");
            let opt = |x: Option<f64>| x.map_or("NA".to_string(), |v| v.to_string());
            for row in &rep.rows {
                for m in &row.margins {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        row.i,
                        row.prob,
                        opt(row.prob_se),
                        m.j,
                        m.unconditional,
                        opt(m.unconditional_se),
                        opt(m.conditional),
                        opt(m.conditional_se)
                    ));
                }
            }
            let pass = rep.pass;
            Ok(Artifacts::new(&rep)?.csv(csv).check(pass, format!("some P[A* = A_i] + 3SE is below the bound {}", rep.bound)))
        }
        ExperimentKind::Counterexample1 => {
            let rep = run_counterexample_1(reps, seed)?;
            let (pos, neutral) = (rep.positive, rep.neutral_subcase);
            Ok(Artifacts::new(&rep)?
                .check(pos, format!("margin {} ± {} is not positive at 99%", rep.margin, rep.se))
                .check(neutral, "the A^(1) = A_3 sub-case is not zero within its interval"))
        }
        ExperimentKind::Counterexample2 => {
            let dims = p.dims.clone().unwrap_or_else(|| vec![10, 20, 40, 80]);
            let rep = decay_probe_counterexample_2(&dims, reps, seed)?;
            let mut csv = String::from("d,tail,tail_se,censored,mean,mean_se,closed_form_mean,mean_ok\n");
            for r in &rep.rows {
                csv.push_str(&format!("{},{},{},{},{},{},{},{}\n", r.d, r.tail, r.tail_se, r.censored, r.mean, r.mean_se, r.closed_form_mean, r.mean_ok));
            }
            let pass = rep.pass;
            Ok(Artifacts::new(&rep)?.csv(csv).check(pass, "tail decay fit or mean check failed"))
        }
        ExperimentKind::GlmAudit => {
            let mut instances = glm_calibration_set();
            for cfg in &mut instances {
                cfg.c = p.c.unwrap_or(GLM_PROBE_C);
                if let Some(delta) = p.delta {
                    cfg.delta = delta;
                }
            }
            let mut csv = String::from("instance,gamma,radius,exceed_freq,exceed_se,failed_fits,max_residual,pass\n");
            let mut reports = Vec::with_capacity(instances.len());
            for (k, cfg) in instances.iter().enumerate() {
                let r = glm_frequency_probe(cfg, reps, child_seed(seed, &format!("glm{k}")))?;
                csv.push_str(&format!("{k},{},{},{},{},{},{},{}\n", r.gamma, r.radius, r.exceed_freq, r.exceed_se, r.failed_fits, r.max_residual, r.pass));
                reports.push((cfg.clone(), r));
            }
            let mut a = Artifacts::new(&reports)?.csv(csv);
            for (k, (_, r)) in reports.iter().enumerate() {
                a = a.check(r.pass, format!("instance {k}: exceedance frequency {} above δ", r.exceed_freq));
            }
            Ok(a)
        }
        ExperimentKind::SemibanditExplore => semibandit_explore(config, z),
        ExperimentKind::GameSolve => {
            let inst = load_instance(config)?;
            let j = p.j.unwrap_or(inst.dim() - 1);
            let informed: Vec<usize> = (0..=j.min(inst.dim() - 1)).collect();
            let signal = match p.n {
                Some(n) => SignalSpec::samples(inst.dim(), &informed, n),
                None => SignalSpec::exact(inst.dim(), &informed),
            };
            let game = build_game(&inst, j, &signal, p.scenarios.unwrap_or(DEFAULT_SCENARIOS), seed)?;
            let sol = solve_minimax(&game)?;
            let cert = verify_padding(&sol.policy, &game)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                j: usize,
                scenarios: usize,
                value: f64,
                value_se: Option<f64>,
                upper: f64,
                gap: f64,
                padding: &'a [f64],
                certificate_deviation: f64,
                certificate_pass: bool,
            }
            let s = Summary {
                j,
                scenarios: game.scenarios.len(),
                value: sol.value,
                value_se: sol.value_se,
                upper: sol.upper,
                gap: sol.gap,
                padding: &sol.policy.padding,
                certificate_deviation: cert.max_deviation,
                certificate_pass: cert.pass,
            };
            let mut a = Artifacts::new(&s)?
                .check(cert.pass, format!("padding certificate deviation {}", cert.max_deviation))
                .check(sol.gap <= 1e-8, format!("duality gap {}", sol.gap));
            a.extra.push(("policy.json".into(), serde_json::to_string(&sol.policy)? + "\n"));
            Ok(a)
        }
        ExperimentKind::GameSweep => {
            let inst = load_instance(config)?;
            let j = p.j.unwrap_or(inst.dim() - 1);
            let ns = p.ns.clone().unwrap_or_else(|| vec![0, 1, 2, 4, 8, 16, 32, 64, 128, 256]);
            let curve = finite_sample_gap(&inst, j, &ns, p.scenarios.unwrap_or(DEFAULT_SCENARIOS), seed)?;
            let mono = curve.monotone;
            Ok(Artifacts::new(&curve)?.csv(curve.to_csv()).check(mono, "λ_j(N) decreases beyond three combined SEs"))
        }
        ExperimentKind::Reduce => {
            let d = p.dim.unwrap_or(3);
            let steps = p.steps.unwrap_or(4 * d);
            let poly = SlabPolytope::new(d)?;
            let verts = &poly.vertices;
            let (dominated, feedback) = replicate(seed, reps, || (RunningStats::default(), RunningStats::default()), |rng, _, (dom, fb)| {
                let inner: Vec<Vec<f64>> = (0..steps)
                    .map(|_| {
                        let w: Vec<f64> = verts.vertices.iter().map(|_| -rng.random::<f64>().ln()).collect();
                        let total: f64 = w.iter().sum();
                        (0..d).map(|i| verts.vertices.iter().zip(&w).map(|(v, wk)| v[i] * wk / total).sum()).collect()
                    })
                    .collect();
                let ell = crate::geometry::uniform_in_ball(rng, d);
                let t = simulate_extreme_point_wrapper(verts, &inner, ell.as_slice(), rng)?;
                dom.push(t.dominates as u8 as f64);
                // forwarded feedback against the inner action's mean reward
                for (r, a) in t.feedback.iter().zip(&inner) {
                    fb.push(r - DVector::from_column_slice(a).dot(&ell));
                }
                Ok(())
            })?;
            #[derive(Serialize)]
            struct Summary {
                dim: usize,
                steps: usize,
                replications: u64,
                dominated_fraction: f64,
                feedback_bias: f64,
                feedback_bias_se: Option<f64>,
            }
            let s = Summary {
                dim: d,
                steps,
                replications: reps,
                dominated_fraction: dominated.mean(),
                feedback_bias: feedback.mean(),
                feedback_bias_se: feedback.std_error(),
            };
            let bias_ok = s.feedback_bias_se.is_none_or(|se| s.feedback_bias.abs() <= normal_quantile(0.9995) * se);
            Ok(Artifacts::new(&s)?
                .check(s.dominated_fraction == 1.0, "wrapped Gram matrix failed to dominate")
                .check(bias_ok, format!("forwarded feedback biased by {}", s.feedback_bias)))
        }
    }
}

fn semibandit_explore(config: &ExperimentConfig, z: f64) -> Result<Artifacts> {
    let p = &config.params;
    let inst = load_instance(config)?;
    let n = match p.n {
        Some(n) => n,
        None => u32::try_from(n_lower_bound(&inst, p.guard.unwrap_or(1.0))?).map_err(|_| Error::invalid("N does not fit in 32 bits"))?,
    };
    let scenarios = p.scenarios.unwrap_or(DEFAULT_SCENARIOS);
    let prep = prepare_algorithm1(&inst, n, scenarios, child_seed(config.seed, "games"))?;
    let plan = match p.lambda {
        Some(l) => {
            let games = prep.plan.stages.iter().map(|s| (s.game.clone(), s.policy.clone())).collect();
            Algorithm1Plan::new(inst.clone(), n, prep.plan.order.clone(), l, games)?
        }
        None => prep.plan.clone(),
    };
    let transcript = run_algorithm1(&plan, &mut derive_stream(child_seed(config.seed, "transcript"), 0))?;
    let audit = audit_transcript_bic(&plan, config.replications, child_seed(config.seed, "audit"), z)?;
    let full_n = n_lower_bound(&inst, 1.0)?;
    let tails = zeros_tail_check(&inst, full_n);
    #[derive(Serialize)]
    struct Summary<'a> {
        order: &'a [usize],
        n: u32,
        lambda: f64,
        lambda_lower: Option<f64>,
        iterations: Vec<usize>,
        epsilons: Vec<f64>,
        budget: u64,
        asymptotic_budget: f64,
        transcript_steps: u64,
        transcript_consistent: bool,
        explored_fraction: f64,
        all_certified: bool,
        under_sampled_rows: usize,
        full_sample_size: u64,
        tail_checks: &'a [crate::semibandit::TailCheck],
        stages: &'a [crate::semibandit::StageProbe],
    }
    let s = Summary {
        order: &plan.order,
        n,
        lambda: plan.lambda,
        lambda_lower: prep.lambda_lower,
        iterations: plan.stages.iter().map(|s| s.iterations()).collect(),
        epsilons: plan.stages.iter().map(|s| s.epsilon).collect(),
        budget: plan.budget(),
        asymptotic_budget: plan.asymptotic_budget(),
        transcript_steps: transcript.len(),
        transcript_consistent: transcript.consistent(),
        explored_fraction: audit.explored_fraction,
        all_certified: audit.all_certified,
        under_sampled_rows: audit.rows.iter().filter(|r| r.under_sampled).count(),
        full_sample_size: full_n,
        tail_checks: &tails,
        stages: &audit.stages,
    };
    let mut a = Artifacts::new(&s)?
        .csv(audit.to_csv())
        .check(s.transcript_consistent, "transcript fails its recount")
        .check(s.transcript_steps <= s.budget, "transcript exceeds the budget")
        .check(s.explored_fraction == 1.0, "some run left an atom below N samples")
        .check(tails.iter().all(|t| t.pass), "tail bound fails at the full sample size");
    for r in audit.rows.iter().filter(|r| r.certified == Some(false)) {
        a.failures.push(format!("phase {} recommends {} over {} with margin {}", r.phase, r.a, r.b, r.margin));
    }
    a.extra.push(("transcript.csv".into(), transcript.to_csv()));
    Ok(a)
}

/// Reads every file of a finished run, manifest excluded, for byte comparisons.
pub fn read_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        if name != "manifest.json" && path.is_file() {
            out.push((name, fs::read(&path)?));
        }
    }
    out.sort();
    Ok(out)
}
