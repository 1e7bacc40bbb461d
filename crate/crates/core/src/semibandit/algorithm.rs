use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};
use serde::Serialize;

use super::instance::SemibanditInstance;
use super::zeros::{mixed_signal_means, sort_atoms, zeros_probability};
use crate::recgame::{bic_lift, build_game, solve_minimax, stage_values, verify_padding, GameSpec, LambdaLower, PaddedPolicy, SignalSpec};
use crate::rng::child_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLabel {
    Initial,
    Exploit,
    Padded,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Initial => "initial",
            PhaseLabel::Exploit => "exploit",
            PhaseLabel::Padded => "padded",
        }
    }
}

/// Everything stage `j` needs that does not depend on the run.
#[derive(Debug, Clone)]
pub struct StagePlan {
    pub atom: usize,
    /// Atoms explored before this stage, `order[..j]`.
    pub explored: Vec<usize>,
    pub epsilon: f64,
    /// Greedy actions given the mixed signal `x = 1` and `x = 0`.
    pub signal_actions: [usize; 2],
    /// `p` before and after each while-loop iteration.
    pub p_before: Vec<f64>,
    pub p_after: Vec<f64>,
    pub game: GameSpec,
    pub policy: PaddedPolicy,
    /// Per iteration, per recommendation-menu entry: the action actually recommended.
    pub remap: Vec<Vec<usize>>,
    scenario_index: HashMap<Vec<u32>, usize>,
    scenario_greedy: Vec<usize>,
    q_cdf: Vec<f64>,
}

impl StagePlan {
    pub fn iterations(&self) -> usize {
        self.p_before.len()
    }
}

/// A fully determined run of the exploration algorithm up to the randomness of the run.
#[derive(Debug, Clone)]
pub struct Algorithm1Plan {
    pub instance: SemibanditInstance,
    pub n: u32,
    pub lambda: f64,
    pub order: Vec<usize>,
    pub prior_greedy: usize,
    pub stages: Vec<StagePlan>,
}

/// Index of the largest score; `preferred` wins ties, then the smallest index.
fn argmax_prefer(scores: &[f64], preferred: usize) -> usize {
    let mut best = preferred;
    for (k, &v) in scores.iter().enumerate() {
        if v > scores[best] + 1e-15 {
            best = k;
        }
    }
    best
}

impl Algorithm1Plan {
    /// Assembles the plan from solved stage games.
    ///
    /// `games[j − 1]` is the game of stage `j`; it must be the enumerated game
    /// for atom `order[j]` with `n` samples of every atom in `order[..=j]`.
    pub fn new(instance: SemibanditInstance, n: u32, order: Vec<usize>, lambda: f64, games: Vec<(GameSpec, PaddedPolicy)>) -> Result<Self> {
        let d = instance.dim();
        if n == 0 {
            return Err(Error::invalid("N must be positive"));
        }
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..d).collect::<Vec<_>>() {
            return Err(Error::invalid("order must be a permutation of the atoms"));
        }
        if games.len() + 1 != d {
            return Err(Error::invalid(format!("{} stage policies given for {} stages", games.len(), d - 1)));
        }
        if d > 1 && !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::PreconditionViolation(format!("growth rate λ = {lambda} must be positive")));
        }
        let prior_greedy = instance.greedy(&instance.prior_means());
        if !instance.actions[prior_greedy].contains(&order[0]) {
            return Err(Error::PreconditionViolation("the prior-greedy action must contain the first atom".into()));
        }
        let mut stages = Vec::with_capacity(d.saturating_sub(1));
        for (j, (game, policy)) in games.into_iter().enumerate().map(|(k, g)| (k + 1, g)) {
            stages.push(Self::stage(&instance, n, &order, j, lambda, game, policy)?);
        }
        Ok(Algorithm1Plan { instance, n, lambda, order, prior_greedy, stages })
    }

    fn stage(inst: &SemibanditInstance, n: u32, order: &[usize], j: usize, lambda: f64, game: GameSpec, policy: PaddedPolicy) -> Result<StagePlan> {
        let d = inst.dim();
        let atom = order[j];
        let explored = order[..j].to_vec();
        let expected = SignalSpec::samples(d, &order[..=j], n);
        if game.j != atom || game.signal.as_ref() != Some(&expected) || game.scenarios.iter().any(|s| s.counts.is_none()) {
            return Err(Error::invalid(format!("stage {j} needs the enumerated {n}-sample game of atom {atom}")));
        }
        if !verify_padding(&policy, &game)?.pass {
            return Err(Error::PreconditionViolation(format!("stage {j} policy fails its padding certificate")));
        }
        // every padded phase mixes with weight at least 1/(1 + λ) on the clean signal
        let lift = bic_lift(&policy, &game, 1.0 / (1.0 + lambda), d)?;
        if !lift.pass {
            return Err(Error::PreconditionViolation(format!("stage {j} lift is not incentive compatible")));
        }
        let epsilon = zeros_probability(inst, n, &explored);
        let x1 = inst.greedy(&mixed_signal_means(inst, n, &explored, epsilon, true));
        let x0 = inst.greedy(&mixed_signal_means(inst, n, &explored, epsilon, false));
        if !inst.actions[x1].contains(&atom) {
            return Err(Error::PreconditionViolation(format!(
                "greedy action {:?} given the stage-{j} signal misses atom {atom}",
                inst.actions[x1]
            )));
        }
        let (mut p_before, mut p_after) = (Vec::new(), Vec::new());
        let mut p = epsilon;
        while p < 1.0 {
            p_before.push(p);
            p = (p * (1.0 + lambda)).min(1.0);
            p_after.push(p);
        }
        let na = inst.actions.len();
        let mut joint = vec![vec![0.0; na]; game.rec_menu.len()];
        let mut prior_values = vec![0.0; na];
        for (s, probs) in game.scenarios.iter().zip(&policy.probs) {
            for b in 0..na {
                prior_values[b] += s.weight * s.values[b];
                for (a, pa) in probs.iter().enumerate() {
                    joint[a][b] += s.weight * pa * s.values[b];
                }
            }
        }
        let q = &lift.q;
        let remap = p_before
            .iter()
            .zip(&p_after)
            .map(|(pb, pa)| {
                let clean = pb / pa;
                (0..game.rec_menu.len())
                    .map(|a| {
                        let scores: Vec<f64> = (0..na).map(|b| clean * joint[a][b] + (1.0 - clean) * q[a] * prior_values[b]).collect();
                        argmax_prefer(&scores, game.rec_menu[a])
                    })
                    .collect()
            })
            .collect();
        let scenario_index = game.scenarios.iter().enumerate().map(|(k, s)| (s.counts.clone().unwrap_or_default(), k)).collect();
        let scenario_greedy = game.scenarios.iter().map(|s| argmax_prefer(&s.values, 0)).collect();
        let q_cdf = q
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        Ok(StagePlan {
            atom,
            explored,
            epsilon,
            signal_actions: [x0, x1],
            p_before,
            p_after,
            game,
            policy,
            remap,
            scenario_index,
            scenario_greedy,
            q_cdf,
        })
    }

    /// `B = N + Σ_j N·(1 + K_j)`, the exact length of every transcript.
    pub fn budget(&self) -> u64 {
        let n = self.n as u64;
        n + self.stages.iter().map(|s| n * (1 + s.iterations() as u64)).sum::<u64>()
    }

    /// `d^{3+α}·N^{1+α}/λ̲` with `λ̲ = 2dλ`.
    pub fn asymptotic_budget(&self) -> f64 {
        let d = self.instance.dim() as f64;
        let alpha = self.instance.prior.alpha;
        d.powf(3.0 + alpha) * (self.n as f64).powf(1.0 + alpha) / (2.0 * d * self.lambda)
    }

    /// Number of phases; each lasts `N` steps.
    pub fn phase_count(&self) -> usize {
        1 + self.stages.iter().map(|s| 1 + s.iterations()).sum::<usize>()
    }
}

/// Plan with the atom order, stage games and `λ = λ̲/2d` all derived from the instance.
///
/// `λ̲` is the smallest infinite-sample stage value; the stage policies come
/// from the `N`-sample games.
#[derive(Debug, Clone)]
pub struct PreparedAlgorithm {
    pub plan: Algorithm1Plan,
    pub infinite_values: LambdaLower,
    pub lambda_lower: Option<f64>,
}

pub fn prepare_algorithm1(inst: &SemibanditInstance, n: u32, scenario_count: usize, seed: u64) -> Result<PreparedAlgorithm> {
    let d = inst.dim();
    let order = sort_atoms(inst, n)?;
    let infinite_values = stage_values(inst, &order, None, scenario_count, child_seed(seed, "infinite"))?;
    let lambda_lower = infinite_values.value;
    let lambda = lambda_lower.map_or(0.0, |l| l / (2.0 * d as f64));
    let mut games = Vec::with_capacity(d.saturating_sub(1));
    for j in 1..d {
        let g = build_game(inst, order[j], &SignalSpec::samples(d, &order[..=j], n), scenario_count, child_seed(seed, &format!("stage{j}")))?;
        let s = solve_minimax(&g)?;
        games.push((g, s.policy));
    }
    let plan = Algorithm1Plan::new(inst.clone(), n, order, lambda, games)?;
    Ok(PreparedAlgorithm { plan, infinite_values, lambda_lower })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub label: PhaseLabel,
    /// 0 for the initial phase.
    pub stage: usize,
    /// While-loop iteration; `None` outside the loop.
    pub iteration: Option<usize>,
    /// First step of the phase (1-based).
    pub start: u64,
    pub action: usize,
    pub x: Option<bool>,
    pub b: Option<bool>,
    pub y: Option<bool>,
    pub z: Option<bool>,
    pub p: Option<f64>,
    /// Padded phase following the policy on the sample signal.
    pub clean: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub time: u64,
    pub phase: usize,
    pub action: usize,
    /// One bit per atom of the action, in action order.
    pub feedback: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorationTranscript {
    pub theta: Vec<f64>,
    pub order: Vec<usize>,
    pub n: u32,
    pub lambda: f64,
    pub phases: Vec<PhaseRecord>,
    pub steps: Vec<StepRecord>,
    /// `n_t(i)` at termination.
    pub counts: Vec<u64>,
    /// Empirical mean of each atom's first `N` samples.
    pub first_n_means: Vec<Option<f64>>,
    pub budget: u64,
    /// Atom sets of the instance's actions, indexed like `action` fields.
    pub action_atoms: Vec<Vec<usize>>,
}

impl ExplorationTranscript {
    pub fn len(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Recomputes counters, first-`N` means, phase lengths and the `p` recursion from the records.
    pub fn consistent(&self) -> bool {
        let d = self.counts.len();
        let n = self.n as usize;
        let mut counts = vec![0u64; d];
        let mut first = vec![0u64; d];
        for s in &self.steps {
            for (&bit, &a) in s.feedback.iter().zip(&self.action_atoms[s.action]) {
                if counts[a] < self.n as u64 {
                    first[a] += bit as u64;
                }
                counts[a] += 1;
            }
        }
        let means_ok = (0..d).all(|a| {
            let want = (counts[a] >= self.n as u64).then(|| first[a] as f64 / self.n as f64);
            want == self.first_n_means[a]
        });
        let blocks_ok = self.phases.iter().enumerate().all(|(k, p)| {
            let block = &self.steps[k * n..((k + 1) * n).min(self.steps.len())];
            block.len() == n && block.iter().all(|s| s.phase == k && s.action == p.action) && p.start == (k * n) as u64 + 1
        });
        let p_ok = self.phases.windows(2).all(|w| match (w[0].p, w[1].p, w[1].iteration) {
            (Some(a), Some(b), Some(i)) if i > 0 => b == (a * (1.0 + self.lambda)).min(1.0),
            _ => true,
        });
        counts == self.counts && means_ok && blocks_ok && p_ok
    }

    /// CSV: `time,phase,stage,action,feedback,p,x,b,y,z`; atom ids and bits are `;`-joined.
    pub fn to_csv(&self) -> String {
        let flag = |v: Option<bool>| v.map_or(String::new(), |b| (b as u8).to_string());
        let mut out = String::from("time,phase,stage,action,feedback,p,x,b,y,z\n");
        for s in &self.steps {
            let ph = &self.phases[s.phase];
            let atoms: Vec<String> = self.action_atoms[s.action].iter().map(usize::to_string).collect();
            let bits: Vec<String> = s.feedback.iter().map(|&b| (b as u8).to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.time,
                ph.label.as_str(),
                ph.stage,
                atoms.join(";"),
                bits.join(";"),
                ph.p.map_or(String::new(), |p| p.to_string()),
                flag(ph.x),
                flag(ph.b),
                flag(ph.y),
                flag(ph.z)
            );
        }
        out
    }
}

/// Feedback for one phase: either per-step bits or first-`N` counts drawn up front.
enum Feedback<'a> {
    Steps(&'a mut Vec<StepRecord>),
    Counts { first: Vec<u32> },
}

struct Run<'a> {
    plan: &'a Algorithm1Plan,
    theta: &'a [f64],
    counts: Vec<u64>,
    first: Vec<u32>,
    feedback: Feedback<'a>,
    phases: Vec<PhaseRecord>,
    time: u64,
}

impl Run<'_> {
    fn play<R: Rng + ?Sized>(&mut self, rng: &mut R, record: PhaseRecord) {
        let n = self.plan.n as u64;
        let atoms = &self.plan.instance.actions[record.action];
        let phase = self.phases.len();
        match &mut self.feedback {
            Feedback::Steps(steps) => {
                for _ in 0..n {
                    self.time += 1;
                    let mut bits = Vec::with_capacity(atoms.len());
                    for &a in atoms {
                        let bit = rng.random_bool(self.theta[a]);
                        if self.counts[a] < n {
                            self.first[a] += bit as u32;
                        }
                        self.counts[a] += 1;
                        bits.push(bit);
                    }
                    steps.push(StepRecord { time: self.time, phase, action: record.action, feedback: bits });
                }
            }
            Feedback::Counts { first } => {
                self.time += n;
                for &a in atoms {
                    if self.counts[a] < n {
                        // counts only ever move in whole phases of N
                        self.first[a] = first[a];
                    }
                    self.counts[a] += n;
                }
            }
        }
        self.phases.push(record);
    }

    fn explored(&self, atoms: &[usize]) -> bool {
        atoms.iter().all(|&a| self.counts[a] >= self.plan.n as u64)
    }

    fn execute<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let plan = self.plan;
        let base = |label, stage, action, start| PhaseRecord {
            label,
            stage,
            iteration: None,
            start,
            action,
            x: None,
            b: None,
            y: None,
            z: None,
            p: None,
            clean: None,
        };
        self.play(rng, base(PhaseLabel::Initial, 0, plan.prior_greedy, 1));
        for (k, st) in plan.stages.iter().enumerate() {
            let stage = k + 1;
            if !self.explored(&st.explored) {
                return Err(Error::Assertion(format!("stage {stage} starts before atoms {:?} have N samples", st.explored)));
            }
            let zeros = st.explored.iter().all(|&a| self.first[a] == 0);
            let mut y = rng.random_bool(st.epsilon);
            let x = zeros || y;
            let action = st.signal_actions[x as usize];
            self.play(rng, PhaseRecord { x: Some(x), y: Some(y), p: Some(st.epsilon), ..base(PhaseLabel::Exploit, stage, action, self.time + 1) });
            let informed: Vec<usize> = plan.order[..=stage].to_vec();
            for (it, (&p, remap)) in st.p_before.iter().zip(&st.remap).enumerate() {
                let b = rng.random_bool((p * plan.lambda / (1.0 - p)).min(1.0));
                let z = b || y;
                let start = self.time + 1;
                let record = if z {
                    let clean = y && self.explored(&informed);
                    let action = if clean {
                        let key: Vec<u32> = (0..plan.instance.dim()).map(|a| if informed.contains(&a) { self.first[a] } else { 0 }).collect();
                        let s = *st.scenario_index.get(&key).ok_or_else(|| Error::Assertion(format!("no scenario for counts {key:?}")))?;
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut pick = None;
                        for (a, &pa) in st.policy.probs[s].iter().enumerate() {
                            acc += pa;
                            if u < acc {
                                pick = Some(a);
                                break;
                            }
                        }
                        pick.map_or(st.scenario_greedy[s], |a| remap[a])
                    } else {
                        let u: f64 = rng.random();
                        let a = st.q_cdf.iter().position(|&c| u < c).unwrap_or(st.q_cdf.len() - 1);
                        remap[a]
                    };
                    PhaseRecord { clean: Some(clean), ..base(PhaseLabel::Padded, stage, action, start) }
                } else {
                    base(PhaseLabel::Exploit, stage, plan.prior_greedy, start)
                };
                self.play(rng, PhaseRecord { iteration: Some(it), b: Some(b), y: Some(y), z: Some(z), p: Some(p), ..record });
                y = z;
            }
        }
        Ok(())
    }
}

fn draw_theta<R: Rng + ?Sized>(inst: &SemibanditInstance, rng: &mut R) -> Result<Vec<f64>> {
    inst.prior
        .atoms
        .iter()
        .map(|p| Ok(Beta::new(p.a, p.b).map_err(|e| Error::invalid(e.to_string()))?.sample(rng)))
        .collect()
}

/// Draws `θ` from the prior and runs the full algorithm with per-step feedback.
pub fn run_algorithm1<R: Rng + ?Sized>(plan: &Algorithm1Plan, rng: &mut R) -> Result<ExplorationTranscript> {
    let theta = draw_theta(&plan.instance, rng)?;
    let d = plan.instance.dim();
    let mut steps = Vec::with_capacity(plan.budget() as usize);
    let mut run = Run {
        plan,
        theta: &theta,
        counts: vec![0; d],
        first: vec![0; d],
        feedback: Feedback::Steps(&mut steps),
        phases: Vec::with_capacity(plan.phase_count()),
        time: 0,
    };
    run.execute(rng)?;
    let (counts, first, phases) = (run.counts, run.first, run.phases);
    let budget = plan.budget();
    if steps.len() as u64 > budget {
        return Err(Error::Assertion(format!("transcript length {} exceeds the budget {budget}", steps.len())));
    }
    let first_n_means = (0..d).map(|a| (counts[a] >= plan.n as u64).then(|| first[a] as f64 / plan.n as f64)).collect();
    Ok(ExplorationTranscript {
        theta,
        order: plan.order.clone(),
        n: plan.n,
        lambda: plan.lambda,
        phases,
        steps,
        counts,
        first_n_means,
        budget,
        action_atoms: plan.instance.actions.clone(),
    })
}

/// Phase records only, with each atom's first-`N` count drawn as one binomial.
pub(crate) fn run_phases<R: Rng + ?Sized>(plan: &Algorithm1Plan, rng: &mut R) -> Result<(Vec<f64>, Vec<PhaseRecord>)> {
    let theta = draw_theta(&plan.instance, rng)?;
    let first = theta
        .iter()
        .map(|&t| Ok(Binomial::new(plan.n as u64, t).map_err(|e| Error::invalid(e.to_string()))?.sample(rng) as u32))
        .collect::<Result<Vec<_>>>()?;
    let d = plan.instance.dim();
    let mut run = Run {
        plan,
        theta: &theta,
        counts: vec![0; d],
        first: vec![0; d],
        feedback: Feedback::Counts { first },
        phases: Vec::with_capacity(plan.phase_count()),
        time: 0,
    };
    run.execute(rng)?;
    let phases = run.phases;
    Ok((theta, phases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn two_singletons() -> SemibanditInstance {
        SemibanditInstance::uniform(2, vec![vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn single_atom_runs_only_the_initial_phase() {
        let inst = SemibanditInstance::uniform(1, vec![vec![0]]).unwrap();
        let plan = prepare_algorithm1(&inst, 7, 100, 0).unwrap().plan;
        let t = run_algorithm1(&plan, &mut derive_stream(1, 0)).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t.phases.len(), 1);
        assert!(t.consistent());
    }

    #[test]
    fn iteration_count_is_geometric() {
        let prep = prepare_algorithm1(&two_singletons(), 29, 10_000, 4).unwrap();
        let plan = &prep.plan;
        let st = &plan.stages[0];
        assert!((st.epsilon - 1.0 / 30.0).abs() < 1e-15);
        let want = ((1.0 / st.epsilon).ln() / (1.0 + plan.lambda).ln()).ceil() as usize;
        assert_eq!(st.iterations(), want);
        assert!((plan.lambda - prep.lambda_lower.unwrap() / 4.0).abs() < 1e-15);
        assert_eq!(plan.budget(), 29 * (2 + want as u64));
    }

    #[test]
    fn runs_explore_every_atom_within_budget() {
        let plan = prepare_algorithm1(&two_singletons(), 29, 10_000, 4).unwrap().plan;
        for seed in 0..100 {
            let t = run_algorithm1(&plan, &mut derive_stream(seed, 0)).unwrap();
            assert!(t.counts.iter().all(|&c| c >= 29), "seed {seed}: {:?}", t.counts);
            assert!(t.len() <= t.budget);
            assert!(t.consistent(), "seed {seed}");
        }
    }

    #[test]
    fn replay_is_exact() {
        let plan = prepare_algorithm1(&two_singletons(), 10, 1000, 2).unwrap().plan;
        let a = run_algorithm1(&plan, &mut derive_stream(3, 1)).unwrap();
        let b = run_algorithm1(&plan, &mut derive_stream(3, 1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("time,phase,stage,action,feedback,p,x,b,y,z\n1,initial,0,0,"));
    }

    #[test]
    fn tampered_transcript_is_inconsistent() {
        let plan = prepare_algorithm1(&two_singletons(), 10, 1000, 2).unwrap().plan;
        let mut t = run_algorithm1(&plan, &mut derive_stream(3, 1)).unwrap();
        t.counts[0] += 1;
        assert!(!t.consistent());
    }

    #[test]
    fn missing_policy_is_rejected() {
        let inst = two_singletons();
        assert!(matches!(Algorithm1Plan::new(inst, 5, vec![0, 1], 0.1, vec![]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn three_atom_instances() {
        let inst = SemibanditInstance::uniform(3, vec![vec![0], vec![1], vec![2], vec![0, 1]]).unwrap();
        // with three samples the stage games are worth too little for the growth rate
        assert!(matches!(prepare_algorithm1(&inst, 3, 2000, 5), Err(Error::PreconditionViolation(_))));
        // at twenty, half the mixed signal is noise and {0, 1} still outweighs {2}
        assert!(matches!(prepare_algorithm1(&inst, 20, 2000, 5), Err(Error::PreconditionViolation(_))));
        let inst = SemibanditInstance::uniform(3, vec![vec![0], vec![1], vec![2]]).unwrap();
        let prep = prepare_algorithm1(&inst, 20, 2000, 5).unwrap();
        assert_eq!(prep.plan.order, vec![0, 1, 2]);
        for seed in 0..20 {
            let t = run_algorithm1(&prep.plan, &mut derive_stream(seed, 0)).unwrap();
            assert!(t.counts.iter().all(|&c| c >= 20));
            assert!(t.consistent());
        }
    }
}
