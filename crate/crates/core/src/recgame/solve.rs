use serde::{Deserialize, Serialize};

use super::game::GameSpec;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::{Error, Result};

const PRICING_TOL: f64 = 1e-12;
const MAX_COLUMNS: usize = 5_000;
pub const PADDING_TOL: f64 = 1e-8;

/// Planner strategy with its per-action padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddedPolicy {
    /// `probs[s][a]`: probability of recommending `rec_menu[a]` in scenario `s`;
    /// the remainder is "do nothing".
    pub probs: Vec<Vec<f64>>,
    /// `λ_A = min_B Σ_s w_s (θ̃_A − θ̃_B) π_s(A)`.
    pub padding: Vec<f64>,
    pub total: f64,
}

impl PaddedPolicy {
    pub fn do_nothing(game: &GameSpec) -> Self {
        PaddedPolicy {
            probs: vec![vec![0.0; game.rec_menu.len()]; game.scenarios.len()],
            padding: vec![0.0; game.rec_menu.len()],
            total: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSolution {
    /// Minimax value `λ_j` (planner's guaranteed gain).
    pub value: f64,
    pub policy: PaddedPolicy,
    /// `agent[a][b]`: the agent's mixed response to `rec_menu[a]`.
    pub agent: Vec<Vec<f64>>,
    /// Value the agent's response concedes; `upper − value` is the duality gap.
    pub upper: f64,
    pub gap: f64,
    /// MC standard error of the value for sampled scenarios.
    pub value_se: Option<f64>,
    pub columns: usize,
}

/// Best pure planner strategy against agent weights `mu[a][b]`, with its pricing value.
fn price(game: &GameSpec, mu: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let mut choice = Vec::with_capacity(game.scenarios.len());
    let mut total = 0.0;
    for s in &game.scenarios {
        let mut best = None;
        let mut best_v = 0.0;
        for (a, &ka) in game.rec_menu.iter().enumerate() {
            let v: f64 = game.resp_menu.iter().zip(&mu[a]).map(|(&kb, m)| m * (s.values[ka] - s.values[kb])).sum();
            if v > best_v + PRICING_TOL {
                best = Some(a);
                best_v = v;
            }
        }
        total += s.weight * best_v;
        choice.push(best);
    }
    (choice, total)
}

/// Gains `g(a, b)` of a pure strategy, flattened row-major.
fn column_gains(game: &GameSpec, choice: &[Option<usize>]) -> Vec<f64> {
    let nb = game.resp_menu.len();
    let mut g = vec![0.0; game.rec_menu.len() * nb];
    for (s, c) in game.scenarios.iter().zip(choice) {
        if let Some(a) = *c {
            let ka = game.rec_menu[a];
            for (b, &kb) in game.resp_menu.iter().enumerate() {
                g[a * nb + b] += s.weight * (s.values[ka] - s.values[kb]);
            }
        }
    }
    g
}

/// Solves the game by column generation over pure planner strategies.
///
/// The master LP has one row per (recommendation, response) pair plus a
/// convexity row, so its size does not grow with the scenario count. The
/// duals of the pair rows are the agent's mixed responses; pricing returns
/// the planner's best reply to them scenario by scenario.
pub fn solve_minimax(game: &GameSpec) -> Result<GameSolution> {
    game.validate()?;
    let (na, nb) = (game.rec_menu.len(), game.resp_menu.len());
    let mut columns: Vec<Vec<Option<usize>>> = vec![vec![None; game.scenarios.len()]];
    let mut gains: Vec<Vec<f64>> = vec![vec![0.0; na * nb]];
    loop {
        // variables: t_a (na), then α_k
        let nk = columns.len();
        let mut obj = vec![0.0; na + nk];
        obj[..na].iter_mut().for_each(|c| *c = 1.0);
        let mut lp = LinearProgram::new(obj);
        for a in 0..na {
            for b in 0..nb {
                let mut row = vec![0.0; na + nk];
                row[a] = 1.0;
                for (k, g) in gains.iter().enumerate() {
                    row[na + k] = -g[a * nb + b];
                }
                lp.add(row, Relation::Le, 0.0);
            }
        }
        let mut conv = vec![0.0; na + nk];
        conv[na..].iter_mut().for_each(|c| *c = 1.0);
        lp.add(conv, Relation::Eq, 1.0);
        let sol = match lp.solve()? {
            LpOutcome::Optimal(s) => s,
            other => return Err(Error::Solver(format!("game master LP ended {other:?}"))),
        };
        let mu: Vec<Vec<f64>> = (0..na).map(|a| (0..nb).map(|b| sol.duals[a * nb + b].max(0.0)).collect()).collect();
        let sigma = sol.duals[na * nb];
        let (choice, priced) = price(game, &mu);
        if priced - sigma <= 1e-10 || columns.len() >= MAX_COLUMNS {
            if priced - sigma > 1e-10 {
                return Err(Error::IterationLimit { iterations: MAX_COLUMNS, residual: priced - sigma });
            }
            return Ok(finish(game, &columns, &sol.x[na..], &mu));
        }
        gains.push(column_gains(game, &choice));
        columns.push(choice);
    }
}

fn finish(game: &GameSpec, columns: &[Vec<Option<usize>>], alpha: &[f64], mu: &[Vec<f64>]) -> GameSolution {
    let na = game.rec_menu.len();
    let mut probs = vec![vec![0.0; na]; game.scenarios.len()];
    for (col, &w) in columns.iter().zip(alpha) {
        if w <= 0.0 {
            continue;
        }
        for (p, c) in probs.iter_mut().zip(col) {
            if let Some(a) = *c {
                p[a] += w;
            }
        }
    }
    for p in &mut probs {
        let s: f64 = p.iter().sum();
        if s > 1.0 {
            p.iter_mut().for_each(|x| *x /= s);
        }
    }
    // recommendations whose worst-case gain is negative only hurt: move them to "do nothing"
    let minima = padding_minima(game, &probs);
    for (a, &m) in minima.iter().enumerate() {
        if m < 0.0 {
            probs.iter_mut().for_each(|p| p[a] = 0.0);
        }
    }
    let padding = padding_minima(game, &probs).into_iter().map(|m| m.max(0.0)).collect::<Vec<_>>();
    let value: f64 = padding.iter().sum();
    let agent: Vec<Vec<f64>> = mu
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter().map(|m| m / s).collect()
            } else {
                vec![1.0 / row.len() as f64; row.len()]
            }
        })
        .collect();
    let (_, upper) = price(game, &agent);
    let value_se = game.sampled.then(|| contribution_se(game, &probs, &agent)).flatten();
    GameSolution {
        value,
        policy: PaddedPolicy { probs, padding, total: value },
        agent,
        upper,
        gap: (upper - value).abs(),
        value_se,
        columns: columns.len(),
    }
}

/// Standard error of the per-scenario payoff under the solved strategies.
fn contribution_se(game: &GameSpec, probs: &[Vec<f64>], agent: &[Vec<f64>]) -> Option<f64> {
    let n = game.scenarios.len();
    if n < 2 {
        return None;
    }
    let c: Vec<f64> = game
        .scenarios
        .iter()
        .zip(probs)
        .map(|(s, p)| {
            game.rec_menu
                .iter()
                .enumerate()
                .map(|(a, &ka)| {
                    let resp: f64 = game.resp_menu.iter().zip(&agent[a]).map(|(&kb, y)| y * s.values[kb]).sum();
                    p[a] * (s.values[ka] - resp)
                })
                .sum()
        })
        .collect();
    let mean = c.iter().sum::<f64>() / n as f64;
    let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((var / n as f64).sqrt())
}

fn padding_minima(game: &GameSpec, probs: &[Vec<f64>]) -> Vec<f64> {
    (0..game.rec_menu.len())
        .map(|a| (0..game.resp_menu.len()).map(|b| game.gain(probs, a, b)).fold(f64::INFINITY, f64::min))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaddingCertificate {
    /// Enumerated `min_B` gain per recommendation.
    pub minima: Vec<f64>,
    pub max_deviation: f64,
    pub probabilities_valid: bool,
    pub pass: bool,
}

/// Recomputes every padding value by enumeration over responses.
pub fn verify_padding(policy: &PaddedPolicy, game: &GameSpec) -> Result<PaddingCertificate> {
    if policy.probs.len() != game.scenarios.len()
        || policy.probs.iter().any(|p| p.len() != game.rec_menu.len())
        || policy.padding.len() != game.rec_menu.len()
    {
        return Err(Error::invalid("policy dimensions do not match the game"));
    }
    let probabilities_valid = policy.probs.iter().all(|p| p.iter().all(|&x| x >= -1e-12) && p.iter().sum::<f64>() <= 1.0 + 1e-12);
    let minima = padding_minima(game, &policy.probs);
    let max_deviation = minima.iter().zip(&policy.padding).map(|(m, l)| (m - l).abs()).fold(0.0, f64::max);
    let pass = probabilities_valid
        && policy.padding.iter().all(|&l| l >= 0.0)
        && max_deviation <= PADDING_TOL * (1.0 + policy.total.abs());
    Ok(PaddingCertificate { minima, max_deviation, probabilities_valid, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recgame::game::{build_game, Scenario, SignalSpec};
    use crate::semibandit::SemibanditInstance;

    fn two_singletons() -> SemibanditInstance {
        SemibanditInstance::uniform(2, vec![vec![0], vec![1]]).unwrap()
    }

    fn uniform_pairs(n: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> GameSpec {
        let mut sc = Vec::new();
        for i in 0..n {
            for k in 0..n {
                let (x, y) = f((i as f64 + 0.5) / n as f64, (k as f64 + 0.5) / n as f64);
                sc.push(Scenario { weight: 1.0 / (n * n) as f64, values: vec![x, y], counts: None });
            }
        }
        GameSpec::from_scenarios(1, vec![1], vec![0], sc, false).unwrap()
    }

    #[test]
    fn iid_uniform_value_is_one_sixth() {
        let g = build_game(&two_singletons(), 1, &SignalSpec::exact(2, &[0, 1]), 10_000, 7).unwrap();
        let s = solve_minimax(&g).unwrap();
        assert!((s.value - 1.0 / 6.0).abs() < 3.0 * s.value_se.unwrap(), "{} ± {:?}", s.value, s.value_se);
        assert!(s.gap <= 1e-8, "gap {}", s.gap);
        assert!(verify_padding(&s.policy, &g).unwrap().pass);
    }

    #[test]
    fn grid_value_matches_midpoint_rule() {
        // midpoint grid of E[(y − x)₊]: exactly (n² − 1)/(6n²)
        let n = 40;
        let s = solve_minimax(&uniform_pairs(n, |x, y| (x, y))).unwrap();
        let want = ((n * n - 1) as f64) / (6.0 * (n * n) as f64);
        assert!((s.value - want).abs() < 1e-12, "{}", s.value);
    }

    #[test]
    fn worthless_arm_is_never_recommended() {
        let s = solve_minimax(&uniform_pairs(20, |x, _| (x, 0.0))).unwrap();
        assert!(s.value.abs() < 1e-12);
        assert!(s.policy.probs.iter().all(|p| p[0] < 1e-12));
    }

    #[test]
    fn dominant_arm_is_always_recommended() {
        let s = solve_minimax(&uniform_pairs(20, |_, y| (0.0, y))).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn do_nothing_has_zero_padding() {
        let g = uniform_pairs(5, |x, y| (x, y));
        let c = verify_padding(&PaddedPolicy::do_nothing(&g), &g).unwrap();
        assert!(c.pass && c.minima.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn perturbed_policy_fails_certificate() {
        let g = uniform_pairs(10, |x, y| (x, y));
        let mut p = solve_minimax(&g).unwrap().policy;
        let s = p.probs.iter().position(|row| row[0] > 0.5).unwrap();
        p.probs[s][0] -= 0.05;
        let c = verify_padding(&p, &g).unwrap();
        assert!(c.max_deviation > 1e-8 && !c.pass);
    }

    #[test]
    fn scaling_values_scales_the_value() {
        let g = uniform_pairs(12, |x, y| (x, y));
        let a = solve_minimax(&g).unwrap();
        let b = solve_minimax(&g.scaled(3.0)).unwrap();
        assert!((b.value - 3.0 * a.value).abs() < 1e-12);
        for (pa, pb) in a.policy.probs.iter().zip(&b.policy.probs) {
            assert_eq!(pa[0] > 1e-9, pb[0] > 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = uniform_pairs(3, |x, y| (x, y));
        let mut p = PaddedPolicy::do_nothing(&g);
        p.probs.pop();
        assert!(verify_padding(&p, &g).is_err());
    }

    #[test]
    fn mixed_menus_reach_zero_gap() {
        let inst = SemibanditInstance::uniform(3, vec![vec![0], vec![1], vec![2], vec![0, 2], vec![1, 2]]).unwrap();
        let g = build_game(&inst, 2, &SignalSpec::exact(3, &[0, 1, 2]), 2000, 3).unwrap();
        let s = solve_minimax(&g).unwrap();
        assert!(s.gap <= 1e-8, "gap {}", s.gap);
        assert!(s.value >= 0.0);
        assert!(verify_padding(&s.policy, &g).unwrap().pass);
    }
}
