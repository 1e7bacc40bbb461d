use serde::Serialize;

use super::game::{build_game, SignalSpec};
use super::solve::solve_minimax;
use crate::rng::child_seed;
use crate::semibandit::SemibanditInstance;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub n: u32,
    pub value: f64,
    pub se: Option<f64>,
    /// `λ_{j,∞} − λ_j(N)`.
    pub gap: f64,
    /// `λ_j(N) ≥ λ_{j,∞}/2 − 3·SE`.
    pub half_value: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCurve {
    pub j: usize,
    pub infinite: f64,
    pub infinite_se: Option<f64>,
    pub rows: Vec<GapRow>,
    /// Values are nondecreasing in `N` within three combined standard errors.
    pub monotone: bool,
}

fn combined(a: Option<f64>, b: Option<f64>) -> f64 {
    (a.unwrap_or(0.0).powi(2) + b.unwrap_or(0.0).powi(2)).sqrt()
}

impl GapCurve {
    /// CSV with header `j,N,lambda,se`; the infinite-sample value is the row with `N = inf`.
    pub fn to_csv(&self) -> String {
        let se = |s: Option<f64>| s.map_or("NA".to_string(), |v| format!("{v:.12e}"));
        let mut out = String::from("j,N,lambda,se\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.12e},{}\n", self.j, r.n, r.value, se(r.se)));
        }
        out.push_str(&format!("{},inf,{:.12e},{}\n", self.j, self.infinite, se(self.infinite_se)));
        out
    }
}

/// Value of the atom-`j` game when atoms `informed` are known exactly.
fn exact_value(inst: &SemibanditInstance, j: usize, informed: &[usize], scenario_count: usize, seed: u64) -> Result<(f64, Option<f64>)> {
    let g = build_game(inst, j, &SignalSpec::exact(inst.dim(), informed), scenario_count, seed)?;
    let s = solve_minimax(&g)?;
    Ok((s.value, s.value_se))
}

/// `λ_{j,∞}`: atoms `0..=j` revealed exactly.
pub fn infinite_sample_value(inst: &SemibanditInstance, j: usize, scenario_count: usize, seed: u64) -> Result<(f64, Option<f64>)> {
    let informed: Vec<usize> = (0..=j).collect();
    exact_value(inst, j, &informed, scenario_count, seed)
}

/// `λ_j(N)` for each `N` in `ns` (atoms `0..=j` sampled `N` times) against `λ_{j,∞}`.
pub fn finite_sample_gap(inst: &SemibanditInstance, j: usize, ns: &[u32], scenario_count: usize, seed: u64) -> Result<GapCurve> {
    let (infinite, infinite_se) = infinite_sample_value(inst, j, scenario_count, child_seed(seed, "infinite"))?;
    let informed: Vec<usize> = (0..=j).collect();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let g = build_game(inst, j, &SignalSpec::samples(inst.dim(), &informed, n), scenario_count, child_seed(seed, &format!("n{n}")))?;
        let s = solve_minimax(&g)?;
        let half_value = s.value >= infinite / 2.0 - 3.0 * combined(s.value_se, infinite_se);
        rows.push(GapRow { n, value: s.value, se: s.value_se, gap: infinite - s.value, half_value });
    }
    let monotone = rows.windows(2).all(|w| w[1].value >= w[0].value - 3.0 * combined(w[0].se, w[1].se) - 1e-12);
    Ok(GapCurve { j, infinite, infinite_se, rows, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EasyGameReport {
    /// `λ̄_j`: every atom revealed exactly.
    pub value: f64,
    pub se: Option<f64>,
    pub infinite: f64,
    pub infinite_se: Option<f64>,
    /// `λ̄_j ≥ λ_{j,∞} − 3·SE`.
    pub dominates: bool,
}

pub fn easy_game_value(inst: &SemibanditInstance, j: usize, scenario_count: usize, seed: u64) -> Result<EasyGameReport> {
    let all: Vec<usize> = (0..inst.dim()).collect();
    let (value, se) = exact_value(inst, j, &all, scenario_count, child_seed(seed, "easy"))?;
    let (infinite, infinite_se) = infinite_sample_value(inst, j, scenario_count, child_seed(seed, "infinite"))?;
    let dominates = value >= infinite - 3.0 * combined(se, infinite_se) - 1e-12;
    Ok(EasyGameReport { value, se, infinite, infinite_se, dominates })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageValue {
    pub stage: usize,
    pub atom: usize,
    pub value: f64,
    pub se: Option<f64>,
}

/// Game values along an exploration order; the first atom needs no game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaLower {
    pub stages: Vec<StageValue>,
    /// `λ̲ = min_j λ_j`; `None` for single-atom instances.
    pub value: Option<f64>,
}

/// Stage `j` plays the game for `order[j]` with atoms `order[..=j]` informed,
/// by `n` samples each or exactly when `n` is `None`.
pub fn stage_values(inst: &SemibanditInstance, order: &[usize], n: Option<u32>, scenario_count: usize, seed: u64) -> Result<LambdaLower> {
    let d = inst.dim();
    let mut stages = Vec::with_capacity(order.len().saturating_sub(1));
    for j in 1..order.len() {
        let informed = &order[..=j];
        let signal = match n {
            Some(n) => SignalSpec::samples(d, informed, n),
            None => SignalSpec::exact(d, informed),
        };
        let g = build_game(inst, order[j], &signal, scenario_count, child_seed(seed, &format!("stage{j}")))?;
        let s = solve_minimax(&g)?;
        stages.push(StageValue { stage: j, atom: order[j], value: s.value, se: s.value_se });
    }
    let value = stages.iter().map(|s| s.value).reduce(f64::min);
    Ok(LambdaLower { stages, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_singletons() -> SemibanditInstance {
        SemibanditInstance::uniform(2, vec![vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn sweep_is_monotone_and_converges() {
        let c = finite_sample_gap(&two_singletons(), 1, &[0, 1, 2, 4, 8, 256], 10_000, 5).unwrap();
        assert_eq!(c.rows[0].value, 0.0);
        // one sample each: only (fail, success) helps, worth 1/3 with probability 1/4
        assert!((c.rows[1].value - 1.0 / 12.0).abs() < 1e-12);
        assert!(c.monotone, "{c:?}");
        assert!((c.rows[5].value - 1.0 / 6.0).abs() < 0.02);
        assert!((c.infinite - 1.0 / 6.0).abs() < 3.0 * c.infinite_se.unwrap());
        assert!(c.to_csv().ends_with(&format!("1,inf,{:.12e},{:.12e}\n", c.infinite, c.infinite_se.unwrap())));
    }

    #[test]
    fn easy_game_on_singletons_matches_infinite_game() {
        let r = easy_game_value(&two_singletons(), 1, 10_000, 2).unwrap();
        assert!((r.value - 1.0 / 6.0).abs() < 3.0 * r.se.unwrap());
        assert!(r.dominates);
    }

    #[test]
    fn nested_actions_reduce_to_the_new_atom() {
        let inst = SemibanditInstance::uniform(2, vec![vec![0], vec![0, 1]]).unwrap();
        let r = easy_game_value(&inst, 1, 10_000, 3).unwrap();
        assert!((r.value - 0.5).abs() < 3.0 * r.se.unwrap(), "{r:?}");
    }

    #[test]
    fn dominated_recommendation_has_zero_value() {
        let scenarios = (0..10).map(|k| crate::recgame::Scenario { weight: 0.1, values: vec![0.0, k as f64 / 10.0], counts: None }).collect();
        let g = crate::recgame::GameSpec::from_scenarios(1, vec![0], vec![1], scenarios, true).unwrap();
        assert_eq!(solve_minimax(&g).unwrap().value, 0.0);
    }

    #[test]
    fn stage_values_are_reproducible() {
        let a = stage_values(&two_singletons(), &[0, 1], Some(3), 100, 9).unwrap();
        let b = stage_values(&two_singletons(), &[0, 1], Some(3), 100, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.stages.len(), 1);
        assert_eq!(stage_values(&two_singletons(), &[0], None, 100, 9).unwrap().value, None);
    }
}
