use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::geometry::{caratheodory_decompose, PolytopeVertexSet};
use crate::linear_ts::min_eigenvalue;
use crate::priors::ObsModel;
use crate::{Error, Result};

const DOMINATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WrappedSlot {
    pub inner_step: usize,
    pub vertex: usize,
    /// Decomposition weight; zero on padding slots.
    pub weight: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WrappedTranscript {
    /// `d + 1` slots per inner step.
    pub slots: Vec<WrappedSlot>,
    /// Feedback handed back to the inner algorithm, one per inner step.
    pub feedback: Vec<f64>,
    pub selected_vertex: Vec<usize>,
    pub inner_floor: f64,
    pub wrapped_floor: f64,
    /// `λ_min(wrapped Gram) ≥ λ_min(inner Gram) − 1e-9`.
    pub dominates: bool,
}

/// Replays inner actions from the hull using vertices only.
///
/// Each inner action is split into at most `d + 1` vertices, all of them are
/// played (padding with the base vertex), and one of their ±1 rewards is
/// forwarded with probability equal to its weight, so the forwarded reward has
/// the inner action's mean.
pub fn simulate_extreme_point_wrapper<R: Rng + ?Sized>(
    vertices: &PolytopeVertexSet,
    inner_actions: &[Vec<f64>],
    ell_star: &[f64],
    rng: &mut R,
) -> Result<WrappedTranscript> {
    let d = vertices.dim;
    if ell_star.len() != d {
        return Err(Error::invalid("ℓ* has the wrong dimension"));
    }
    let verts: Vec<DVector<f64>> = vertices.vertices.iter().map(|v| DVector::from_column_slice(v)).collect();
    let ell = DVector::from_column_slice(ell_star);
    if verts.iter().any(|v| v.dot(&ell).abs() > 1.0 + 1e-12) {
        return Err(Error::invalid("sign rewards need |⟨v, ℓ*⟩| ≤ 1 on every vertex"));
    }
    let obs = ObsModel::BernoulliSign;
    let mut inner_gram = DMatrix::zeros(d, d);
    let mut wrapped_gram = DMatrix::zeros(d, d);
    let mut slots = Vec::with_capacity(inner_actions.len() * (d + 1));
    let mut feedback = Vec::with_capacity(inner_actions.len());
    let mut selected = Vec::with_capacity(inner_actions.len());
    for (step, a) in inner_actions.iter().enumerate() {
        let dec = caratheodory_decompose(vertices, a)?;
        let av = DVector::from_column_slice(a);
        inner_gram.ger(1.0, &av, &av, 1.0);
        let mut plays: Vec<(f64, usize)> = dec.terms.clone();
        plays.resize(d + 1, (0.0, dec.base()));
        let start = slots.len();
        for &(w, k) in &plays {
            let v = &verts[k];
            wrapped_gram.ger(1.0, v, v, 1.0);
            slots.push(WrappedSlot { inner_step: step, vertex: k, weight: w, reward: obs.observe(rng, v.dot(&ell)) });
        }
        // inverse-CDF pick over the weights; the last positive weight absorbs rounding
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = dec.terms.len() - 1;
        for (idx, &(w, _)) in dec.terms.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = idx;
                break;
            }
        }
        feedback.push(slots[start + pick].reward);
        selected.push(slots[start + pick].vertex);
    }
    let inner_floor = min_eigenvalue(&inner_gram);
    let wrapped_floor = min_eigenvalue(&wrapped_gram);
    Ok(WrappedTranscript {
        slots,
        feedback,
        selected_vertex: selected,
        inner_floor,
        wrapped_floor,
        dominates: wrapped_floor >= inner_floor - DOMINATION_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SlabPolytope;
    use crate::rng::derive_stream;

    fn square() -> PolytopeVertexSet {
        PolytopeVertexSet::new(vec![vec![0.5, 0.0], vec![0.0, 0.5], vec![-0.5, 0.0], vec![0.0, -0.5]]).unwrap()
    }

    #[test]
    fn vertex_action_fills_every_slot() {
        let mut rng = derive_stream(1, 0);
        let t = simulate_extreme_point_wrapper(&square(), &[vec![0.5, 0.0]], &[1.0, 0.0], &mut rng).unwrap();
        assert_eq!(t.slots.len(), 3);
        assert!(t.slots.iter().all(|s| s.vertex == 0));
        assert_eq!(t.selected_vertex, vec![0]);
    }

    #[test]
    fn midpoint_feedback_has_midpoint_mean() {
        let ell = [0.8, -0.4];
        let mid = vec![0.25, 0.25];
        let mut rng = derive_stream(2, 0);
        let t = simulate_extreme_point_wrapper(&square(), &vec![mid; 100_000], &ell, &mut rng).unwrap();
        let n = t.feedback.len() as f64;
        let mean = t.feedback.iter().sum::<f64>() / n;
        let se = (1.0 / n).sqrt();
        // (⟨v₀, ℓ⟩ + ⟨v₁, ℓ⟩)/2 = (0.4 − 0.2)/2
        assert!((mean - 0.1).abs() < 4.0 * se, "{mean}");
        assert!(t.dominates);
    }

    #[test]
    fn outside_hull_is_rejected() {
        let mut rng = derive_stream(3, 0);
        let e = simulate_extreme_point_wrapper(&square(), &[vec![0.5, 0.5]], &[0.0, 0.0], &mut rng);
        assert!(matches!(e, Err(Error::InfeasibleGeometry(_))));
    }

    #[test]
    fn gram_domination_on_slab_polytope() {
        let slab = SlabPolytope::new(3).unwrap();
        let verts = slab.vertices;
        for rep in 0..20 {
            let mut rng = derive_stream(4, rep);
            let inner: Vec<Vec<f64>> = (0..30)
                .map(|_| {
                    let w: Vec<f64> = (0..verts.vertices.len()).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = w.iter().sum();
                    (0..3).map(|c| verts.vertices.iter().zip(&w).map(|(v, wi)| v[c] * wi / s).sum()).collect()
                })
                .collect();
            let t = simulate_extreme_point_wrapper(&verts, &inner, &[0.3, -0.2, 0.5], &mut rng).unwrap();
            assert!(t.dominates, "rep {rep}: {} < {}", t.wrapped_floor, t.inner_floor);
        }
    }
}
