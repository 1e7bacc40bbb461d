use super::PolytopeVertexSet;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::{Error, Result};

/// Weights below this are treated as zero after the LP solve.
const DROP: f64 = 1e-13;
const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Convex combination of polytope vertices with at most `d + 1` nonzero
/// weights (a basic feasible solution).
///
/// In the affine chart anchored at [`Decomposition::base`] the point is
/// `base + Σ w_k (v_k − base)` over at most `d` chart terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// `(weight, vertex index)` pairs with positive weights summing to 1.
    pub terms: Vec<(f64, usize)>,
}

impl Decomposition {
    pub fn base(&self) -> usize {
        self.terms.last().expect("nonempty decomposition").1
    }

    pub fn chart_terms(&self) -> &[(f64, usize)] {
        &self.terms[..self.terms.len() - 1]
    }

    pub fn reconstruct(&self, vertices: &PolytopeVertexSet) -> Vec<f64> {
        let mut out = vec![0.0; vertices.dim];
        for &(w, k) in &self.terms {
            for (o, v) in out.iter_mut().zip(&vertices.vertices[k]) {
                *o += w * v;
            }
        }
        out
    }
}

/// Writes `point` as a convex combination of the vertices.
pub fn caratheodory_decompose(vertices: &PolytopeVertexSet, point: &[f64]) -> Result<Decomposition> {
    let d = vertices.dim;
    if point.len() != d || point.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("point must be finite with the polytope's dimension"));
    }
    let n = vertices.vertices.len();
    let mut lp = LinearProgram::new(vec![0.0; n]);
    for c in 0..d {
        lp.add(vertices.vertices.iter().map(|v| v[c]).collect(), Relation::Eq, point[c]);
    }
    lp.add(vec![1.0; n], Relation::Eq, 1.0);
    let sol = match lp.solve()? {
        LpOutcome::Optimal(s) => s,
        _ => return Err(Error::InfeasibleGeometry("point lies outside the convex hull".into())),
    };
    let mut terms: Vec<(f64, usize)> =
        sol.x.iter().enumerate().filter(|(_, &w)| w > DROP).map(|(k, &w)| (w.min(1.0), k)).collect();
    if terms.is_empty() {
        return Err(Error::Solver("decomposition LP returned no positive weight".into()));
    }
    let total: f64 = terms.iter().map(|t| t.0).sum();
    for t in &mut terms {
        t.0 /= total;
    }
    let dec = Decomposition { terms };
    let err = dec.reconstruct(vertices).iter().zip(point).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if err > RECONSTRUCTION_TOL {
        return Err(Error::InfeasibleGeometry(format!("point outside hull (residual {err:e})")));
    }
    Ok(dec)
}
