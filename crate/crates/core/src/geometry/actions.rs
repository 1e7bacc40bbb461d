use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::{Error, Result};

/// Ordered finite action set; index order is the tie-breaking order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    dim: usize,
    vectors: Vec<DVector<f64>>,
}

impl ActionSet {
    pub fn new(vectors: Vec<DVector<f64>>) -> Result<Self> {
        let dim = vectors.first().map(|v| v.len()).ok_or_else(|| Error::invalid("empty action set"))?;
        if dim == 0 || vectors.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("actions must be finite vectors of one nonzero dimension"));
        }
        Ok(ActionSet { dim, vectors })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_row_slice(r)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn get(&self, i: usize) -> &DVector<f64> {
        &self.vectors[i]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(|v| v.iter().copied().collect()).collect()
    }

    /// Applies `v ↦ m·v` to every action.
    pub fn transformed(&self, m: &nalgebra::DMatrix<f64>) -> Result<Self> {
        Self::new(self.vectors.iter().map(|v| m * v).collect())
    }
}

/// `argmax_i ⟨ℓ, A_i⟩`, ties to the smallest index.
pub fn best_action(actions: &ActionSet, ell: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, a) in actions.vectors.iter().enumerate() {
        let v = dot(a.as_slice(), ell);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Membership of `ℓ` in the cone `S_i = {ℓ : ⟨ℓ, A_i − A⟩ ≥ 0 ∀A}`.
pub fn optimal_region_contains(actions: &ActionSet, i: usize, ell: &[f64]) -> bool {
    let vi = dot(actions.vectors[i].as_slice(), ell);
    actions.vectors.iter().all(|a| vi >= dot(a.as_slice(), ell))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Action set whose vectors all have unit norm, with cached separation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitActionSet {
    set: ActionSet,
    separation: Option<f64>,
}

const UNIT_TOL: f64 = 1e-12;

impl UnitActionSet {
    pub fn new(vectors: Vec<DVector<f64>>) -> Result<Self> {
        let set = ActionSet::new(vectors)?;
        if let Some((i, v)) = set.vectors.iter().enumerate().find(|(_, v)| (v.norm() - 1.0).abs() > UNIT_TOL) {
            return Err(Error::invalid(format!("action {i} has norm {} (not unit)", v.norm())));
        }
        let separation = (set.len() >= 2).then(|| {
            let mut eps = f64::INFINITY;
            for i in 0..set.len() {
                for j in i + 1..set.len() {
                    eps = eps.min((&set.vectors[i] - &set.vectors[j]).norm());
                }
            }
            eps
        });
        Ok(UnitActionSet { set, separation })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_row_slice(r)).collect())
    }

    /// `n` unit vectors in the plane at angles `2πk/n`, `k = 0..n`.
    pub fn equally_spaced(n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    DVector::from_row_slice(&[a.cos(), a.sin()])
                })
                .collect(),
        )
    }

    /// `e_1, −e_1, e_2, −e_2, …` when `signed`, else `e_1, …, e_d`.
    pub fn axes(d: usize, signed: bool) -> Result<Self> {
        let mut out = Vec::new();
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            if signed {
                out.push(e.clone());
                e[i] = -1.0;
            }
            out.push(e);
        }
        Self::new(out)
    }

    /// Minimum pairwise distance.
    pub fn separation(&self) -> Result<f64> {
        self.separation.ok_or_else(|| Error::invalid("separation needs at least two actions"))
    }

    pub fn as_set(&self) -> &ActionSet {
        &self.set
    }
}

impl std::ops::Deref for UnitActionSet {
    type Target = ActionSet;
    fn deref(&self) -> &ActionSet {
        &self.set
    }
}

/// Extreme points of a polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeVertexSet {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
}

impl PolytopeVertexSet {
    /// Builds the set after checking by LP that no vertex is a convex
    /// combination of the others.
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vertices.first().map(|v| v.len()).ok_or_else(|| Error::invalid("no vertices"))?;
        if dim == 0 || vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("vertices must share a nonzero dimension"));
        }
        let set = PolytopeVertexSet { dim, vertices };
        if let Some(k) = set.first_non_extreme()? {
            return Err(Error::DegenerateGeometry(format!("vertex {k} is not an extreme point")));
        }
        Ok(set)
    }

    /// Index of the first listed point lying in the hull of the others.
    pub fn first_non_extreme(&self) -> Result<Option<usize>> {
        let n = self.vertices.len();
        if n == 1 {
            return Ok(None);
        }
        for k in 0..n {
            let others: Vec<usize> = (0..n).filter(|&i| i != k).collect();
            let mut lp = LinearProgram::new(vec![0.0; others.len()]);
            for c in 0..self.dim {
                lp.add(others.iter().map(|&i| self.vertices[i][c]).collect(), Relation::Eq, self.vertices[k][c]);
            }
            lp.add(vec![1.0; others.len()], Relation::Eq, 1.0);
            if let LpOutcome::Optimal(_) = lp.solve()? {
                return Ok(Some(k));
            }
        }
        Ok(None)
    }

    pub fn as_action_set(&self) -> Result<ActionSet> {
        ActionSet::from_rows(&self.vertices)
    }
}

/// The polytope `P = {x : 10|x_d| + 2√d·max_{i<d}|x_i| ≤ 1}` used by the
/// exponential lower-bound construction, in both representations.
#[derive(Debug, Clone)]
pub struct SlabPolytope {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub vertices: PolytopeVertexSet,
}

impl SlabPolytope {
    pub fn new(d: usize) -> Result<Self> {
        if !(2..=20).contains(&d) {
            return Err(Error::invalid("slab polytope needs 2 ≤ d ≤ 20"));
        }
        let s = 2.0 * (d as f64).sqrt();
        let mut rows = Vec::new();
        for i in 0..d - 1 {
            for si in [1.0, -1.0] {
                for sd in [1.0, -1.0] {
                    let mut r = vec![0.0; d];
                    r[i] = si * s;
                    r[d - 1] = sd * 10.0;
                    rows.push(r);
                }
            }
        }
        let offsets = vec![1.0; rows.len()];
        let mut vertices = Vec::with_capacity((1 << (d - 1)) + 2);
        for mask in 0u32..(1 << (d - 1)) {
            vertices.push(
                (0..d)
                    .map(|i| if i == d - 1 { 0.0 } else if mask >> i & 1 == 1 { -1.0 / s } else { 1.0 / s })
                    .collect(),
            );
        }
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[d - 1] = sign / 10.0;
            vertices.push(v);
        }
        let vertices = PolytopeVertexSet { dim: d, vertices };
        let poly = SlabPolytope { dim: d, rows, offsets, vertices };
        for (k, v) in poly.vertices.vertices.iter().enumerate() {
            if !poly.satisfies_inequality(v) {
                return Err(Error::Assertion(format!("generated vertex {k} violates the defining inequality")));
            }
        }
        Ok(poly)
    }

    /// Direct evaluation of the nonlinear defining inequality.
    pub fn satisfies_inequality(&self, x: &[f64]) -> bool {
        let d = self.dim;
        let m = x[..d - 1].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        10.0 * x[d - 1].abs() + 2.0 * (d as f64).sqrt() * m <= 1.0 + 1e-12
    }

    pub fn satisfies_half_spaces(&self, x: &[f64]) -> bool {
        self.rows.iter().zip(&self.offsets).all(|(r, b)| dot(r, x) <= b + 1e-12)
    }
}

/// Geometry document action block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActionsDoc {
    Unit {
        #[serde(serialize_with = "super::fmt17::matrix")]
        vectors: Vec<Vec<f64>>,
    },
    Vertices {
        #[serde(serialize_with = "super::fmt17::matrix")]
        vectors: Vec<Vec<f64>>,
    },
}
