//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Every LP in the crate is tiny (at most a few hundred columns), so a dense
//! tableau is the simplest thing that is exact enough: all comparisons use a
//! fixed tolerance of [`TOL`].

use crate::{Error, Result};

pub const TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective·x` subject to the constraints, with `x_i ≥ 0` unless
/// variable `i` is marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint; `Le` rows of a maximisation get
    /// nonnegative duals.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram { objective, constraints: Vec::new(), free: vec![false; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width mismatch");
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.free[var] = true;
        self
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self)?.run(self)
    }

    /// Solves and insists on an optimum.
    pub fn solve_optimal(&self) -> Result<LpSolution> {
        match self.solve()? {
            LpOutcome::Optimal(s) => Ok(s),
            LpOutcome::Infeasible => Err(Error::Solver("infeasible".into())),
            LpOutcome::Unbounded => Err(Error::Solver("unbounded".into())),
        }
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `(rows + 1) × (cols + 1)`, last row is the objective row holding
    /// `z_j - c_j`, last column the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    artificial_start: usize,
    /// Column that formed the identity for each row at start.
    initial_col: Vec<usize>,
    flipped: Vec<bool>,
    /// Structural column of each (possibly split) original variable.
    pos_col: Vec<usize>,
    neg_col: Vec<Option<usize>>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self> {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        if lp.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite objective"));
        }
        let mut pos_col = Vec::with_capacity(n);
        let mut neg_col = Vec::with_capacity(n);
        let mut next = 0;
        for i in 0..n {
            pos_col.push(next);
            next += 1;
            if lp.free[i] {
                neg_col.push(Some(next));
                next += 1;
            } else {
                neg_col.push(None);
            }
        }
        let structural = next;
        let mut flipped = vec![false; m];
        let mut relations = Vec::with_capacity(m);
        for (r, c) in lp.constraints.iter().enumerate() {
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(Error::invalid("non-finite constraint"));
            }
            let mut rel = c.relation;
            if c.rhs < 0.0 {
                flipped[r] = true;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            relations.push(rel);
        }
        let n_slack = relations.iter().filter(|r| **r != Relation::Eq).count();
        let n_art = relations.iter().filter(|r| **r != Relation::Le).count();
        let artificial_start = structural + n_slack;
        let cols = artificial_start + n_art;
        let width = cols + 1;
        let mut data = vec![0.0; (m + 1) * width];
        let mut basis = vec![0; m];
        let mut initial_col = vec![0; m];
        let mut slack = structural;
        let mut art = artificial_start;
        for (r, c) in lp.constraints.iter().enumerate() {
            let sign = if flipped[r] { -1.0 } else { 1.0 };
            let row = &mut data[r * width..(r + 1) * width];
            for i in 0..n {
                row[pos_col[i]] = sign * c.coeffs[i];
                if let Some(nc) = neg_col[i] {
                    row[nc] = -sign * c.coeffs[i];
                }
            }
            row[cols] = sign * c.rhs;
            match relations[r] {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis[r] = slack;
                    initial_col[r] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[r] = art;
                    initial_col[r] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis[r] = art;
                    initial_col[r] = art;
                    art += 1;
                }
            }
        }
        Ok(Tableau {
            rows: m,
            cols,
            data,
            basis,
            artificial_start,
            initial_col,
            flipped,
            pos_col,
            neg_col,
        })
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn obj_row(&self) -> usize {
        self.rows
    }

    /// Installs `z_j - c_j` for cost vector `cost` given the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let width = self.cols + 1;
        let obj = self.obj_row();
        for c in 0..width {
            self.data[obj * width + c] = if c < self.cols { -cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..width {
                    let v = self.data[r * width + c];
                    self.data[obj * width + c] += cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let p = self.data[pr * width + pc];
        for c in 0..width {
            self.data[pr * width + c] /= p;
        }
        self.data[pr * width + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * width);
        let (prow, after) = rest.split_at_mut(width);
        let eliminate = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for c in 0..width {
                    row[c] -= f * prow[c];
                }
                row[pc] = 0.0;
            }
        };
        for row in before.chunks_mut(width) {
            eliminate(row);
        }
        for row in after.chunks_mut(width) {
            eliminate(row);
        }
        self.basis[pr] = pc;
    }

    /// Bland's rule iterations; `allowed` bounds the columns that may enter.
    fn iterate(&mut self, allowed: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let obj = self.obj_row();
            let entering = (0..allowed).find(|&c| self.at(obj, c) < -TOL);
            let Some(pc) = entering else {
                return Ok(true);
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > TOL {
                    let ratio = self.at(r, self.cols) / a;
                    let better = match best {
                        None => true,
                        Some((br, _, bv)) => {
                            ratio < br - TOL || (ratio <= br + TOL && self.basis[r] < bv)
                        }
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            match best {
                None => return Ok(false),
                Some((_, pr, _)) => self.pivot(pr, pc),
            }
        }
        Err(Error::Solver(format!("pivot limit {MAX_PIVOTS} exceeded")))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let has_art = self.artificial_start < self.cols;
        if has_art {
            let mut cost = vec![0.0; self.cols];
            for c in cost.iter_mut().skip(self.artificial_start) {
                *c = -1.0;
            }
            self.set_objective(&cost);
            self.iterate(self.cols)?;
            let phase1 = self.at(self.obj_row(), self.cols);
            let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
            if phase1 < -TOL * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // drive zero-valued artificials out where possible
            for r in 0..self.rows {
                if self.basis[r] >= self.artificial_start {
                    if let Some(pc) =
                        (0..self.artificial_start).find(|&c| self.at(r, c).abs() > TOL)
                    {
                        self.pivot(r, pc);
                    }
                }
            }
        }
        let mut cost = vec![0.0; self.cols];
        for (i, &c) in lp.objective.iter().enumerate() {
            cost[self.pos_col[i]] = c;
            if let Some(nc) = self.neg_col[i] {
                cost[nc] = -c;
            }
        }
        self.set_objective(&cost);
        if !self.iterate(self.artificial_start)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut col_value = vec![0.0; self.cols];
        for r in 0..self.rows {
            col_value[self.basis[r]] = self.at(r, self.cols);
        }
        let x: Vec<f64> = (0..lp.num_vars())
            .map(|i| {
                let v = col_value[self.pos_col[i]];
                match self.neg_col[i] {
                    Some(nc) => v - col_value[nc],
                    None => v,
                }
            })
            .collect();
        let obj = self.obj_row();
        let duals = (0..self.rows)
            .map(|r| {
                let y = self.at(obj, self.initial_col[r]);
                if self.flipped[r] {
                    -y
                } else {
                    y
                }
            })
            .collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal(LpSolution { x, objective, duals }))
    }
}
