use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::fmt17;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::rng::derive_stream;
use crate::{Error, Result};

/// Shape of a compact convex body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BodyShape {
    /// Centered Euclidean ball.
    Ball {
        dim: usize,
        #[serde(serialize_with = "fmt17::scalar")]
        radius: f64,
    },
    /// Axis-aligned box `∏ [lower_i, upper_i]`.
    Box {
        #[serde(serialize_with = "fmt17::vector")]
        lower: Vec<f64>,
        #[serde(serialize_with = "fmt17::vector")]
        upper: Vec<f64>,
    },
    /// `{x : rows[k]·x ≤ offsets[k]}`.
    HalfSpaces {
        #[serde(serialize_with = "fmt17::matrix")]
        rows: Vec<Vec<f64>>,
        #[serde(serialize_with = "fmt17::vector")]
        offsets: Vec<f64>,
    },
}

/// A convex body `K` together with its declared regularity `r`, meaning
/// `B_r(0) ⊆ K ⊆ B_1(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexBody {
    #[serde(flatten)]
    pub shape: BodyShape,
    #[serde(serialize_with = "fmt17::scalar")]
    pub regularity: f64,
}

/// Controls how uniform samples are drawn from half-space bodies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Rejection from the bounding unit ball up to this dimension.
    pub rejection_max_dim: usize,
    /// Hit-and-run burn-in, in multiples of the dimension.
    pub burn_in_per_dim: usize,
    /// Hit-and-run thinning, in multiples of the dimension.
    pub thinning_per_dim: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { rejection_max_dim: 4, burn_in_per_dim: 50, thinning_per_dim: 1 }
    }
}

/// Below this estimated acceptance rate rejection sampling gives up.
const MIN_ACCEPTANCE: f64 = 1e-6;
const REJECTION_ATTEMPTS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    /// Smallest support value `h_K(u)` over the probed unit directions.
    pub min_support: f64,
    /// Largest norm of a probed support point.
    pub max_norm: f64,
    pub inner_ok: bool,
    pub outer_ok: bool,
}

impl RegularityReport {
    pub fn holds(&self) -> bool {
        self.inner_ok && self.outer_ok
    }
}

impl ConvexBody {
    pub fn ball(dim: usize, radius: f64) -> Self {
        ConvexBody { shape: BodyShape::Ball { dim, radius }, regularity: radius.min(1.0) }
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(dim, 1.0)
    }

    /// Axis box; the declared regularity is the distance from the origin to
    /// the nearest face.
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("box bounds must have equal nonzero length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("box bounds must be finite with lower < upper"));
        }
        let r = lower.iter().zip(&upper).map(|(l, u)| (-l).min(*u)).fold(f64::INFINITY, f64::min);
        Ok(ConvexBody { shape: BodyShape::Box { lower, upper }, regularity: r.max(0.0) })
    }

    pub fn half_spaces(rows: Vec<Vec<f64>>, offsets: Vec<f64>, regularity: f64) -> Result<Self> {
        if rows.is_empty() || rows.len() != offsets.len() {
            return Err(Error::invalid("half-space body needs matching rows and offsets"));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("half-space rows must share a nonzero width"));
        }
        let body = ConvexBody { shape: BodyShape::HalfSpaces { rows, offsets }, regularity };
        // boundedness: the support function must be finite on all axes
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            body.support(&e)?;
            e[i] = -1.0;
            body.support(&e)?;
        }
        Ok(body)
    }

    /// Scales the body by `s > 0` (regularity scales too).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid("scale must be positive"));
        }
        let shape = match &self.shape {
            BodyShape::Ball { dim, radius } => BodyShape::Ball { dim: *dim, radius: radius * s },
            BodyShape::Box { lower, upper } => BodyShape::Box {
                lower: lower.iter().map(|v| v * s).collect(),
                upper: upper.iter().map(|v| v * s).collect(),
            },
            BodyShape::HalfSpaces { rows, offsets } => BodyShape::HalfSpaces {
                rows: rows.clone(),
                offsets: offsets.iter().map(|v| v * s).collect(),
            },
        };
        Ok(ConvexBody { shape, regularity: self.regularity * s })
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            BodyShape::Ball { dim, .. } => *dim,
            BodyShape::Box { lower, .. } => lower.len(),
            BodyShape::HalfSpaces { rows, .. } => rows[0].len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        match &self.shape {
            BodyShape::Ball { radius, .. } => {
                x.iter().map(|v| v * v).sum::<f64>() <= radius * radius * (1.0 + SLACK)
            }
            BodyShape::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - SLACK && *v <= u + SLACK),
            BodyShape::HalfSpaces { rows, offsets } => rows
                .iter()
                .zip(offsets)
                .all(|(r, b)| r.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() <= b + SLACK),
        }
    }

    /// `max_{ℓ∈K} ⟨ℓ, v⟩`.
    pub fn support(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.support_point(v)?.dot(v))
    }

    /// A maximiser of `⟨ℓ, v⟩` over the body.
    pub fn support_point(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("direction must be finite with matching dimension"));
        }
        match &self.shape {
            BodyShape::Ball { radius, .. } => {
                let n = v.norm();
                if n == 0.0 {
                    Ok(DVector::zeros(v.len()))
                } else {
                    Ok(v * (*radius / n))
                }
            }
            BodyShape::Box { lower, upper } => Ok(DVector::from_iterator(
                v.len(),
                v.iter().zip(lower.iter().zip(upper)).map(|(c, (l, u))| if *c >= 0.0 { *u } else { *l }),
            )),
            BodyShape::HalfSpaces { rows, offsets } => {
                let d = v.len();
                let mut lp = LinearProgram::new(v.iter().copied().collect());
                for i in 0..d {
                    lp.set_free(i);
                }
                for (r, b) in rows.iter().zip(offsets) {
                    lp.add(r.clone(), Relation::Le, *b);
                }
                match lp.solve()? {
                    LpOutcome::Optimal(s) => Ok(DVector::from_vec(s.x)),
                    LpOutcome::Unbounded => {
                        Err(Error::InfeasibleGeometry("half-space body is unbounded".into()))
                    }
                    LpOutcome::Infeasible => {
                        Err(Error::InfeasibleGeometry("half-space body is empty".into()))
                    }
                }
            }
        }
    }

    /// `width_v(K) = max⟨ℓ,v⟩ − min⟨ℓ,v⟩`.
    pub fn width(&self, v: &DVector<f64>) -> Result<f64> {
        match &self.shape {
            BodyShape::Ball { radius, .. } => {
                if v.len() != self.dim() {
                    return Err(Error::invalid("dimension mismatch"));
                }
                Ok(2.0 * radius * v.norm())
            }
            BodyShape::Box { lower, upper } => {
                if v.len() != self.dim() {
                    return Err(Error::invalid("dimension mismatch"));
                }
                Ok(v.iter().zip(lower.iter().zip(upper)).map(|(c, (l, u))| c.abs() * (u - l)).sum())
            }
            BodyShape::HalfSpaces { .. } => Ok(self.support(v)? + self.support(&-v)?),
        }
    }

    /// Checks `B_r(0) ⊆ K ⊆ B_1(0)` for the declared `r`: exactly for balls and
    /// boxes, and by probing support points along the axes and 64 fixed
    /// pseudo-random directions for half-space bodies.
    pub fn check_regularity(&self) -> Result<RegularityReport> {
        let r = self.regularity;
        let tol = 1e-9;
        match &self.shape {
            BodyShape::Ball { radius, .. } => Ok(RegularityReport {
                min_support: *radius,
                max_norm: *radius,
                inner_ok: *radius >= r - tol,
                outer_ok: *radius <= 1.0 + tol,
            }),
            BodyShape::Box { lower, upper } => {
                let min_support =
                    lower.iter().zip(upper).map(|(l, u)| (-l).min(*u)).fold(f64::INFINITY, f64::min);
                let max_norm = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Ok(RegularityReport {
                    min_support,
                    max_norm,
                    inner_ok: min_support >= r - tol,
                    outer_ok: max_norm <= 1.0 + tol,
                })
            }
            BodyShape::HalfSpaces { rows, offsets } => {
                let d = self.dim();
                // exact inner radius: distance from origin to each facet
                let min_support = rows
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| b / a.iter().map(|x| x * x).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                let mut dirs = Vec::new();
                for i in 0..d {
                    for s in [1.0, -1.0] {
                        let mut e = DVector::zeros(d);
                        e[i] = s;
                        dirs.push(e);
                    }
                }
                let mut rng = derive_stream(0x5eed_0b0d_u64, 0);
                for _ in 0..64 {
                    dirs.push(random_unit(&mut rng, d));
                }
                let mut max_norm: f64 = 0.0;
                for u in &dirs {
                    max_norm = max_norm.max(self.support_point(u)?.norm());
                }
                Ok(RegularityReport {
                    min_support,
                    max_norm,
                    inner_ok: min_support >= r - tol,
                    outer_ok: max_norm <= 1.0 + tol,
                })
            }
        }
    }

    /// Interval `[lo, hi]` of `t` with `x + t·u ∈ K`, for `x` inside the body.
    pub fn chord(&self, x: &[f64], u: &[f64]) -> (f64, f64) {
        match &self.shape {
            BodyShape::Ball { radius, .. } => {
                let a: f64 = u.iter().map(|v| v * v).sum();
                let b: f64 = x.iter().zip(u).map(|(p, q)| p * q).sum();
                let c: f64 = x.iter().map(|v| v * v).sum::<f64>() - radius * radius;
                let disc = (b * b - a * c).max(0.0).sqrt();
                ((-b - disc) / a, (-b + disc) / a)
            }
            BodyShape::Box { lower, upper } => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..x.len() {
                    if u[i] != 0.0 {
                        let t1 = (lower[i] - x[i]) / u[i];
                        let t2 = (upper[i] - x[i]) / u[i];
                        lo = lo.max(t1.min(t2));
                        hi = hi.min(t1.max(t2));
                    }
                }
                (lo, hi)
            }
            BodyShape::HalfSpaces { rows, offsets } => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for (a, b) in rows.iter().zip(offsets) {
                    let au: f64 = a.iter().zip(u).map(|(p, q)| p * q).sum();
                    let ax: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                    let slack = b - ax;
                    if au > 0.0 {
                        hi = hi.min(slack / au);
                    } else if au < 0.0 {
                        lo = lo.max(slack / au);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Uniform sample from the body.
    ///
    /// Balls and boxes are sampled directly. Half-space bodies use rejection
    /// from the bounding unit ball up to `cfg.rejection_max_dim`, otherwise a
    /// hit-and-run chain started at the origin (interior by regularity).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, cfg: &SamplerConfig) -> Result<DVector<f64>> {
        let d = self.dim();
        match &self.shape {
            BodyShape::Ball { radius, .. } => Ok(uniform_in_ball(rng, d) * *radius),
            BodyShape::Box { lower, upper } => Ok(DVector::from_iterator(
                d,
                lower.iter().zip(upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()),
            )),
            BodyShape::HalfSpaces { .. } if d <= cfg.rejection_max_dim => {
                for _ in 0..REJECTION_ATTEMPTS {
                    let x = uniform_in_ball(rng, d);
                    if self.contains(x.as_slice()) {
                        return Ok(x);
                    }
                }
                Err(Error::DegenerateGeometry(format!(
                    "rejection acceptance below {MIN_ACCEPTANCE:e}; use hit-and-run"
                )))
            }
            BodyShape::HalfSpaces { .. } => {
                let steps = d * (cfg.burn_in_per_dim + cfg.thinning_per_dim);
                let mut x = vec![0.0; d];
                self.hit_and_run(rng, &mut x, steps);
                Ok(DVector::from_vec(x))
            }
        }
    }

    /// Runs `steps` hit-and-run moves from `x` (which must lie inside).
    pub fn hit_and_run<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64], steps: usize) {
        let d = x.len();
        for _ in 0..steps {
            let u = random_unit(rng, d);
            let (lo, hi) = self.chord(x, u.as_slice());
            if !(hi > lo) {
                continue;
            }
            let t = lo + (hi - lo) * rng.random::<f64>();
            for i in 0..d {
                x[i] += t * u[i];
            }
        }
    }

    /// The body as explicit half-spaces (balls have none).
    pub fn as_half_spaces(&self) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        match &self.shape {
            BodyShape::Ball { .. } => None,
            BodyShape::Box { lower, upper } => {
                let d = lower.len();
                let mut rows = Vec::with_capacity(2 * d);
                let mut offsets = Vec::with_capacity(2 * d);
                for i in 0..d {
                    let mut r = vec![0.0; d];
                    r[i] = 1.0;
                    rows.push(r);
                    offsets.push(upper[i]);
                    let mut r = vec![0.0; d];
                    r[i] = -1.0;
                    rows.push(r);
                    offsets.push(-lower[i]);
                }
                Some((rows, offsets))
            }
            BodyShape::HalfSpaces { rows, offsets } => Some((rows.clone(), offsets.clone())),
        }
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let g = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = g.norm();
        if n > 1e-300 {
            return g / n;
        }
    }
}

/// Uniform point in the unit ball.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    let dir = random_unit(rng, d);
    let radius = rng.random::<f64>().powf(1.0 / d as f64);
    dir * radius
}
