use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::linear::{psd_factor, LinearPrior, ObsModel};
use crate::geometry::{dot, ActionSet, BodyShape, ConvexBody, SamplerConfig};
use crate::linear_ts::SpectralHistory;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::stats::normal_cdf;
use crate::{Error, Result};

const REJECTION_ATTEMPTS: usize = 2_000_000;
/// Rejection budget per truncated-Gaussian draw before switching to hit-and-run.
const TRUNCATED_ATTEMPTS: usize = 20_000;
/// Beyond this many standard deviations the inverse CDF loses precision.
const TAIL_SWITCH: f64 = 8.0;

/// Belief over `ℓ*` given a history.
#[derive(Debug, Clone)]
pub enum PosteriorState {
    ExactGaussian(GaussianPosterior),
    UniformOnSlice(SlicePosterior),
    /// Uniform prior times a Gaussian likelihood: a Gaussian truncated to the body.
    GaussianOnBody(TruncatedPosterior),
    WeightedCloud(WeightedCloud),
}

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `F` with `F Fᵀ = cov`; its column count is the posterior rank.
    pub factor: DMatrix<f64>,
}

/// Uniform distribution on `K ∩ {ℓ : Cℓ = c}`, parametrised as
/// `ℓ = origin + basis·z` with `origin ⟂ range(basis)`.
#[derive(Debug, Clone)]
pub struct SlicePosterior {
    pub body: ConvexBody,
    pub origin: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub sampler: SamplerConfig,
    /// Half-space description of the slice in z-space (absent for balls).
    z_rows: Vec<Vec<f64>>,
    z_offsets: Vec<f64>,
    z_box: Vec<(f64, f64)>,
    z_center: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TruncatedPosterior {
    pub body: ConvexBody,
    pub sampler: SamplerConfig,
    /// Likelihood precision `G/σ²`.
    pub precision: DMatrix<f64>,
    /// Likelihood center `m` (least-squares fit).
    pub center: DVector<f64>,
    /// Present when proposals come from `N(m, precision⁻¹)`.
    gaussian_factor: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct WeightedCloud {
    pub particles: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub ess: f64,
    /// Set when the effective sample size falls below the warning floor.
    pub low_ess: bool,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    pub particles: usize,
    pub ess_warning: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions { particles: 100_000, ess_warning: 100.0 }
    }
}

impl WeightedCloud {
    /// Normalises nonnegative weights.
    pub fn new(particles: Vec<DVector<f64>>, weights: Vec<f64>, ess_warning: f64) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::invalid("cloud needs one weight per particle"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("cloud weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Contradiction("every particle has zero likelihood".into()));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(WeightedCloud { particles, weights, ess, low_ess: ess < ess_warning, cumulative })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &DVector<f64> {
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.particles.len() - 1);
        &self.particles[k]
    }
}

/// Posterior over `ℓ*` for the given prior, history and channel.
///
/// Gaussian priors with noiseless or Gaussian channels update exactly.
/// Uniform priors give a uniform slice (noiseless) or a Gaussian truncated to
/// the body (Gaussian noise). Every other pair falls back to self-normalised
/// importance sampling with the prior as proposal.
pub fn condition<R: Rng + ?Sized>(
    prior: &LinearPrior,
    history: &SpectralHistory,
    obs: &ObsModel,
    opts: &ConditionOptions,
    rng: &mut R,
) -> Result<PosteriorState> {
    obs.validate()?;
    if history.dim() != prior.dim() {
        return Err(Error::invalid("history and prior dimensions differ"));
    }
    match (prior, obs) {
        (LinearPrior::Gaussian { cov, .. }, ObsModel::Noiseless) => gaussian_update(cov, history, 0.0),
        (LinearPrior::Gaussian { cov, .. }, ObsModel::Gaussian { sigma }) => gaussian_update(cov, history, *sigma),
        (LinearPrior::Uniform { body, sampler }, ObsModel::Noiseless) => {
            for_steps_consistent(history)?;
            slice(body, *sampler, history.gram(), history.response())
        }
        (LinearPrior::Uniform { body, sampler }, ObsModel::Gaussian { sigma }) => {
            truncated(body, *sampler, history.gram(), history.response(), *sigma)
        }
        _ => cloud(prior, history, obs, opts, rng),
    }
}

/// Posterior from the sufficient statistics `G = Σ A_s A_sᵀ` and
/// `b = Σ R_s A_s` alone. Valid for Gaussian noise with either prior kind and
/// for uniform priors with noiseless observations.
pub fn condition_on_statistics(prior: &LinearPrior, gram: &DMatrix<f64>, response: &DVector<f64>, obs: &ObsModel) -> Result<PosteriorState> {
    obs.validate()?;
    let d = prior.dim();
    if gram.nrows() != d || response.len() != d {
        return Err(Error::invalid("statistics and prior dimensions differ"));
    }
    match (prior, obs) {
        (LinearPrior::Gaussian { cov, .. }, ObsModel::Gaussian { sigma }) => {
            let var = sigma * sigma;
            let prec0 = Cholesky::new(cov.clone()).ok_or_else(|| Error::invalid("prior covariance not positive definite"))?.inverse();
            let prec = prec0 + gram / var;
            let post_cov = Cholesky::new((&prec + prec.transpose()) * 0.5)
                .ok_or(Error::RankDeficient { min_eigenvalue: 0.0 })?
                .inverse();
            let post_cov = (&post_cov + post_cov.transpose()) * 0.5;
            let mean = &post_cov * response / var;
            let factor = psd_factor(&post_cov);
            Ok(PosteriorState::ExactGaussian(GaussianPosterior { mean, cov: post_cov, factor }))
        }
        (LinearPrior::Uniform { body, sampler }, ObsModel::Noiseless) => {
            let (_, pinv) = null_space_and_pinv(gram);
            let back = gram * (&pinv * response);
            if (&back - response).amax() > 1e-7 * (1.0 + response.amax()) {
                return Err(Error::Contradiction("noiseless responses are inconsistent".into()));
            }
            slice(body, *sampler, gram, response)
        }
        (LinearPrior::Uniform { body, sampler }, ObsModel::Gaussian { sigma }) => truncated(body, *sampler, gram, response, *sigma),
        _ => Err(Error::invalid("this prior and channel need the step-level history")),
    }
}

fn for_steps_consistent(history: &SpectralHistory) -> Result<()> {
    let (_, pinv) = null_space_and_pinv(history.gram());
    let origin = &pinv * history.response();
    for s in history.steps() {
        let pred = dot(&s.action, origin.as_slice());
        if (s.reward - pred).abs() > 1e-7 * (1.0 + s.reward.abs()) {
            return Err(Error::Contradiction(format!(
                "noiseless observations are inconsistent at t = {} (residual {:e})",
                s.time,
                s.reward - pred
            )));
        }
    }
    Ok(())
}

fn gaussian_update(cov0: &DMatrix<f64>, history: &SpectralHistory, sigma: f64) -> Result<PosteriorState> {
    let d = cov0.nrows();
    let mut mean = DVector::zeros(d);
    let mut cov = cov0.clone();
    let var = sigma * sigma;
    let scale = cov0.amax();
    for s in history.steps() {
        let a = DVector::from_row_slice(&s.action);
        let sa = &cov * &a;
        let q = a.dot(&sa);
        let pred = a.dot(&mean);
        if var == 0.0 && q <= 1e-12 * scale * a.norm_squared() {
            // already determined by earlier observations
            if (s.reward - pred).abs() > 1e-7 * (1.0 + s.reward.abs()) {
                return Err(Error::Contradiction(format!(
                    "noiseless reward {} at t = {} conflicts with determined value {pred}",
                    s.reward, s.time
                )));
            }
            continue;
        }
        let denom = q + var;
        mean.axpy((s.reward - pred) / denom, &sa, 1.0);
        cov.ger(-1.0 / denom, &sa, &sa, 1.0);
        cov = (&cov + cov.transpose()) * 0.5;
    }
    let factor = psd_factor(&cov);
    Ok(PosteriorState::ExactGaussian(GaussianPosterior { mean, cov, factor }))
}

/// Orthonormal basis of the null space of a PSD matrix and its pseudo-inverse.
fn null_space_and_pinv(g: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = g.nrows();
    let eig = SymmetricEigen::new((g + g.transpose()) * 0.5);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut = 1e-10 * top.max(1.0);
    let mut null_cols = Vec::new();
    let mut pinv = DMatrix::zeros(d, d);
    for k in 0..d {
        let v = eig.eigenvectors.column(k);
        if eig.eigenvalues[k] > cut {
            pinv += v * v.transpose() / eig.eigenvalues[k];
        } else {
            null_cols.push(v.into_owned());
        }
    }
    let basis = if null_cols.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(&null_cols) };
    (basis, pinv)
}

fn slice(body: &ConvexBody, sampler: SamplerConfig, gram: &DMatrix<f64>, response: &DVector<f64>) -> Result<PosteriorState> {
    let (basis, pinv) = null_space_and_pinv(gram);
    let origin = &pinv * response;
    let k = basis.ncols();
    let mut post = SlicePosterior {
        body: body.clone(),
        origin,
        basis,
        sampler,
        z_rows: Vec::new(),
        z_offsets: Vec::new(),
        z_box: Vec::new(),
        z_center: Vec::new(),
    };
    match &body.shape {
        BodyShape::Ball { radius, .. } => {
            if post.origin.norm() > radius * (1.0 + 1e-12) {
                return Err(Error::Contradiction("observations place ℓ outside the support".into()));
            }
        }
        _ => {
            let (rows, offsets) = body.as_half_spaces().expect("non-ball bodies have half-spaces");
            for (r, b) in rows.iter().zip(&offsets) {
                let rv = DVector::from_row_slice(r);
                let zr: Vec<f64> = (0..k).map(|c| rv.dot(&post.basis.column(c))).collect();
                let slack = b - rv.dot(&post.origin);
                if zr.iter().all(|x| x.abs() < 1e-14) {
                    if slack < -1e-9 {
                        return Err(Error::Contradiction("observations place ℓ outside the support".into()));
                    }
                    continue;
                }
                post.z_rows.push(zr);
                post.z_offsets.push(slack);
            }
            if k > 0 {
                let (center, radius) = chebyshev_center(&post.z_rows, &post.z_offsets, k)?;
                if radius <= 1e-12 {
                    return Err(Error::DegenerateGeometry("slice has empty relative interior".into()));
                }
                post.z_center = center;
                for c in 0..k {
                    let lo = -z_support(&post.z_rows, &post.z_offsets, k, c, -1.0)?;
                    let hi = z_support(&post.z_rows, &post.z_offsets, k, c, 1.0)?;
                    post.z_box.push((lo, hi));
                }
            } else if post.z_offsets.iter().any(|s| *s < -1e-9) {
                return Err(Error::Contradiction("observations place ℓ outside the support".into()));
            }
        }
    }
    Ok(PosteriorState::UniformOnSlice(post))
}

fn chebyshev_center(rows: &[Vec<f64>], offsets: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    let mut obj = vec![0.0; k + 1];
    obj[k] = 1.0;
    let mut lp = LinearProgram::new(obj);
    for c in 0..k {
        lp.set_free(c);
    }
    for (r, b) in rows.iter().zip(offsets) {
        let mut coeffs = r.clone();
        coeffs.push(r.iter().map(|x| x * x).sum::<f64>().sqrt());
        lp.add(coeffs, Relation::Le, *b);
    }
    match lp.solve()? {
        LpOutcome::Optimal(s) => Ok((s.x[..k].to_vec(), s.x[k])),
        LpOutcome::Infeasible => Err(Error::Contradiction("observations place ℓ outside the support".into())),
        LpOutcome::Unbounded => Err(Error::InfeasibleGeometry("slice is unbounded".into())),
    }
}

fn z_support(rows: &[Vec<f64>], offsets: &[f64], k: usize, coord: usize, sign: f64) -> Result<f64> {
    let mut obj = vec![0.0; k];
    obj[coord] = sign;
    let mut lp = LinearProgram::new(obj);
    for c in 0..k {
        lp.set_free(c);
    }
    for (r, b) in rows.iter().zip(offsets) {
        lp.add(r.clone(), Relation::Le, *b);
    }
    Ok(lp.solve_optimal()?.objective)
}

fn truncated(body: &ConvexBody, sampler: SamplerConfig, gram: &DMatrix<f64>, response: &DVector<f64>, sigma: f64) -> Result<PosteriorState> {
    let var = sigma * sigma;
    let precision = gram / var;
    let (_, pinv) = null_space_and_pinv(gram);
    let center = &pinv * response;
    let floor = crate::linear_ts::min_eigenvalue(gram) / var;
    let gaussian_factor = if floor >= 1.0 {
        let inv = Cholesky::new(precision.clone())
            .ok_or(Error::RankDeficient { min_eigenvalue: floor })?
            .inverse();
        Some(Cholesky::new((&inv + inv.transpose()) * 0.5).ok_or(Error::RankDeficient { min_eigenvalue: floor })?.l())
    } else {
        None
    };
    Ok(PosteriorState::GaussianOnBody(TruncatedPosterior { body: body.clone(), sampler, precision, center, gaussian_factor }))
}

fn cloud<R: Rng + ?Sized>(
    prior: &LinearPrior,
    history: &SpectralHistory,
    obs: &ObsModel,
    opts: &ConditionOptions,
    rng: &mut R,
) -> Result<PosteriorState> {
    if opts.particles == 0 {
        return Err(Error::invalid("particle count must be positive"));
    }
    let mut particles = Vec::with_capacity(opts.particles);
    let mut logw = Vec::with_capacity(opts.particles);
    for _ in 0..opts.particles {
        let x = prior.sample(rng)?;
        let lw: f64 = history.steps().iter().map(|s| obs.log_likelihood(s.reward, dot(&s.action, x.as_slice()))).sum();
        particles.push(x);
        logw.push(lw);
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::Contradiction("every particle has zero likelihood".into()));
    }
    let weights = logw.iter().map(|l| (l - top).exp()).collect();
    Ok(PosteriorState::WeightedCloud(WeightedCloud::new(particles, weights, opts.ess_warning)?))
}

/// Law of the scalar coordinate along a one-dimensional posterior.
#[derive(Debug, Clone, Copy)]
enum LineLaw {
    StandardNormal,
    Uniform(f64, f64),
}

impl LineLaw {
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        match *self {
            LineLaw::StandardNormal => {
                if lo > 0.0 {
                    normal_cdf(-lo) - normal_cdf(-hi)
                } else {
                    normal_cdf(hi) - normal_cdf(lo)
                }
            }
            LineLaw::Uniform(a, b) => ((hi.min(b) - lo.max(a)).max(0.0)) / (b - a),
        }
    }
}

/// `P[A* = A_i]` for `ℓ = m + z·f`, with ties going to the smaller index.
fn line_action_probabilities(actions: &ActionSet, m: &[f64], f: &[f64], law: LineLaw) -> Vec<f64> {
    let n = actions.len();
    let fnorm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..n)
        .map(|i| {
            let ai = actions.get(i).as_slice();
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..n {
                if k == i {
                    continue;
                }
                let ak = actions.get(k).as_slice();
                let diff: Vec<f64> = ai.iter().zip(ak).map(|(x, y)| x - y).collect();
                let c = dot(&diff, m);
                let g = dot(&diff, f);
                let dn = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
                if g.abs() <= 1e-14 * fnorm * dn {
                    let ok = if k < i { c > 0.0 } else { c >= 0.0 };
                    if !ok {
                        return 0.0;
                    }
                } else if g > 0.0 {
                    lo = lo.max(-c / g);
                } else {
                    hi = hi.min(-c / g);
                }
            }
            law.mass(lo, hi)
        })
        .collect()
}

impl PosteriorState {
    pub fn dim(&self) -> usize {
        match self {
            PosteriorState::ExactGaussian(g) => g.mean.len(),
            PosteriorState::UniformOnSlice(s) => s.origin.len(),
            PosteriorState::GaussianOnBody(t) => t.center.len(),
            PosteriorState::WeightedCloud(c) => c.particles[0].len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        match self {
            PosteriorState::ExactGaussian(g) => {
                let k = g.factor.ncols();
                if k == 0 {
                    return Ok(g.mean.clone());
                }
                let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
                Ok(&g.mean + &g.factor * z)
            }
            PosteriorState::UniformOnSlice(s) => s.sample(rng),
            PosteriorState::GaussianOnBody(t) => t.sample(rng),
            PosteriorState::WeightedCloud(c) => Ok(c.draw(rng).clone()),
        }
    }

    /// Posterior mean when the representation gives it exactly.
    pub fn mean_exact(&self) -> Option<DVector<f64>> {
        match self {
            PosteriorState::ExactGaussian(g) => Some(g.mean.clone()),
            PosteriorState::UniformOnSlice(s) => {
                let k = s.basis.ncols();
                match (&s.body.shape, k) {
                    (_, 0) | (BodyShape::Ball { .. }, _) => Some(s.origin.clone()),
                    (_, 1) => {
                        let (lo, hi) = s.z_box[0];
                        Some(&s.origin + s.basis.column(0) * (0.5 * (lo + hi)))
                    }
                    (BodyShape::Box { lower, upper }, k) if k == s.origin.len() => Some(DVector::from_iterator(
                        lower.len(),
                        lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)),
                    )),
                    _ => None,
                }
            }
            PosteriorState::GaussianOnBody(_) => None,
            PosteriorState::WeightedCloud(c) => {
                let mut m = DVector::zeros(c.particles[0].len());
                for (p, w) in c.particles.iter().zip(&c.weights) {
                    m.axpy(*w, p, 1.0);
                }
                Some(m)
            }
        }
    }

    /// `P^t[A* = A_i]` when the representation gives it exactly: Gaussians of
    /// rank ≤ 1, slices of dimension ≤ 1, and weighted clouds.
    pub fn action_probabilities_exact(&self, actions: &ActionSet) -> Option<Vec<f64>> {
        let n = actions.len();
        let point_mass = |x: &DVector<f64>| {
            let mut p = vec![0.0; n];
            p[crate::geometry::best_action(actions, x.as_slice())] = 1.0;
            p
        };
        match self {
            PosteriorState::ExactGaussian(g) => match g.factor.ncols() {
                0 => Some(point_mass(&g.mean)),
                1 => Some(line_action_probabilities(
                    actions,
                    g.mean.as_slice(),
                    g.factor.column(0).as_slice(),
                    LineLaw::StandardNormal,
                )),
                _ => None,
            },
            PosteriorState::UniformOnSlice(s) => match s.basis.ncols() {
                0 => Some(point_mass(&s.origin)),
                1 => {
                    let law = match &s.body.shape {
                        BodyShape::Ball { radius, .. } => {
                            let half = (radius * radius - s.origin.norm_squared()).max(0.0).sqrt();
                            LineLaw::Uniform(-half, half)
                        }
                        _ => LineLaw::Uniform(s.z_box[0].0, s.z_box[0].1),
                    };
                    Some(line_action_probabilities(actions, s.origin.as_slice(), s.basis.column(0).as_slice(), law))
                }
                _ => None,
            },
            PosteriorState::GaussianOnBody(_) => None,
            PosteriorState::WeightedCloud(c) => {
                let mut p = vec![0.0; n];
                for (x, w) in c.particles.iter().zip(&c.weights) {
                    p[crate::geometry::best_action(actions, x.as_slice())] += w;
                }
                Some(p)
            }
        }
    }
}

impl SlicePosterior {
    pub fn slice_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn lift(&self, z: &[f64]) -> DVector<f64> {
        let mut x = self.origin.clone();
        for (c, zc) in z.iter().enumerate() {
            x.axpy(*zc, &self.basis.column(c), 1.0);
        }
        x
    }

    fn z_inside(&self, z: &[f64]) -> bool {
        self.z_rows.iter().zip(&self.z_offsets).all(|(r, b)| dot(r, z) <= b + 1e-12)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let k = self.basis.ncols();
        if k == 0 {
            return Ok(self.origin.clone());
        }
        if k == self.origin.len() {
            return self.body.sample_uniform(rng, &self.sampler);
        }
        if let BodyShape::Ball { radius, .. } = &self.body.shape {
            let rho = (radius * radius - self.origin.norm_squared()).max(0.0).sqrt();
            let z = crate::geometry::uniform_in_ball(rng, k) * rho;
            return Ok(self.lift(z.as_slice()));
        }
        if k <= self.sampler.rejection_max_dim {
            let mut z = vec![0.0; k];
            for _ in 0..REJECTION_ATTEMPTS {
                for (zc, (lo, hi)) in z.iter_mut().zip(&self.z_box) {
                    *zc = lo + (hi - lo) * rng.random::<f64>();
                }
                if self.z_inside(&z) {
                    return Ok(self.lift(&z));
                }
            }
            return Err(Error::DegenerateGeometry("slice rejection acceptance too small; use hit-and-run".into()));
        }
        let mut z = self.z_center.clone();
        let steps = k * (self.sampler.burn_in_per_dim + self.sampler.thinning_per_dim);
        for _ in 0..steps {
            let u = crate::geometry::random_unit(rng, k);
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for (r, b) in self.z_rows.iter().zip(&self.z_offsets) {
                let ru = dot(r, u.as_slice());
                let slack = b - dot(r, &z);
                if ru > 0.0 {
                    hi = hi.min(slack / ru);
                } else if ru < 0.0 {
                    lo = lo.max(slack / ru);
                }
            }
            if hi > lo {
                let t = lo + (hi - lo) * rng.random::<f64>();
                for (zc, uc) in z.iter_mut().zip(u.iter()) {
                    *zc += t * uc;
                }
            }
        }
        Ok(self.lift(&z))
    }
}

impl TruncatedPosterior {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let d = self.center.len();
        for _ in 0..TRUNCATED_ATTEMPTS {
            match &self.gaussian_factor {
                Some(l) => {
                    let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                    let x = &self.center + l * z;
                    if self.body.contains(x.as_slice()) {
                        return Ok(x);
                    }
                }
                None => {
                    let x = self.body.sample_uniform(rng, &self.sampler)?;
                    let r = &x - &self.center;
                    let q = r.dot(&(&self.precision * &r));
                    if rng.random::<f64>() < (-0.5 * q).exp() {
                        return Ok(x);
                    }
                }
            }
        }
        Ok(self.hit_and_run(rng))
    }

    /// Hit-and-run from the origin with exact draws from the Gaussian
    /// restricted to each chord; used when rejection stalls.
    fn hit_and_run<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.center.len();
        let mut x = DVector::zeros(d);
        for _ in 0..d * (self.sampler.burn_in_per_dim + self.sampler.thinning_per_dim) {
            let u = crate::geometry::random_unit(rng, d);
            let (lo, hi) = self.body.chord(x.as_slice(), u.as_slice());
            if !(hi > lo) {
                continue;
            }
            let pu = &self.precision * &u;
            let a = u.dot(&pu);
            let t = if a <= 1e-300 {
                lo + (hi - lo) * rng.random::<f64>()
            } else {
                // density along the chord is N(mu, 1/a)
                let mu = (&self.center - &x).dot(&pu) / a;
                let s = a.sqrt().recip();
                mu + s * truncated_standard_normal(rng, (lo - mu) / s, (hi - mu) / s)
            };
            x.axpy(t.clamp(lo, hi), &u, 1.0);
        }
        x
    }
}

/// Exact draw from `N(0, 1)` restricted to `[lo, hi]`.
fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        return -truncated_standard_normal(rng, -hi, -lo);
    }
    if hi < -TAIL_SWITCH {
        // exponential proposals in the far left tail
        let a = -hi;
        loop {
            let x = a + rng.sample::<f64, _>(rand_distr::Exp1) / a;
            if -x >= lo && rng.random::<f64>() < (-0.5 * (x - a) * (x - a)).exp() {
                return -x;
            }
        }
    }
    let (p_lo, p_hi) = (normal_cdf(lo), normal_cdf(hi));
    let p = p_lo + (p_hi - p_lo) * rng.random::<f64>();
    crate::stats::normal_quantile(p).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn history(rows: &[(&[f64], f64)]) -> SpectralHistory {
        let mut h = SpectralHistory::new(rows[0].0.len());
        for (i, (a, r)) in rows.iter().enumerate() {
            h.push(i, &v(a), *r).unwrap();
        }
        h
    }

    fn cond(prior: &LinearPrior, h: &SpectralHistory, obs: ObsModel) -> Result<PosteriorState> {
        condition(prior, h, &obs, &ConditionOptions::default(), &mut derive_stream(0, 0))
    }

    #[test]
    fn noiseless_coordinate_conditioning() {
        let p = LinearPrior::standard_gaussian(2);
        let s = cond(&p, &history(&[(&[1.0, 0.0], 0.7)]), ObsModel::Noiseless).unwrap();
        let PosteriorState::ExactGaussian(g) = s else { panic!("expected exact Gaussian") };
        assert!((g.mean - v(&[0.7, 0.0])).amax() < 1e-15);
        assert!((g.cov - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).amax() < 1e-15);
        assert_eq!(g.factor.ncols(), 1);
    }

    #[test]
    fn conjugate_scalar_update() {
        let p = LinearPrior::standard_gaussian(1);
        let s = cond(&p, &history(&[(&[1.0], 1.0)]), ObsModel::Gaussian { sigma: 1.0 }).unwrap();
        let PosteriorState::ExactGaussian(g) = s else { panic!() };
        assert!((g.mean[0] - 0.5).abs() < 1e-15 && (g.cov[(0, 0)] - 0.5).abs() < 1e-15);
        // quadrature oracle: posterior ∝ φ(x)·φ(1 − x)
        let (mut z, mut m1, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        let h = 1e-3;
        let mut x = -10.0f64;
        while x <= 10.0 {
            let w = (-0.5 * x * x - 0.5 * (1.0 - x) * (1.0 - x)).exp();
            z += w;
            m1 += w * x;
            m2 += w * x * x;
            x += h;
        }
        let mean = m1 / z;
        assert!((mean - 0.5).abs() < 1e-6 && (m2 / z - mean * mean - 0.5).abs() < 1e-6);
    }

    #[test]
    fn disc_chord_slice() {
        let p = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let s = cond(&p, &history(&[(&[1.0, 0.0], 0.0)]), ObsModel::Noiseless).unwrap();
        assert!(s.mean_exact().unwrap().amax() < 1e-15);
        let mut rng = derive_stream(3, 0);
        let n = 100_000;
        let mut m = 0.0;
        for _ in 0..n {
            let x = s.sample(&mut rng).unwrap();
            assert!(x[0].abs() < 1e-12 && x[1].abs() <= 1.0);
            m += x[1] / n as f64;
        }
        assert!(m.abs() < 0.01, "{m}");
    }

    #[test]
    fn inconsistent_noiseless_observations_contradict() {
        let p = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let h = history(&[(&[1.0, 0.0], 0.2), (&[1.0, 0.0], 0.3)]);
        assert!(matches!(cond(&p, &h, ObsModel::Noiseless), Err(Error::Contradiction(_))));
        let outside = history(&[(&[1.0, 0.0], 1.5)]);
        assert!(matches!(cond(&p, &outside, ObsModel::Noiseless), Err(Error::Contradiction(_))));
        let g = LinearPrior::standard_gaussian(2);
        assert!(matches!(cond(&g, &h, ObsModel::Noiseless), Err(Error::Contradiction(_))));
    }

    #[test]
    fn box_slice_matches_segment() {
        let k = ConvexBody::boxed(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
        let p = LinearPrior::uniform(&k, 1.0).unwrap();
        let s = cond(&p, &history(&[(&[1.0, 0.0], 0.25)]), ObsModel::Noiseless).unwrap();
        let m = s.mean_exact().unwrap();
        assert!((m - v(&[0.25, 0.0])).amax() < 1e-12);
        let mut rng = derive_stream(4, 0);
        for _ in 0..1000 {
            let x = s.sample(&mut rng).unwrap();
            assert!((x[0] - 0.25).abs() < 1e-12 && x[1].abs() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn degenerate_gaussian_returns_mean() {
        let g = GaussianPosterior { mean: v(&[0.3, -0.2]), cov: DMatrix::zeros(2, 2), factor: DMatrix::zeros(2, 0) };
        let s = PosteriorState::ExactGaussian(g);
        let mut rng = derive_stream(5, 0);
        for _ in 0..10 {
            assert_eq!(s.sample(&mut rng).unwrap(), v(&[0.3, -0.2]));
        }
    }

    #[test]
    fn single_particle_cloud() {
        let c = WeightedCloud::new(vec![v(&[0.1, 0.2])], vec![1.0], 100.0).unwrap();
        assert!(c.low_ess && c.ess == 1.0);
        let s = PosteriorState::WeightedCloud(c);
        assert_eq!(s.sample(&mut derive_stream(6, 0)).unwrap(), v(&[0.1, 0.2]));
    }

    #[test]
    fn cloud_weights_normalised() {
        let p = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let h = history(&[(&[1.0, 0.0], 1.0), (&[0.0, 1.0], -1.0)]);
        let opts = ConditionOptions { particles: 5000, ess_warning: 100.0 };
        let s = condition(&p, &h, &ObsModel::BernoulliSign, &opts, &mut derive_stream(7, 0)).unwrap();
        let PosteriorState::WeightedCloud(c) = &s else { panic!() };
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.ess > 1000.0);
        // likelihood tilts toward +e1 and −e2
        let m = s.mean_exact().unwrap();
        assert!(m[0] > 0.1 && m[1] < -0.1, "{m}");
    }

    #[test]
    fn rank_one_gaussian_probabilities_sum_to_one() {
        let p = LinearPrior::standard_gaussian(2);
        let acts = ActionSet::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.8, 0.6]]).unwrap();
        let s = cond(&p, &history(&[(&[1.8, 0.6], 0.4)]), ObsModel::Noiseless).unwrap();
        let probs = s.action_probabilities_exact(&acts).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{probs:?}");
        // Monte-Carlo cross-check
        let mut rng = derive_stream(8, 0);
        let n = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let x = s.sample(&mut rng).unwrap();
            counts[crate::geometry::best_action(&acts, x.as_slice())] += 1;
        }
        for i in 0..3 {
            let f = counts[i] as f64 / n as f64;
            assert!((f - probs[i]).abs() < 4.0 * (probs[i] * (1.0 - probs[i]) / n as f64).sqrt() + 1e-9, "{i}: {f} vs {}", probs[i]);
        }
    }

    #[test]
    fn statistics_path_matches_sequential_update() {
        let p = LinearPrior::gaussian(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let h = history(&[(&[1.0, 0.0], 0.4), (&[0.6, 0.8], -0.2), (&[0.0, 1.0], 1.1)]);
        let obs = ObsModel::Gaussian { sigma: 0.7 };
        let PosteriorState::ExactGaussian(a) = cond(&p, &h, obs).unwrap() else { panic!() };
        let PosteriorState::ExactGaussian(b) = condition_on_statistics(&p, h.gram(), h.response(), &obs).unwrap() else { panic!() };
        assert!((&a.mean - &b.mean).amax() < 1e-12 && (&a.cov - &b.cov).amax() < 1e-12);
    }

    #[test]
    fn truncated_normal_moments() {
        let mut rng = derive_stream(9, 0);
        // E[Z | 1 ≤ Z ≤ 2] = (φ(1) − φ(2)) / (Φ(2) − Φ(1))
        let mid: f64 = (0..200_000).map(|_| truncated_standard_normal(&mut rng, 1.0, 2.0)).sum::<f64>() / 200_000.0;
        assert!((mid - 1.38324).abs() < 2e-3, "{mid}");
        // inverse Mills ratio at 10
        let far: f64 = (0..100_000).map(|_| -truncated_standard_normal(&mut rng, f64::NEG_INFINITY, -10.0)).sum::<f64>() / 100_000.0;
        assert!((far - 10.0981).abs() < 2e-3, "{far}");
        for _ in 0..1000 {
            let x = truncated_standard_normal(&mut rng, -0.5, 0.1);
            assert!((-0.5..=0.1).contains(&x));
        }
    }

    #[test]
    fn stalled_rejection_falls_back_to_hit_and_run() {
        let body = ConvexBody::unit_ball(2);
        let t = TruncatedPosterior {
            body: body.clone(),
            sampler: SamplerConfig::default(),
            precision: DMatrix::identity(2, 2) * 1e4,
            center: v(&[3.0, 0.0]),
            gaussian_factor: Some(DMatrix::identity(2, 2) * 0.01),
        };
        let mut rng = derive_stream(10, 0);
        for _ in 0..20 {
            let x = t.sample(&mut rng).unwrap();
            assert!(body.contains(x.as_slice()) && x[0] > 0.98, "{x}");
        }
    }

    #[test]
    fn truncated_posterior_stays_in_body() {
        let p = LinearPrior::uniform(&ConvexBody::unit_ball(2), 1.0).unwrap();
        let mut h = SpectralHistory::new(2);
        for _ in 0..10 {
            h.push(0, &v(&[1.0, 0.0]), 0.9).unwrap();
            h.push(1, &v(&[0.0, 1.0]), 0.3).unwrap();
        }
        let s = cond(&p, &h, ObsModel::Gaussian { sigma: 1.0 }).unwrap();
        let mut rng = derive_stream(9, 0);
        let n = 20_000;
        let mut m = DVector::zeros(2);
        for _ in 0..n {
            let x = s.sample(&mut rng).unwrap();
            assert!(x.norm() <= 1.0 + 1e-12);
            m += x / n as f64;
        }
        // cross-check the mean with a weighted cloud under the same likelihood
        let mut rng = derive_stream(10, 0);
        let opts = ConditionOptions { particles: 200_000, ess_warning: 100.0 };
        let c = super::cloud(&p, &h, &ObsModel::Gaussian { sigma: 1.0 }, &opts, &mut rng).unwrap();
        let mc = c.mean_exact().unwrap();
        assert!((&m - &mc).amax() < 0.02, "{m} vs {mc}");
    }
}
