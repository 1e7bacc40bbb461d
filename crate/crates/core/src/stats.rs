//! Sufficient statistics, normal-distribution helpers and the replication
//! driver shared by every Monte-Carlo experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_stream, Stream};
use crate::Result;

/// Two-sided 99% normal quantile, used for every "99% CI" in the crate.
pub const Z99: f64 = 2.5758293035489004;

/// Replications are grouped into fixed-size chunks; chunk results are merged in
/// index order so the floating-point summation order never depends on the
/// number of worker threads.
pub const CHUNK: u64 = 2048;

/// Count, sum and sum of squares of a scalar sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &RunningStats) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance; `None` with fewer than two observations.
    pub fn variance(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let m = self.sum / n;
        Some(((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0))
    }

    /// Standard error of the mean; `None` with fewer than two observations.
    pub fn std_error(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.count as f64).sqrt())
    }
}

/// Per-chunk state of a replicated experiment.
pub trait Accumulator: Send {
    fn merge(&mut self, other: Self);
}

impl Accumulator for RunningStats {
    fn merge(&mut self, other: Self) {
        RunningStats::merge(self, &other);
    }
}

impl<A: Accumulator> Accumulator for Vec<A> {
    fn merge(&mut self, other: Self) {
        assert_eq!(self.len(), other.len(), "accumulator shapes differ");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl<A: Accumulator, B: Accumulator> Accumulator for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

impl<const N: usize> Accumulator for [RunningStats; N] {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            a.merge(b);
        }
    }
}

/// Runs `replications` independent replications, replication `i` drawing from
/// `derive_stream(seed, i)`. Results are bit-identical for any rayon pool size.
pub fn replicate<A, I, F>(seed: u64, replications: u64, init: I, body: F) -> Result<A>
where
    A: Accumulator,
    I: Fn() -> A + Sync,
    F: Fn(&mut Stream, u64, &mut A) -> Result<()> + Sync,
{
    let chunks = replications.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(replications);
            for i in lo..hi {
                let mut rng = derive_stream(seed, i);
                body(&mut rng, i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<A>>>()?;
    let mut total = init();
    for p in parts {
        total.merge(p);
    }
    Ok(total)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn running_stats_matches_direct_formulas() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let mut s = RunningStats::default();
        xs.iter().for_each(|&x| s.push(x));
        assert_eq!(s.mean(), 3.5);
        assert!((s.variance().unwrap() - 7.0).abs() < 1e-12);
        assert!(RunningStats::default().std_error().is_none());
    }

    #[test]
    fn normal_helpers_agree() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        // statrs erfc carries ~1e-12 absolute error in this range
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 5e-12);
        assert!((normal_quantile(0.995) - Z99).abs() < 1e-9);
    }

    #[test]
    fn line_fit_exact_line() {
        let f = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    fn run(threads: usize) -> RunningStats {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            replicate(9, 10_000, RunningStats::default, |rng, _, acc| {
                acc.push(rng.random::<f64>());
                Ok(())
            })
            .unwrap()
        })
    }

    #[test]
    fn replicate_is_independent_of_thread_count() {
        let a = run(1);
        let b = run(3);
        assert_eq!(a.sum.to_bits(), b.sum.to_bits());
        assert_eq!(a.sum_sq.to_bits(), b.sum_sq.to_bits());
        assert_eq!(a.count, 10_000);
    }
}
