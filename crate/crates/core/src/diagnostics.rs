//! Statistical checks shared by the solvers and the acceptance runs.
//!
//! Every check returns a [`StatReport`]; with a recorded seed the report is
//! reproducible bit for bit.

use alloc::string::String;
use alloc::vec::Vec;

use crate::discrete::PoissonSolution;
use crate::kernel::{stationary_of_matrix, TransitionKernel};
use crate::math::{exp, log, ln_gamma, sqrt};
use crate::{Error, Result};

/// Number of standard errors used by every "within k SE" check.
pub const SE_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub sample_size: usize,
    pub seed: Option<u64>,
}

impl StatReport {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, passed: bool, sample_size: usize) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            passed,
            sample_size,
            seed: None,
        }
    }

    /// Report that passes iff `statistic <= threshold`.
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64, sample_size: usize) -> Self {
        Self::new(name, statistic, threshold, statistic <= threshold, sample_size)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Sample mean and its standard error (`sd / sqrt(n)`, with the `n - 1`
/// variance).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, sqrt(ss / (n - 1) as f64 / n as f64))
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let (_, se) = mean_and_se(xs);
    se * se * xs.len() as f64
}

/// Asymptotic Kolmogorov critical coefficient `c(alpha) = sqrt(-ln(alpha/2)/2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    sqrt(-log(alpha / 2.0) / 2.0)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov statistic `sup_t |F_a(t) - F_b(t)|`; ties
/// (including discrete data) are handled by stepping through equal values
/// together.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS test at level `alpha`; passes when the null of equal laws
/// is not rejected.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<StatReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS needs two non-empty samples"));
    }
    let d = ks_statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let crit = ks_coefficient(alpha) * sqrt((n + m) / (n * m));
    Ok(StatReport::at_most("ks_two_sample", d, crit, a.len() + b.len()))
}

/// One-sample KS test against `cdf`. Left limits are taken just below each
/// sample value, so laws with atoms (e.g. at zero) are handled.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> Result<StatReport> {
    if samples.is_empty() {
        return Err(Error::invalid("KS needs a non-empty sample"));
    }
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < s.len() {
        let v = s[i];
        let below = i as f64 / n;
        while i < s.len() && s[i] <= v {
            i += 1;
        }
        let at = i as f64 / n;
        d = d.max((at - cdf(v)).abs()).max((below - cdf(v.next_down())).abs());
    }
    let crit = ks_coefficient(alpha) / sqrt(n);
    Ok(StatReport::at_most("ks_one_sample", d, crit, samples.len()))
}

fn ln_binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
        + if k > 0 { kf * log(p) } else { 0.0 }
        + if k < n { (nf - kf) * log(1.0 - p) } else { 0.0 }
}

/// Exact two-sided binomial test of `successes ~ Bin(n, p)` at level
/// `alpha` (equal tails). The statistic is the smaller tail probability and
/// the threshold `alpha / 2`.
pub fn binomial_check(successes: u64, n: u64, p: f64, alpha: f64) -> Result<StatReport> {
    if n == 0 || successes > n || !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("binomial check needs n >= 1, k <= n, p in [0,1]"));
    }
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let (lower, upper) = if p == 0.0 {
        (1.0, indicator(successes == 0))
    } else if p == 1.0 {
        (indicator(successes == n), 1.0)
    } else {
        let mut lower = 0.0;
        let mut upper = 0.0;
        for k in 0..=n {
            let pk = exp(ln_binom_pmf(n, k, p));
            if k <= successes {
                lower += pk;
            }
            if k >= successes {
                upper += pk;
            }
        }
        (lower.min(1.0), upper.min(1.0))
    };
    let tail = lower.min(upper);
    Ok(StatReport::new(
        "binomial",
        tail,
        alpha / 2.0,
        tail >= alpha / 2.0,
        n as usize,
    ))
}

/// `|mean| <= k * se` where `k = SE_MULTIPLIER`; a zero SE requires a zero
/// mean up to rounding.
pub fn within_se(mean: f64, se: f64, target: f64) -> bool {
    let dev = (mean - target).abs();
    dev <= SE_MULTIPLIER * se || dev <= 1e-12 * target.abs().max(1.0)
}

/// Whether a Monte Carlo solution is non-decreasing up to overlap of its
/// 3-SE intervals: `g[i+1] + 3 se[i+1] >= g[i] - 3 se[i]`. Returns the first
/// offending index otherwise.
pub fn monotone_within_ci(sol: &PoissonSolution) -> core::result::Result<(), usize> {
    let zero = alloc::vec![0.0; sol.g.len()];
    let se = sol.standard_error.as_deref().unwrap_or(&zero);
    for i in 1..sol.g.len() {
        if sol.g[i] + SE_MULTIPLIER * se[i] < sol.g[i - 1] - SE_MULTIPLIER * se[i - 1] {
            return Err(i - 1);
        }
    }
    Ok(())
}

/// Checks that the ensemble mean of every increment index is within three
/// standard errors of zero. `increments[path][n] = M_{n+1} - M_n`.
///
/// The statistic is the largest `|mean| / se` over time indices.
pub fn martingale_mc_check(increments: &[Vec<f64>]) -> Result<StatReport> {
    if increments.is_empty() {
        return Err(Error::invalid("no paths"));
    }
    let horizon = increments.iter().map(Vec::len).min().unwrap_or(0);
    let mut worst = 0.0f64;
    let mut passed = true;
    let mut column = Vec::with_capacity(increments.len());
    for t in 0..horizon {
        column.clear();
        column.extend(increments.iter().map(|p| p[t]));
        let (mean, se) = mean_and_se(&column);
        passed &= within_se(mean, se, 0.0);
        let z = if se > 0.0 {
            mean.abs() / se
        } else if mean.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(StatReport::new(
        "martingale_mc",
        worst,
        SE_MULTIPLIER,
        passed,
        increments.len(),
    ))
}

/// Time-average variance constant of `n^{-1/2}(S_n(r) - n pi r)` from an
/// exact discrete solution:
/// `sigma^2 = sum_x pi(x) [ (P g^2)(x) - ((P g)(x))^2 ]`.
///
/// This is the standard CLT variance of the martingale increments; it does
/// not depend on the additive constant in `g`.
pub fn tav_constant<K: TransitionKernel + ?Sized>(k: &K, sol: &PoissonSolution) -> Result<f64> {
    let m = k
        .matrix()
        .ok_or_else(|| Error::invalid("time-average variance needs a discrete kernel"))?;
    if sol.g.len() != m.dim() {
        return Err(Error::invalid("solution does not match the kernel"));
    }
    let pi = stationary_of_matrix(m)?;
    // centre g first so that the subtraction below is well conditioned
    let shift: f64 = pi.iter().zip(&sol.g).map(|(p, g)| p * g).sum();
    let g: Vec<f64> = sol.g.iter().map(|v| v - shift).collect();
    let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
    let pg = m.apply(&g);
    let pg2 = m.apply(&g2);
    let s: f64 = pi
        .iter()
        .zip(pg.iter().zip(&pg2))
        .map(|(p, (a, b))| p * (b - a * a))
        .sum();
    Ok(s.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::UniformStream;
    use alloc::vec;

    #[test]
    fn identical_samples_have_zero_statistic() {
        let a: Vec<f64> = UniformStream::new(1).take(1000).collect();
        let rep = ks_two_sample(&a, &a, 0.01).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert!(rep.passed);
        assert!(ks_two_sample(&a, &[], 0.01).is_err());
    }

    #[test]
    fn shifted_uniform_rejected() {
        let a: Vec<f64> = UniformStream::new(1).take(100_000).collect();
        let b: Vec<f64> = UniformStream::new(2).take(100_000).map(|u| u + 0.2).collect();
        assert!(!ks_two_sample(&a, &b, 0.01).unwrap().passed);
    }

    #[test]
    fn discrete_ties() {
        let a = vec![0.0, 0.0, 1.0, 1.0];
        let b = vec![0.0, 1.0, 1.0, 1.0];
        assert!((ks_statistic(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn one_sample_with_atom() {
        // half mass at 0, half Uniform(0,1)
        let s: Vec<f64> = UniformStream::new(4)
            .take(20_000)
            .map(|u| if u < 0.5 { 0.0 } else { 2.0 * u - 1.0 })
            .collect();
        let cdf = |x: f64| if x < 0.0 { 0.0 } else { (0.5 + 0.5 * x).min(1.0) };
        assert!(ks_one_sample(&s, cdf, 0.01).unwrap().passed);
        let wrong = |x: f64| if x < 0.0 { 0.0 } else { x.min(1.0) };
        assert!(!ks_one_sample(&s, wrong, 0.01).unwrap().passed);
    }

    #[test]
    fn binomial_tails() {
        assert!(binomial_check(50, 100, 0.5, 0.01).unwrap().passed);
        assert!(!binomial_check(80, 100, 0.5, 0.01).unwrap().passed);
        // P(X <= 0) for Bin(10, 0.5) = 1/1024
        let r = binomial_check(0, 10, 0.5, 0.01).unwrap();
        assert!((r.statistic - 1.0 / 1024.0).abs() < 1e-12);
        assert!(!r.passed);
    }

    #[test]
    fn martingale_check_basics() {
        let zeros = vec![vec![0.0; 5]; 1000];
        assert!(martingale_mc_check(&zeros).unwrap().passed);
        let biased = vec![vec![0.1; 5]; 1000];
        assert!(!martingale_mc_check(&biased).unwrap().passed);
    }

    #[test]
    fn mean_se() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - sqrt(5.0 / 3.0 / 4.0)).abs() < 1e-15);
    }
}
