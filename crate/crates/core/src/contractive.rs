//! Chains that are contractive on average:
//!
//! ```text
//! E |F^{-1}(x, U) - F^{-1}(y, U)|^2 <= rho |x - y|^2,    rho < 1.
//! ```
//!
//! For a reward with `|r(x) - r(y)| <= c^{1/2} |x - y|`, the series
//! `g(x) = sum_j E_x r_c(X_j)` converges geometrically and
//! `|g(x) - g(y)| <= c^{1/2} / (1 - rho^{1/2}) |x - y|`.

use alloc::vec::Vec;

use crate::coupling::backward_from_stream;
use crate::diagnostics::{mean_and_se, SE_MULTIPLIER};
use crate::discrete::{Method, Normalization, PoissonSolution};
use crate::kernel::{check_grid, TransitionKernel};
use crate::math::{pow, sqrt};
use crate::reward::RewardFunction;
use crate::rng::UniformStream;
use crate::{Error, Result};

/// Smallest sample size accepted by [`estimate_contraction_factor`].
pub const MIN_CONTRACTION_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub x: f64,
    pub y: f64,
    pub ratio: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEstimate {
    /// Largest per-pair mean ratio.
    pub rho_hat: f64,
    /// Standard error of the pair attaining `rho_hat`.
    pub standard_error: f64,
    pub per_pair: Vec<PairEstimate>,
}

impl ContractionEstimate {
    /// `rho_hat + 3 SE`, the value to use in bounds.
    pub fn working_rho(&self) -> f64 {
        self.rho_hat + SE_MULTIPLIER * self.standard_error
    }
}

/// Monte Carlo estimate of the contraction factor, maximized over `pairs`.
/// Pair `p` uses substream `p`.
pub fn estimate_contraction_factor<K: TransitionKernel + ?Sized>(
    k: &K,
    pairs: &[(f64, f64)],
    n_samples: usize,
    stream: &UniformStream,
) -> Result<ContractionEstimate> {
    if pairs.is_empty() || pairs.iter().any(|(x, y)| !(x.is_finite() && y.is_finite()) || x == y) {
        return Err(Error::invalid("pairs must be finite with x != y"));
    }
    if n_samples < MIN_CONTRACTION_SAMPLES {
        return Err(Error::invalid("contraction estimate needs at least 1000 samples"));
    }
    let mut per_pair = Vec::with_capacity(pairs.len());
    for (p, &(x, y)) in pairs.iter().enumerate() {
        let s = stream.substream(p as u64);
        let d2 = (x - y) * (x - y);
        let ratios: Vec<f64> = (1..=n_samples as u64)
            .map(|i| {
                let u = s.at(i);
                let d = k.inverse_cdf(x, u) - k.inverse_cdf(y, u);
                d * d / d2
            })
            .collect();
        let (ratio, standard_error) = mean_and_se(&ratios);
        per_pair.push(PairEstimate {
            x,
            y,
            ratio,
            standard_error,
        });
    }
    let worst = per_pair
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .expect("pairs is non-empty");
    let est = ContractionEstimate {
        rho_hat: worst.ratio,
        standard_error: worst.standard_error,
        per_pair: per_pair.clone(),
    };
    if est.working_rho() >= 1.0 {
        return Err(Error::NotContractive {
            rho_upper: est.working_rho(),
        });
    }
    Ok(est)
}

/// Largest Monte Carlo estimate of `E_x |X_1 - x|^2` over `xs`.
pub fn estimate_second_moment<K: TransitionKernel + ?Sized>(
    k: &K,
    xs: &[f64],
    n_samples: usize,
    stream: &UniformStream,
) -> Result<f64> {
    check_grid(xs)?;
    if n_samples < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    let mut worst = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let s = stream.substream(i as u64);
        let sq: Vec<f64> = (1..=n_samples as u64)
            .map(|j| {
                let d = k.inverse_cdf(x, s.at(j)) - x;
                d * d
            })
            .collect();
        let (m, se) = mean_and_se(&sq);
        worst = worst.max(m + SE_MULTIPLIER * se);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractiveParams {
    pub rho: f64,
    pub c_root: f64,
    pub second_moment: f64,
}

impl ContractiveParams {
    pub fn new(rho: f64, c_root: f64, second_moment: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::NotContractive { rho_upper: rho });
        }
        if !(c_root.is_finite() && c_root >= 0.0 && second_moment.is_finite() && second_moment >= 0.0) {
            return Err(Error::invalid("c_root and second_moment must be finite and non-negative"));
        }
        Ok(Self {
            rho,
            c_root,
            second_moment,
        })
    }

    /// Uses the conservative `rho_hat + 3 SE`.
    pub fn from_estimate(est: &ContractionEstimate, c_root: f64, second_moment: f64) -> Result<Self> {
        Self::new(est.working_rho(), c_root, second_moment)
    }

    /// `c^{1/2} / (1 - rho^{1/2})`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.c_root / (1.0 - sqrt(self.rho))
    }

    /// Bound on `|E_x r_c(X_n)|`:
    /// `c^{1/2} m sum_{j >= n} rho^{j/2} = c^{1/2} m rho^{n/2} / (1 - rho^{1/2})`.
    pub fn term_bound(&self, n: usize) -> f64 {
        self.c_root * sqrt(self.second_moment) * pow(self.rho, n as f64 / 2.0) / (1.0 - sqrt(self.rho))
    }

    /// Bound on the truncation error `sum_{n > J} |E_x r_c(X_n)|`.
    pub fn tail_bound(&self, terms: usize) -> f64 {
        let s = 1.0 - sqrt(self.rho);
        self.c_root * sqrt(self.second_moment) * pow(self.rho, (terms + 1) as f64 / 2.0) / (s * s)
    }

    /// Smallest `J <= cap` with `tail_bound(J) <= tol`.
    pub fn terms_needed(&self, tol: f64, cap: usize) -> Option<usize> {
        (0..=cap).find(|&j| self.tail_bound(j) <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractiveOptions {
    pub tol: f64,
    /// Coupled forward paths used for `g`.
    pub n_paths: usize,
    /// Backward-iteration samples used for `pi r`.
    pub n_pi_samples: usize,
    pub term_cap: usize,
}

impl Default for ContractiveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            n_paths: 10_000,
            n_pi_samples: 100_000,
            term_cap: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractiveSolution {
    pub solution: PoissonSolution,
    /// Series length `J`: terms `0..=J` are summed.
    pub terms: usize,
    /// Backward-iteration depth used for `pi r`.
    pub pi_depth: usize,
    pub pi_r_se: f64,
    /// Analytic bound on the truncation error at `J`.
    pub tail_bound: f64,
}

/// Long-run average of `r` from backward iterates `X~_n(x0)`; sample `s`
/// uses substream `s`.
pub fn estimate_pi_r_backward<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    x0: f64,
    depth: usize,
    n_samples: usize,
    stream: &UniformStream,
) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    let vals: Vec<f64> = (0..n_samples as u64)
        .map(|s| r.eval(backward_from_stream(k, x0, depth, &stream.substream(s))))
        .collect();
    Ok(mean_and_se(&vals))
}

fn forward_path<K: TransitionKernel + ?Sized>(k: &K, x: f64, n: usize, s: &UniformStream, out: &mut Vec<f64>) {
    out.clear();
    out.push(x);
    let mut state = x;
    for i in 1..=n as u64 {
        state = k.inverse_cdf(state, s.at(i));
        out.push(state);
    }
}

/// Truncated-series solution `g(x) = sum_{j=0}^{J} E_x r_c(X_j)` with `J`
/// from the analytic tail bound. Every `x` shares the uniforms of path `p`.
pub fn solve_contractive<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    params: &ContractiveParams,
    xs: &[f64],
    opts: &ContractiveOptions,
    stream: &UniformStream,
) -> Result<ContractiveSolution> {
    check_grid(xs)?;
    if r.lipschitz_root_constant().is_none() {
        return Err(Error::invalid("contractive route needs a Lipschitz reward"));
    }
    if !(opts.tol > 0.0) || opts.n_paths < 2 {
        return Err(Error::invalid("tol must be positive and n_paths >= 2"));
    }
    let needed = params.terms_needed(opts.tol, opts.term_cap);
    let terms = needed.ok_or(Error::SeriesBudgetExceeded {
        needed: (opts.term_cap + 1).max(1),
        cap: opts.term_cap,
    })?;
    let single = (0..=opts.term_cap).find(|&n| params.term_bound(n) <= opts.tol);
    let pi_depth = single.unwrap_or(opts.term_cap).max(terms).max(1);
    let (pi_r, pi_r_se) =
        estimate_pi_r_backward(k, r, xs[0], pi_depth, opts.n_pi_samples, &stream.substream(1))?;

    let fwd = stream.substream(0);
    let mut sums = alloc::vec![Vec::with_capacity(opts.n_paths); xs.len()];
    let mut path = Vec::with_capacity(terms + 1);
    for p in 0..opts.n_paths as u64 {
        let s = fwd.substream(p);
        for (i, &x) in xs.iter().enumerate() {
            forward_path(k, x, terms, &s, &mut path);
            sums[i].push(path.iter().map(|&y| r.eval(y) - pi_r).sum::<f64>());
        }
    }
    // the estimate of pi r shifts every g(x) by the same amount
    let shift_se = (terms + 1) as f64 * pi_r_se;
    let (g, se): (Vec<f64>, Vec<f64>) = sums
        .iter()
        .map(|s| {
            let (m, se) = mean_and_se(s);
            (m, sqrt(se * se + shift_se * shift_se))
        })
        .unzip();
    let diff_se = sums
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            mean_and_se(&d).1
        })
        .collect();
    Ok(ContractiveSolution {
        solution: PoissonSolution {
            grid: xs.to_vec(),
            g,
            normalization: Normalization::Series,
            method: Method::Series,
            pi_r,
            residual_sup: None,
            standard_error: Some(se),
            adjacent_diff_se: Some(diff_se),
            terms: Some(terms),
        },
        terms,
        pi_depth,
        pi_r_se,
        tail_bound: params.tail_bound(terms),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzCertificate {
    pub max_ratio: f64,
    pub bound: f64,
    /// Smallest `bound + slack - ratio` over adjacent pairs.
    pub margin: f64,
    pub at: f64,
}

/// Checks `|g(x_{i+1}) - g(x_i)| / (x_{i+1} - x_i) <= L` up to three
/// standard errors of the difference.
pub fn certify_lipschitz(sol: &PoissonSolution, params: &ContractiveParams) -> Result<LipschitzCertificate> {
    if sol.grid.len() < 3 || sol.grid.len() != sol.g.len() {
        return Err(Error::invalid("Lipschitz certificate needs at least 3 grid points"));
    }
    let bound = params.lipschitz_bound();
    let mut cert = LipschitzCertificate {
        max_ratio: 0.0,
        bound,
        margin: f64::INFINITY,
        at: sol.grid[0],
    };
    for i in 0..sol.grid.len() - 1 {
        let dx = sol.grid[i + 1] - sol.grid[i];
        let ratio = (sol.g[i + 1] - sol.g[i]).abs() / dx;
        let diff_se = match (&sol.adjacent_diff_se, &sol.standard_error) {
            (Some(d), _) => d[i],
            (None, Some(se)) => sqrt(se[i] * se[i] + se[i + 1] * se[i + 1]),
            (None, None) => 0.0,
        };
        let margin = bound + SE_MULTIPLIER * diff_se / dx - ratio;
        if margin < 0.0 {
            return Err(Error::CertificationFailed {
                what: "lipschitz bound".into(),
                location: sol.grid[i],
                value: ratio,
            });
        }
        if ratio > cert.max_ratio {
            cert.max_ratio = ratio;
        }
        if margin < cert.margin {
            cert.margin = margin;
            cert.at = sol.grid[i];
        }
    }
    Ok(cert)
}

/// Per-sample `sum_{j=0}^{J} [r_c(X~_j(y)) - r_c(X~_j(x))]` along backward
/// compositions sharing uniforms; sample `s` uses substream `s`. For a
/// monotone kernel and non-decreasing `r` every entry is `>= 0` when `x <= y`.
pub fn crn_pathwise_differences<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    x: f64,
    y: f64,
    terms: usize,
    n_samples: usize,
    stream: &UniformStream,
) -> Vec<f64> {
    (0..n_samples as u64)
        .map(|s| {
            let st = stream.substream(s);
            (0..=terms)
                .map(|j| r.eval(backward_from_stream(k, y, j, &st)) - r.eval(backward_from_stream(k, x, j, &st)))
                .sum()
        })
        .collect()
}

/// Monte Carlo estimate of `(Pg)(x) - g(x) + r_c(x)` for the truncated
/// series, with independent samples for `g(x)` and `(Pg)(x)`. Returns the
/// estimate and its standard error.
pub fn residual_probe<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    pi_r: f64,
    terms: usize,
    x: f64,
    n_paths: usize,
    stream: &UniformStream,
) -> Result<(f64, f64)> {
    if n_paths < 2 {
        return Err(Error::invalid("need at least 2 paths"));
    }
    let series = |path: &[f64]| path.iter().map(|&y| r.eval(y) - pi_r).sum::<f64>();
    let (a, b) = (stream.substream(0), stream.substream(1));
    let mut path = Vec::with_capacity(terms + 2);
    let mut here = Vec::with_capacity(n_paths);
    let mut next = Vec::with_capacity(n_paths);
    for p in 0..n_paths as u64 {
        forward_path(k, x, terms, &a.substream(p), &mut path);
        here.push(series(&path));
        // one step, then a fresh series from X_1
        let sb = b.substream(p);
        forward_path(k, x, terms + 1, &sb, &mut path);
        next.push(series(&path[1..]));
    }
    let (mg, sg) = mean_and_se(&here);
    let (mp, sp) = mean_and_se(&next);
    Ok((mp - mg + r.eval(x) - pi_r, sqrt(sg * sg + sp * sp)))
}
