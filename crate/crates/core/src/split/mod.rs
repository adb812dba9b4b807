//! Split-chain regeneration for chains on `R+` (or a truncated `Z+`) that
//! satisfy a one-step minorization on a small set `[0, b]`:
//!
//! ```text
//! P_x(X_1 in .) >= lambda * phi(.)          for x in [0, b]
//! P_x(X_1 in .)  = lambda * phi(.) + (1 - lambda) * Q(x, .)
//! ```
//!
//! together with drift functions `v1`, `v2` for the tail. The library checks
//! a user-supplied `(b, lambda, phi, v1, v2)`; it does not search for one.

mod chain;
mod laws;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

pub use chain::{
    ContinuityPoint, ContinuityReport, CoupledCycle, CycleStart, RatioEstimate, RegenerationCycle,
    SplitChain,
};
pub use laws::{KernelRowLaw, LindleyMinorant, PmfLaw};

use crate::diagnostics::mean_and_se;
use crate::kernel::{check_grid, TransitionKernel};
use crate::math::fabs;
use crate::reward::RewardFunction;
use crate::rng::UniformStream;
use crate::{Error, Result};

/// Default cap on the length of a regeneration cycle.
pub const DEFAULT_CYCLE_CAP: usize = 10_000_000;

/// A probability law on the state space, used as the minorizing measure.
pub trait Law: fmt::Debug {
    fn cdf(&self, y: f64) -> f64;
    /// Generalized inverse of [`Law::cdf`].
    fn quantile(&self, u: f64) -> f64;
    /// Density with respect to the same reference measure as
    /// [`TransitionKernel::transition_density`].
    fn density(&self, _y: f64) -> Option<f64> {
        None
    }
}

/// Polynomial drift function `v(x) = sum_i coeffs[i] x^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftFunction {
    coeffs: Vec<f64>,
}

impl DriftFunction {
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn linear(slope: f64) -> Self {
        Self {
            coeffs: alloc::vec![0.0, slope],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Minorization and drift data `(b, lambda, phi, v1, v2)`.
#[derive(Debug)]
pub struct SplitConfig {
    b: f64,
    lambda: f64,
    phi: Box<dyn Law>,
    v1: DriftFunction,
    v2: DriftFunction,
    cycle_cap: usize,
}

impl SplitConfig {
    /// `b > 0`, `0 < lambda <= 1`. With `lambda = 1` every step from the
    /// small set regenerates and `Q` is never used.
    pub fn new(b: f64, lambda: f64, phi: Box<dyn Law>) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid("small-set endpoint b must be positive and finite"));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::invalid("minorization constant lambda must lie in (0,1]"));
        }
        Ok(Self {
            b,
            lambda,
            phi,
            v1: DriftFunction::zero(),
            v2: DriftFunction::zero(),
            cycle_cap: DEFAULT_CYCLE_CAP,
        })
    }

    pub fn with_drift(mut self, v1: DriftFunction, v2: DriftFunction) -> Self {
        self.v1 = v1;
        self.v2 = v2;
        self
    }

    pub fn with_cycle_cap(mut self, cap: usize) -> Self {
        self.cycle_cap = cap.max(1);
        self
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn phi(&self) -> &dyn Law {
        self.phi.as_ref()
    }

    pub fn v1(&self) -> &DriftFunction {
        &self.v1
    }

    pub fn v2(&self) -> &DriftFunction {
        &self.v2
    }

    pub fn cycle_cap(&self) -> usize {
        self.cycle_cap
    }

    /// `beta = sup{ |pi r| v1(x) + v2(x) : x in [0, b] }` over grid points.
    pub fn beta(&self, pi_r: f64, grid: &[f64]) -> f64 {
        grid.iter()
            .filter(|&&x| x <= self.b)
            .map(|&x| fabs(pi_r) * self.v1.eval(x) + self.v2.eval(x))
            .fold(0.0, f64::max)
    }

    /// Comparison bound on the expected absolute centred cycle reward:
    /// `E_x sum_{j<tau} |r_c(X_j)| <= v2(x) + |pi r| v1(x) + beta / lambda`.
    pub fn cycle_abs_bound(&self, pi_r: f64, x: f64, grid: &[f64]) -> f64 {
        self.v2.eval(x) + fabs(pi_r) * self.v1.eval(x) + self.beta(pi_r, grid) / self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `sup_{x <= b} E_x v_i(X_1) < inf`, `v_i >= 0`.
    BoundedDrift,
    /// `sup_{x <= b} |r(x)| < inf`.
    BoundedReward,
    /// `E_x v1(X_1) <= v1(x) - 1` for `x > b`.
    DriftV1,
    /// `E_x v2(X_1) <= v2(x) - |r(x)|` for `x > b`.
    DriftV2,
    /// `P_x(X_1 <= y) >= lambda phi([0, y])` for `x <= b`.
    Minorization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub passed: bool,
    /// Supremum for the boundedness conditions, smallest margin otherwise.
    pub statistic: f64,
    pub at: f64,
    /// Monte Carlo standard error attached to `statistic` (0 when exact).
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<ConditionCheck>,
    pub passed: bool,
}

impl AssumptionReport {
    pub fn check(&self, c: Condition) -> &ConditionCheck {
        self.checks
            .iter()
            .find(|k| k.condition == c)
            .expect("every condition is reported")
    }
}

/// Number of standard errors a drift margin must clear.
const DRIFT_SE: f64 = 2.0;
const MINORIZATION_TOL: f64 = 1e-12;

/// `E_x v(X_1)`: exact for discrete kernels, Monte Carlo otherwise.
pub fn one_step_expectation<K: TransitionKernel + ?Sized>(
    k: &K,
    x: f64,
    v: impl Fn(f64) -> f64,
    n_mc: usize,
    stream: &UniformStream,
) -> (f64, f64) {
    if let Some(m) = k.matrix() {
        let i = crate::kernel::state_index(x, m.top());
        let mean = (0..m.dim()).map(|j| m.get(i, j) * v(j as f64)).sum();
        return (mean, 0.0);
    }
    let samples: Vec<f64> = (1..=n_mc as u64)
        .map(|i| v(k.inverse_cdf(x, stream.at(i))))
        .collect();
    mean_and_se(&samples)
}

/// Numerically checks conditions a)-e) of the minorization/drift assumption on
/// `grid`. Drift conditions pass only when every margin exceeds two standard
/// errors.
pub fn verify_assumption1<K: TransitionKernel + ?Sized>(
    cfg: &SplitConfig,
    k: &K,
    r: &RewardFunction,
    grid: &[f64],
    n_mc: usize,
    stream: &UniformStream,
) -> Result<AssumptionReport> {
    check_grid(grid)?;
    let small: Vec<(usize, f64)> = grid.iter().copied().enumerate().filter(|(_, x)| *x <= cfg.b).collect();
    let tail: Vec<(usize, f64)> = grid.iter().copied().enumerate().filter(|(_, x)| *x > cfg.b).collect();
    if small.is_empty() || tail.is_empty() {
        return Err(Error::invalid("grid must cover [0, b] and a tail segment beyond b"));
    }
    if !k.state_space().is_discrete() && n_mc < 2 {
        return Err(Error::invalid("need at least 2 Monte Carlo draws"));
    }

    // absolute continuity of phi w.r.t. P_x(X_1 in .) on the small set
    let mut ys: Vec<f64> = grid.to_vec();
    if ys[0] > 0.0 {
        ys.insert(0, 0.0);
    }
    for &(_, x) in &small {
        for &y in &ys {
            if let (Some(f), Some(p)) = (cfg.phi.density(y), k.transition_density(x, y)) {
                if f > 0.0 && p <= 0.0 {
                    return Err(Error::MinorizationUnsupported { x, y });
                }
            }
        }
    }

    let mut checks = Vec::with_capacity(5);

    // a)
    let mut sup = f64::NEG_INFINITY;
    let mut at = small[0].1;
    let mut se_at = 0.0;
    let mut nonneg = true;
    for &(i, x) in &small {
        for v in [&cfg.v1, &cfg.v2] {
            let (m, se) = one_step_expectation(k, x, |y| v.eval(y), n_mc, &stream.substream(i as u64));
            if m > sup {
                sup = m;
                at = x;
                se_at = se;
            }
        }
    }
    for &x in grid {
        nonneg &= cfg.v1.eval(x) >= 0.0 && cfg.v2.eval(x) >= 0.0;
    }
    checks.push(ConditionCheck {
        condition: Condition::BoundedDrift,
        passed: sup.is_finite() && nonneg,
        statistic: sup,
        at,
        standard_error: se_at,
    });

    // b)
    let (rb, rb_at) = small
        .iter()
        .map(|&(_, x)| (fabs(r.eval(x)), x))
        .fold((0.0f64, small[0].1), |acc, v| if v.0 > acc.0 { v } else { acc });
    checks.push(ConditionCheck {
        condition: Condition::BoundedReward,
        passed: rb.is_finite(),
        statistic: rb,
        at: rb_at,
        standard_error: 0.0,
    });

    // c) and d)
    for (cond, v, offset) in [
        (Condition::DriftV1, &cfg.v1, None),
        (Condition::DriftV2, &cfg.v2, Some(r)),
    ] {
        let mut worst = f64::INFINITY;
        let mut worst_at = tail[0].1;
        let mut worst_se = 0.0;
        let mut passed = true;
        for &(i, x) in &tail {
            let need = offset.map_or(1.0, |r| fabs(r.eval(x)));
            let (m, se) = one_step_expectation(k, x, |y| v.eval(y), n_mc, &stream.substream(i as u64));
            let margin = v.eval(x) - need - m;
            passed &= margin > DRIFT_SE * se && margin >= 0.0;
            if margin < worst {
                worst = margin;
                worst_at = x;
                worst_se = se;
            }
        }
        checks.push(ConditionCheck {
            condition: cond,
            passed,
            statistic: worst,
            at: worst_at,
            standard_error: worst_se,
        });
    }

    // e) at CDF level, plus density level when both densities are known
    let mut worst = f64::INFINITY;
    let mut worst_at = small[0].1;
    for &(_, x) in &small {
        for &y in &ys {
            let margin = k.cdf(x, y) - cfg.lambda * cfg.phi.cdf(y);
            if margin < worst {
                worst = margin;
                worst_at = x;
            }
            if let (Some(f), Some(p)) = (cfg.phi.density(y), k.transition_density(x, y)) {
                let dm = p - cfg.lambda * f;
                if dm < worst {
                    worst = dm;
                    worst_at = x;
                }
            }
        }
    }
    checks.push(ConditionCheck {
        condition: Condition::Minorization,
        passed: worst >= -MINORIZATION_TOL,
        statistic: worst,
        at: worst_at,
        standard_error: 0.0,
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(AssumptionReport { checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::uniform_grid;
    use crate::models::build_lindley;
    use alloc::boxed::Box;

    fn mm1_config() -> (crate::models::LindleyMm1, SplitConfig) {
        let k = build_lindley(0.5, 1.0).unwrap();
        let phi = LindleyMinorant::new(&k, 1.0).unwrap();
        let lambda = phi.mass();
        let cfg = SplitConfig::new(1.0, lambda, Box::new(phi))
            .unwrap()
            .with_drift(
                DriftFunction::linear(10.0),
                DriftFunction::polynomial(alloc::vec![0.0, 40.0, 1.0]),
            );
        (k, cfg)
    }

    #[test]
    fn zero_lambda_rejected() {
        let k = build_lindley(0.5, 1.0).unwrap();
        let phi = LindleyMinorant::new(&k, 1.0).unwrap();
        assert!(matches!(
            SplitConfig::new(1.0, 0.0, Box::new(phi)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn mm1_assumption_passes() {
        let (k, cfg) = mm1_config();
        let grid = uniform_grid(0.0, 20.0, 81);
        let rep = verify_assumption1(&cfg, &k, &RewardFunction::identity(), &grid, 20_000, &UniformStream::new(3))
            .unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.check(Condition::Minorization).statistic > -1e-12);
    }

    #[test]
    fn zero_drift_fails_condition_c() {
        let (k, cfg) = mm1_config();
        let cfg = cfg.with_drift(DriftFunction::zero(), DriftFunction::zero());
        let grid = uniform_grid(0.0, 10.0, 41);
        let rep = verify_assumption1(&cfg, &k, &RewardFunction::identity(), &grid, 1000, &UniformStream::new(3))
            .unwrap();
        assert!(!rep.passed);
        let c = rep.check(Condition::DriftV1);
        assert!(!c.passed);
        assert!((c.statistic + 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_lambda_fails_minorization() {
        let k = build_lindley(0.5, 1.0).unwrap();
        let phi = LindleyMinorant::new(&k, 1.0).unwrap();
        let cfg = SplitConfig::new(1.0, (phi.mass() * 1.2).min(1.0), Box::new(phi)).unwrap();
        let grid = uniform_grid(0.0, 5.0, 21);
        let rep =
            verify_assumption1(&cfg, &k, &RewardFunction::identity(), &grid, 100, &UniformStream::new(1)).unwrap();
        assert!(!rep.check(Condition::Minorization).passed);
    }

    #[test]
    fn drift_polynomial() {
        let v = DriftFunction::polynomial(alloc::vec![1.0, 2.0, 3.0]);
        assert_eq!(v.eval(2.0), 1.0 + 4.0 + 12.0);
        assert_eq!(DriftFunction::zero().eval(5.0), 0.0);
    }
}
