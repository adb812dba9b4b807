use alloc::vec::Vec;
use core::cell::Cell;

use super::SplitConfig;
use crate::diagnostics::mean_and_se;
use crate::discrete::{Method, Normalization, PoissonSolution};
use crate::kernel::{check_grid, state_index, StateSpace, TransitionKernel};
use crate::math::{log, sqrt};
use crate::reward::{CenteredReward, RewardFunction};
use crate::rng::UniformStream;
use crate::{Error, Result};

/// Negative residual mass beyond this is a minorization violation rather
/// than rounding.
const RESIDUAL_TOL: f64 = 1e-9;
/// Width at which the residual inverse stops bisecting.
const BISECT_WIDTH: f64 = 1e-12;
/// Weights above `1 + this` count as clamping events.
const WEIGHT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleStart {
    State(f64),
    /// Start with a draw from `phi`.
    Phi,
}

/// One regeneration cycle `X_0, ..., X_{tau-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegenerationCycle {
    pub path: Vec<f64>,
    pub tau: usize,
    /// Number of visits to `[0, b]` strictly before `tau`.
    pub small_set_visits: usize,
    /// `X_tau`, the regenerated state (a draw from `phi`).
    pub exit_state: f64,
}

impl RegenerationCycle {
    pub fn reward_sum(&self, r: &RewardFunction) -> f64 {
        self.path.iter().map(|&x| r.eval(x)).sum()
    }

    pub fn centered_sum(&self, rc: &CenteredReward) -> f64 {
        self.path.iter().map(|&x| rc.eval(x)).sum()
    }

    pub fn abs_centered_sum(&self, rc: &CenteredReward) -> f64 {
        self.path.iter().map(|&x| rc.eval(x).abs()).sum()
    }
}

/// Regenerative ratio estimate of `pi r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimate {
    pub estimate: f64,
    /// Delta-method standard error.
    pub standard_error: f64,
    pub n_cycles: usize,
    pub mean_cycle_length: f64,
    /// Set when every cycle carries the same ratio, so the SE is zero.
    pub degenerate: bool,
}

/// A pair of paths from the modified coupling, `X <= X'`, run until the upper
/// path regenerates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledCycle {
    /// `X_0..=X_tau`.
    pub lower_path: Vec<f64>,
    /// `X'_0..=X'_tau`.
    pub upper_path: Vec<f64>,
    pub tau_upper: usize,
    /// First flagged regeneration of the lower path; always `<= tau_upper`.
    pub tau_lower: usize,
    pub order_held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityPoint {
    pub delta: f64,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub x: f64,
    /// Sorted by decreasing `delta`.
    pub points: Vec<ContinuityPoint>,
    /// `|mean|` is non-increasing as `delta` shrinks, up to 3 SE.
    pub shrinking: bool,
}

/// The split chain built from a kernel and a [`SplitConfig`].
#[derive(Debug)]
pub struct SplitChain<'a, K: ?Sized> {
    cfg: &'a SplitConfig,
    kernel: &'a K,
    clamp_events: Cell<u64>,
}

impl<'a, K: TransitionKernel + ?Sized> SplitChain<'a, K> {
    pub fn new(cfg: &'a SplitConfig, kernel: &'a K) -> Self {
        Self {
            cfg,
            kernel,
            clamp_events: Cell::new(0),
        }
    }

    pub fn config(&self) -> &SplitConfig {
        self.cfg
    }

    /// Number of Radon-Nikodym weights that exceeded 1 beyond rounding. A
    /// nonzero count means the minorization is wrong.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.get()
    }

    /// Residual CDF `G(v, w) = (F(v, w) - lambda phi[0, w]) / (1 - lambda)`.
    pub fn residual_cdf(&self, v: f64, w: f64) -> f64 {
        let lam = self.cfg.lambda;
        (self.kernel.cdf(v, w) - lam * self.cfg.phi.cdf(w)) / (1.0 - lam)
    }

    fn residual_checked(&self, v: f64, w: f64) -> Result<f64> {
        let g = self.residual_cdf(v, w);
        if g < -RESIDUAL_TOL {
            return Err(Error::MinorizationViolated { x: v, y: w, value: g });
        }
        Ok(g)
    }

    /// Generalized inverse of `G(v, .)`. The bisection bracket depends only on
    /// `u` (not on `v`), so the map is monotone in `v` exactly, not just up to
    /// the bisection width.
    pub fn residual_inverse(&self, v: f64, u: f64) -> Result<f64> {
        if self.cfg.lambda >= 1.0 {
            return Err(Error::invalid("residual law is undefined when lambda = 1"));
        }
        match self.kernel.state_space() {
            StateSpace::Discrete { top } => {
                for j in 0..=top {
                    if self.residual_checked(v, j as f64)? >= u {
                        return Ok(j as f64);
                    }
                }
                Ok(top as f64)
            }
            StateSpace::Continuous => {
                if self.residual_checked(v, 0.0)? >= u {
                    return Ok(0.0);
                }
                let mut hi = 1.0f64;
                for _ in 0..64 {
                    if self.residual_cdf(self.cfg.b, hi) >= u {
                        break;
                    }
                    hi *= 2.0;
                }
                let steps = (log(hi / BISECT_WIDTH) / core::f64::consts::LN_2) as usize + 1;
                let mut lo = 0.0f64;
                for _ in 0..steps {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.residual_checked(v, mid)? >= u {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(hi)
            }
        }
    }

    fn snap(&self, x: f64) -> f64 {
        match self.kernel.state_space() {
            StateSpace::Discrete { top } => state_index(x, top) as f64,
            StateSpace::Continuous => x,
        }
    }

    /// One split-chain step; returns the next state and whether it was a
    /// regeneration (a draw from `phi`).
    pub fn split_step(&self, x: f64, stream: &mut UniformStream) -> Result<(f64, bool)> {
        if x <= self.cfg.b {
            let v = stream.next_uniform();
            let u = stream.next_uniform();
            if v < self.cfg.lambda {
                Ok((self.snap(self.cfg.phi.quantile(u)), true))
            } else {
                Ok((self.residual_inverse(x, u)?, false))
            }
        } else {
            let u = stream.next_uniform();
            Ok((self.kernel.inverse_cdf(x, u), false))
        }
    }

    /// Runs from `start` to the first regeneration.
    pub fn simulate_cycle(&self, start: CycleStart, stream: &mut UniformStream) -> Result<RegenerationCycle> {
        let mut x = match start {
            CycleStart::State(x) => self.snap(x),
            CycleStart::Phi => self.snap(self.cfg.phi.quantile(stream.next_uniform())),
        };
        let mut path = Vec::new();
        let mut visits = 0;
        loop {
            if path.len() >= self.cfg.cycle_cap {
                return Err(Error::CycleOverflow { cap: self.cfg.cycle_cap });
            }
            path.push(x);
            if x <= self.cfg.b {
                visits += 1;
            }
            let (next, regen) = self.split_step(x, stream)?;
            if regen {
                let tau = path.len();
                return Ok(RegenerationCycle {
                    path,
                    tau,
                    small_set_visits: visits,
                    exit_state: next,
                });
            }
            x = next;
        }
    }

    /// Ratio estimate `sum_i Y_i / sum_i tau_i` from `n_cycles` cycles started
    /// from `phi`; cycle `i` uses substream `i`.
    pub fn estimate_pi_r(
        &self,
        r: &RewardFunction,
        n_cycles: usize,
        stream: &UniformStream,
    ) -> Result<RatioEstimate> {
        if n_cycles < 30 {
            return Err(Error::invalid("need at least 30 cycles"));
        }
        let mut ys = Vec::with_capacity(n_cycles);
        let mut taus = Vec::with_capacity(n_cycles);
        for i in 0..n_cycles {
            let c = self.simulate_cycle(CycleStart::Phi, &mut stream.substream(i as u64))?;
            ys.push(c.reward_sum(r));
            taus.push(c.tau as f64);
        }
        let n = n_cycles as f64;
        let mean_tau = taus.iter().sum::<f64>() / n;
        let est = ys.iter().sum::<f64>() / taus.iter().sum::<f64>();
        let ss: f64 = ys
            .iter()
            .zip(&taus)
            .map(|(y, t)| {
                let d = y - est * t;
                d * d
            })
            .sum();
        let se = sqrt(ss / (n - 1.0) / n) / mean_tau;
        Ok(RatioEstimate {
            estimate: est,
            standard_error: se,
            n_cycles,
            mean_cycle_length: mean_tau,
            degenerate: se == 0.0,
        })
    }

    /// Monte Carlo Poisson solution `g(x) = E_x sum_{j<tau} r_c(X_j)`,
    /// normalized so that `phi g = 0`. Cycle `i` uses substream `i` at every
    /// `x`, so differences across `x` use common random numbers.
    pub fn estimate_g(
        &self,
        r: &RewardFunction,
        pi_r: f64,
        xs: &[f64],
        n_cycles: usize,
        stream: &UniformStream,
    ) -> Result<PoissonSolution> {
        check_grid(xs)?;
        if n_cycles < 2 {
            return Err(Error::invalid("need at least 2 cycles"));
        }
        let rc = r.centered(pi_r);
        let sums: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| {
                (0..n_cycles)
                    .map(|i| {
                        self.simulate_cycle(CycleStart::State(x), &mut stream.substream(i as u64))
                            .map(|c| c.centered_sum(&rc))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let (g, se): (Vec<f64>, Vec<f64>) = sums.iter().map(|s| mean_and_se(s)).unzip();
        let diff_se = sums
            .windows(2)
            .map(|w| {
                let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
                mean_and_se(&d).1
            })
            .collect();
        Ok(PoissonSolution {
            grid: xs.to_vec(),
            g,
            normalization: Normalization::Regeneration,
            method: Method::MonteCarlo,
            pi_r,
            residual_sup: None,
            standard_error: Some(se),
            adjacent_diff_se: Some(diff_se),
            terms: None,
        })
    }

    /// Radon-Nikodym weight `w = lambda (dphi / dP_x)(next)` for `x <= b`.
    /// Values above 1 are clamped and counted.
    pub fn rn_weight(&self, x: f64, next: f64) -> Result<f64> {
        if x > self.cfg.b {
            return Err(Error::invalid("weight is defined only on the small set"));
        }
        let f = self
            .cfg
            .phi
            .density(next)
            .ok_or_else(|| Error::invalid("phi has no density"))?;
        let p = self
            .kernel
            .transition_density(x, next)
            .ok_or_else(|| Error::invalid("kernel has no transition density"))?;
        let w = if f <= 0.0 {
            0.0
        } else if p <= 0.0 {
            return Err(Error::MinorizationUnsupported { x, y: next });
        } else {
            self.cfg.lambda * f / p
        };
        if w > 1.0 + WEIGHT_SLACK {
            self.clamp_events.set(self.clamp_events.get() + 1);
        }
        Ok(w.clamp(0.0, 1.0))
    }

    /// Modified coupling of two split chains from `x <= y`, run until the
    /// upper chain regenerates. While both are in the small set the upper
    /// chain's regeneration is shared; when only the lower one is, its
    /// regeneration is flagged with probability equal to the RN weight. Once
    /// flagged, the lower path keeps following the shared dynamics.
    pub fn simulate_coupled_cycle(&self, x: f64, y: f64, stream: &mut UniformStream) -> Result<CoupledCycle> {
        if !(x <= y) {
            return Err(Error::invalid("coupled cycle needs x <= y"));
        }
        let b = self.cfg.b;
        let (mut lo, mut up) = (self.snap(x), self.snap(y));
        let mut lower_path = alloc::vec![lo];
        let mut upper_path = alloc::vec![up];
        let mut tau_lower = None;
        let mut order_held = true;
        loop {
            if upper_path.len() > self.cfg.cycle_cap {
                return Err(Error::CycleOverflow { cap: self.cfg.cycle_cap });
            }
            let step = upper_path.len();
            let v = stream.next_uniform();
            let u = stream.next_uniform();
            let w = stream.next_uniform();
            let mut regen = false;
            let (nlo, nup) = if up <= b && lo <= b {
                if v < self.cfg.lambda {
                    regen = true;
                    let z = self.snap(self.cfg.phi.quantile(u));
                    (z, z)
                } else {
                    (self.residual_inverse(lo, u)?, self.residual_inverse(up, u)?)
                }
            } else {
                let nl = self.kernel.inverse_cdf(lo, u);
                if lo <= b && tau_lower.is_none() && w < self.rn_weight(lo, nl)? {
                    tau_lower = Some(step);
                }
                (nl, self.kernel.inverse_cdf(up, u))
            };
            lo = nlo;
            up = nup;
            order_held &= lo <= up;
            lower_path.push(lo);
            upper_path.push(up);
            if regen {
                return Ok(CoupledCycle {
                    lower_path,
                    upper_path,
                    tau_upper: step,
                    tau_lower: tau_lower.unwrap_or(step),
                    order_held,
                });
            }
        }
    }

    /// Estimates `g(x + delta) - g(x)` through coupled cycles for each
    /// `delta`, with common random numbers across `delta`.
    pub fn continuity_probe(
        &self,
        r: &RewardFunction,
        x: f64,
        deltas: &[f64],
        n_cycles: usize,
        stream: &UniformStream,
    ) -> Result<ContinuityReport> {
        if !r.continuous() || !self.kernel.continuous_in_state() {
            return Err(Error::invalid(
                "continuity probe needs a continuous reward and a kernel continuous in the state",
            ));
        }
        if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) || n_cycles < 2 {
            return Err(Error::invalid("deltas must be positive and n_cycles >= 2"));
        }
        let mut ds = deltas.to_vec();
        ds.sort_by(|a, b| b.total_cmp(a));
        let mut points = Vec::with_capacity(ds.len());
        for &delta in &ds {
            let diffs = (0..n_cycles)
                .map(|i| {
                    let c = self.simulate_coupled_cycle(x, x + delta, &mut stream.substream(i as u64))?;
                    Ok((0..c.tau_upper)
                        .map(|j| r.eval(c.upper_path[j]) - r.eval(c.lower_path[j]))
                        .sum())
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, se) = mean_and_se(&diffs);
            points.push(ContinuityPoint {
                delta,
                mean,
                standard_error: se,
            });
        }
        let shrinking = points
            .windows(2)
            .all(|w| w[1].mean.abs() <= w[0].mean.abs() + 3.0 * w[1].standard_error);
        Ok(ContinuityReport { x, points, shrinking })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_lindley, build_lindley_discrete};
    use crate::split::{DriftFunction, LindleyMinorant, PmfLaw};
    use alloc::boxed::Box;

    fn mm1() -> (crate::models::LindleyMm1, SplitConfig) {
        let k = build_lindley(0.5, 1.0).unwrap();
        let phi = LindleyMinorant::new(&k, 1.0).unwrap();
        let cfg = SplitConfig::new(1.0, phi.mass(), Box::new(phi))
            .unwrap()
            .with_drift(DriftFunction::linear(10.0), DriftFunction::polynomial(alloc::vec![0.0, 40.0, 1.0]));
        (k, cfg)
    }

    #[test]
    fn residual_inverse_is_monotone_in_state() {
        let (k, cfg) = mm1();
        let chain = SplitChain::new(&cfg, &k);
        for i in 1..50 {
            let u = i as f64 / 50.0;
            let mut prev = 0.0;
            for j in 0..=20 {
                let v = j as f64 / 20.0;
                let y = chain.residual_inverse(v, u).unwrap();
                assert!(y >= prev, "u={u} v={v}");
                assert!(chain.residual_cdf(v, y) >= u - 1e-9);
                prev = y;
            }
        }
    }

    #[test]
    fn pi_r_matches_stationary_mean() {
        let (k, cfg) = mm1();
        let chain = SplitChain::new(&cfg, &k);
        let est = chain
            .estimate_pi_r(&RewardFunction::identity(), 20_000, &UniformStream::new(5))
            .unwrap();
        assert!((est.estimate - 1.0).abs() < 4.0 * est.standard_error, "{est:?}");
    }

    #[test]
    fn discrete_cycles_regenerate_from_small_set() {
        let k = build_lindley_discrete(0.25, 2, 1, 30).unwrap();
        let (phi, mass) = PmfLaw::row_minimum(k.transition_matrix(), 1).unwrap();
        let cfg = SplitConfig::new(1.0, mass, Box::new(phi)).unwrap();
        let chain = SplitChain::new(&cfg, &k);
        let mut s = UniformStream::new(9);
        for _ in 0..200 {
            let c = chain.simulate_cycle(CycleStart::State(5.0), &mut s).unwrap();
            assert!(*c.path.last().unwrap() <= 1.0);
            assert!(c.small_set_visits >= 1);
        }
    }

    #[test]
    fn coupled_cycles_keep_order() {
        let (k, cfg) = mm1();
        let chain = SplitChain::new(&cfg, &k);
        let s = UniformStream::new(2);
        for i in 0..300 {
            let c = chain
                .simulate_coupled_cycle(0.3, 2.5, &mut s.substream(i))
                .unwrap();
            assert!(c.order_held);
            assert!(c.tau_lower <= c.tau_upper);
            assert_eq!(c.lower_path.len(), c.tau_upper + 1);
        }
        assert_eq!(chain.clamp_events(), 0);
    }

    #[test]
    fn cycle_cap_reported() {
        let (k, cfg) = mm1();
        let cfg = cfg.with_cycle_cap(1);
        let chain = SplitChain::new(&cfg, &k);
        let mut s = UniformStream::new(1);
        let r = (0..100).find_map(|_| chain.simulate_cycle(CycleStart::State(50.0), &mut s).err());
        assert_eq!(r, Some(Error::CycleOverflow { cap: 1 }));
    }

    #[test]
    fn continuity_probe_rejects_discontinuous_reward() {
        let (k, cfg) = mm1();
        let chain = SplitChain::new(&cfg, &k);
        let r = RewardFunction::new(crate::reward::RewardForm::IndicatorZero);
        assert!(chain
            .continuity_probe(&r, 1.0, &[0.1], 10, &UniformStream::new(1))
            .is_err());
    }
}
