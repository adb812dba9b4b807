//! Exact solutions of Poisson's equation on truncated `Z+` chains.
//!
//! Three independent routes:
//!
//! * [`solve_linear`]: `(I - P) g = r_c` with one balance row replaced by the
//!   anchor condition `g(z) = 0`;
//! * [`solve_regenerative`]: the expected reward over a cycle that ends at the
//!   first return to `z`, via the taboo system on states other than `z`;
//! * [`solve_series`]: partial sums of `sum_j P^j r_c`.
//!
//! On an irreducible finite chain all three agree up to an additive constant.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::coupling::CoupledPaths;
use crate::kernel::{integer_grid, state_index, stationary_of_matrix, TransitionKernel, TransitionMatrix};
use crate::linalg::solve_square;
use crate::reward::RewardFunction;
use crate::{Error, Result};

/// Slack allowed by [`certify_monotone`].
pub const MONOTONE_CERT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Linear,
    Regenerative,
    Series,
    MonteCarlo,
}

/// Which additive constant a solution carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// `g(z) = 0`.
    Anchor(f64),
    /// Raw first-return representation `g_z(x) = E_x sum_{j<tau} r_c(X_j)`,
    /// `tau = inf{n >= 1 : X_n = z}`.
    FirstReturn(f64),
    /// `g(x) = sum_j E_x r_c(X_j)`.
    Series,
    /// `pi g = 0`.
    MeanZero,
    /// Split-chain representation: cycle ends at the first regeneration.
    Regeneration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub grid: Vec<f64>,
    pub g: Vec<f64>,
    pub normalization: Normalization,
    pub method: Method,
    pub pi_r: f64,
    /// `max_x |(Pg)(x) - g(x) + r_c(x)|`, exact routes only.
    pub residual_sup: Option<f64>,
    /// Per-point standard errors, Monte Carlo routes only.
    pub standard_error: Option<Vec<f64>>,
    /// Standard errors of `g[i+1] - g[i]`, when the estimator can supply them.
    pub adjacent_diff_se: Option<Vec<f64>>,
    /// Number of series terms summed, series routes only.
    pub terms: Option<usize>,
}

impl PoissonSolution {
    pub(crate) fn exact(
        grid: Vec<f64>,
        g: Vec<f64>,
        normalization: Normalization,
        method: Method,
        pi_r: f64,
        residual_sup: f64,
    ) -> Self {
        Self {
            grid,
            g,
            normalization,
            method,
            pi_r,
            residual_sup: Some(residual_sup),
            standard_error: None,
            adjacent_diff_se: None,
            terms: None,
        }
    }

    /// Copy shifted so that `g[index] = 0`.
    pub fn anchored(&self, index: usize) -> Self {
        let shift = self.g[index];
        let mut out = self.clone();
        out.g.iter_mut().for_each(|v| *v -= shift);
        out.normalization = Normalization::Anchor(self.grid[index]);
        out
    }

    /// Copy shifted so that `sum_x pi(x) g(x) = 0`.
    pub fn mean_zero(&self, pi: &[f64]) -> Self {
        let pg: f64 = pi.iter().zip(&self.g).map(|(p, v)| p * v).sum();
        let mut out = self.clone();
        out.g.iter_mut().for_each(|v| *v -= pg);
        out.normalization = Normalization::MeanZero;
        out
    }

    /// `max_x |g(x) - g(z) - (h(x) - h(z))|` with `z = grid[index]`.
    pub fn sup_deviation(&self, other: &PoissonSolution, index: usize) -> f64 {
        assert_eq!(self.g.len(), other.g.len(), "solutions live on different grids");
        let (a0, b0) = (self.g[index], other.g[index]);
        self.g
            .iter()
            .zip(&other.g)
            .fold(0.0f64, |m, (a, b)| m.max(((a - a0) - (b - b0)).abs()))
    }
}

struct DiscreteSetup<'a> {
    m: &'a TransitionMatrix,
    grid: Vec<f64>,
    pi: Vec<f64>,
    pi_r: f64,
    rc: Vec<f64>,
}

fn setup<'a, K: TransitionKernel + ?Sized>(k: &'a K, r: &RewardFunction) -> Result<DiscreteSetup<'a>> {
    let m = k
        .matrix()
        .ok_or_else(|| Error::invalid("exact solvers need a discrete kernel"))?;
    let grid = integer_grid(m.top());
    let pi = stationary_of_matrix(m)?;
    let rv = r.eval_grid(&grid);
    let pi_r: f64 = pi.iter().zip(&rv).map(|(p, v)| p * v).sum();
    let rc = rv.iter().map(|v| v - pi_r).collect();
    Ok(DiscreteSetup {
        m,
        grid,
        pi,
        pi_r,
        rc,
    })
}

/// `(Pg)(x) - g(x) + r_c(x)` at every state.
pub fn poisson_residual(m: &TransitionMatrix, g: &[f64], rc: &[f64]) -> Vec<f64> {
    m.apply(g)
        .iter()
        .zip(g)
        .zip(rc)
        .map(|((pg, g), rc)| pg - g + rc)
        .collect()
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `(I - P) g = r_c` with `g(anchor) = 0`.
pub fn solve_linear<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    anchor: usize,
) -> Result<PoissonSolution> {
    let s = setup(k, r)?;
    let n = s.m.dim();
    if anchor >= n {
        return Err(Error::invalid(format!("anchor {anchor} outside {{0..{}}}", n - 1)));
    }
    let mut a = DMatrix::<f64>::identity(n, n) - s.m.as_dmatrix();
    let mut rhs = s.rc.clone();
    for j in 0..n {
        a[(anchor, j)] = if j == anchor { 1.0 } else { 0.0 };
    }
    rhs[anchor] = 0.0;
    let g = solve_square(a, &rhs).ok_or_else(|| Error::SolverFailure {
        reason: "anchored system is singular".into(),
        states: Vec::new(),
    })?;
    let res = sup_abs(&poisson_residual(s.m, &g, &s.rc));
    Ok(PoissonSolution::exact(
        s.grid,
        g,
        Normalization::Anchor(anchor as f64),
        Method::Linear,
        s.pi_r,
        res,
    ))
}

/// First-return representation `g_z(x) = E_x sum_{j=0}^{tau-1} r_c(X_j)` with
/// `tau = inf{n >= 1 : X_n = z}`, solved exactly via the taboo system
/// `h(x) = r_c(x) + sum_{y != z} P(x, y) h(y)` for `x != z`.
pub fn solve_regenerative<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    z: usize,
) -> Result<PoissonSolution> {
    let s = setup(k, r)?;
    let n = s.m.dim();
    if z >= n {
        return Err(Error::invalid(format!("return state {z} outside {{0..{}}}", n - 1)));
    }
    let from_z = s.m.reachable_from(z);
    let to_z = s.m.reaching(z);
    let bad: Vec<usize> = (0..n).filter(|&i| !(from_z[i] && to_z[i])).collect();
    if !bad.is_empty() {
        return Err(Error::SolverFailure {
            reason: format!("states do not communicate with {z}"),
            states: bad,
        });
    }

    let others: Vec<usize> = (0..n).filter(|&i| i != z).collect();
    let mut h = vec![0.0; n];
    if !others.is_empty() {
        let d = others.len();
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut rhs = Vec::with_capacity(d);
        for (ii, &i) in others.iter().enumerate() {
            for (jj, &j) in others.iter().enumerate() {
                a[(ii, jj)] = if i == j { 1.0 } else { 0.0 } - s.m.get(i, j);
            }
            rhs.push(s.rc[i]);
        }
        let sol = solve_square(a, &rhs).ok_or_else(|| Error::SolverFailure {
            reason: "taboo system is singular".into(),
            states: others.clone(),
        })?;
        for (ii, &i) in others.iter().enumerate() {
            h[i] = sol[ii];
        }
    }
    h[z] = s.rc[z] + others.iter().map(|&y| s.m.get(z, y) * h[y]).sum::<f64>();

    let res = sup_abs(&poisson_residual(s.m, &h, &s.rc));
    Ok(PoissonSolution::exact(
        s.grid,
        h,
        Normalization::FirstReturn(z as f64),
        Method::Regenerative,
        s.pi_r,
        res,
    ))
}

/// Partial sums of `g = sum_j P^j r_c`, stopping once the next term's
/// sup-norm is below `tol`.
pub fn solve_series<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    tol: f64,
    max_terms: usize,
) -> Result<PoissonSolution> {
    if !(tol > 0.0) || max_terms == 0 {
        return Err(Error::invalid("series needs tol > 0 and max_terms >= 1"));
    }
    let s = setup(k, r)?;
    let mut g = vec![0.0; s.m.dim()];
    let mut term = s.rc.clone();
    for t in 1..=max_terms {
        g.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
        term = s.m.apply(&term);
        if sup_abs(&term) < tol {
            let res = sup_abs(&poisson_residual(s.m, &g, &s.rc));
            let mut sol =
                PoissonSolution::exact(s.grid, g, Normalization::Series, Method::Series, s.pi_r, res);
            sol.terms = Some(t);
            return Ok(sol);
        }
    }
    Err(Error::SeriesDiverged {
        terms: max_terms,
        last_term: sup_abs(&term),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityCertificate {
    /// `min_i g(x_{i+1}) - g(x_i)`.
    pub min_increment: f64,
    pub at: f64,
}

/// Certifies `g(x_{i+1}) >= g(x_i) - 1e-10` across the grid.
pub fn certify_monotone(sol: &PoissonSolution) -> Result<MonotonicityCertificate> {
    let mut cert = MonotonicityCertificate {
        min_increment: f64::INFINITY,
        at: sol.grid.first().copied().unwrap_or(0.0),
    };
    for i in 1..sol.g.len() {
        let inc = sol.g[i] - sol.g[i - 1];
        if inc < cert.min_increment {
            cert = MonotonicityCertificate {
                min_increment: inc,
                at: sol.grid[i - 1],
            };
        }
    }
    if cert.min_increment < -MONOTONE_CERT_TOL {
        return Err(Error::CertificationFailed {
            what: "solution decreases".into(),
            location: cert.at,
            value: cert.min_increment,
        });
    }
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasReport {
    pub x: usize,
    pub n: usize,
    /// `E_x S_n(r)`, exact.
    pub expected_sum: f64,
    /// `n pi r + g(x) - pi g`.
    pub approximation: f64,
    pub gap: f64,
}

/// Compares `E_x S_n(r) = sum_{j<n} (P^j r)(x)` against `n pi r + g(x) - pi g`.
pub fn bias_expansion_check<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    sol: &PoissonSolution,
    x: usize,
    n: usize,
) -> Result<BiasReport> {
    let s = setup(k, r)?;
    if x >= s.m.dim() || sol.g.len() != s.m.dim() {
        return Err(Error::invalid("state or solution does not match the kernel"));
    }
    let mut v = r.eval_grid(&s.grid);
    let mut expected_sum = 0.0;
    for _ in 0..n {
        expected_sum += v[x];
        v = s.m.apply(&v);
    }
    let pi_g: f64 = s.pi.iter().zip(&sol.g).map(|(p, g)| p * g).sum();
    let approximation = n as f64 * s.pi_r + sol.g[x] - pi_g;
    Ok(BiasReport {
        x,
        n,
        expected_sum,
        approximation,
        gap: (expected_sum - approximation).abs(),
    })
}

/// `M_n = g(X_n) + sum_{j<n} r_c(X_j)` along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTrace {
    pub path: Vec<f64>,
    pub values: Vec<f64>,
    pub increments: Vec<f64>,
    /// `(Pg)(x) - g(x) + r_c(x)` at each visited state (excluding the last).
    pub drifts: Vec<f64>,
}

impl MartingaleTrace {
    pub fn max_abs_drift(&self) -> f64 {
        sup_abs(&self.drifts)
    }
}

/// Builds `M_n` along each path and the exact one-step drift at every visited
/// state.
pub fn martingale_drift_check<K: TransitionKernel + ?Sized>(
    k: &K,
    r: &RewardFunction,
    sol: &PoissonSolution,
    paths: &CoupledPaths,
) -> Result<Vec<MartingaleTrace>> {
    let m = k
        .matrix()
        .ok_or_else(|| Error::invalid("martingale drift check needs a discrete kernel"))?;
    if sol.g.len() != m.dim() {
        return Err(Error::invalid("solution does not match the kernel"));
    }
    let top = m.top();
    let rc: Vec<f64> = sol.grid.iter().map(|&x| r.eval(x) - sol.pi_r).collect();
    let drift = poisson_residual(m, &sol.g, &rc);
    let traces = paths
        .paths
        .iter()
        .map(|path| {
            let idx: Vec<usize> = path.iter().map(|&x| state_index(x, top)).collect();
            let mut values = Vec::with_capacity(path.len());
            let mut acc = 0.0;
            for &i in &idx {
                values.push(sol.g[i] + acc);
                acc += rc[i];
            }
            let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
            let drifts = idx[..idx.len().saturating_sub(1)]
                .iter()
                .map(|&i| drift[i])
                .collect();
            MartingaleTrace {
                path: path.clone(),
                values,
                increments,
                drifts,
            }
        })
        .collect();
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::simulate_coupled;
    use crate::kernel::MatrixKernel;
    use crate::models::build_birth_death;

    fn two_state(p: f64, q: f64) -> MatrixKernel {
        MatrixKernel::from_rows(&[vec![1.0 - p, p], vec![q, 1.0 - q]])
            .unwrap()
            .certify_monotone()
            .unwrap()
    }

    #[test]
    fn two_state_linear_hand_solve() {
        let k = two_state(0.5, 0.5);
        let r = RewardFunction::table(vec![0.0, 1.0]);
        let sol = solve_linear(&k, &r, 0).unwrap();
        assert!((sol.pi_r - 0.5).abs() < 1e-15);
        assert!(sol.g[0].abs() < 1e-15 && (sol.g[1] - 1.0).abs() < 1e-14);
        assert!(sol.residual_sup.unwrap() < 1e-14);
    }

    #[test]
    fn two_state_general_rates() {
        // g(1) - g(0) = 1/(p+q) for r = (0,1)
        let k = two_state(0.2, 0.6);
        let r = RewardFunction::table(vec![0.0, 1.0]);
        let sol = solve_linear(&k, &r, 0).unwrap();
        assert!((sol.g[1] - 1.0 / 0.8).abs() < 1e-13);
        let reg = solve_regenerative(&k, &r, 0).unwrap();
        assert!((reg.g[1] - reg.g[0] - 1.0 / 0.8).abs() < 1e-13);
    }

    #[test]
    fn constant_reward_gives_zero() {
        let k = build_birth_death(0.3, 10).unwrap().kernel;
        let r = RewardFunction::constant(4.0);
        for sol in [
            solve_linear(&k, &r, 0).unwrap(),
            solve_regenerative(&k, &r, 0).unwrap(),
            solve_series(&k, &r, 1e-12, 10).unwrap(),
        ] {
            assert!(sup_abs(&sol.g) < 1e-12, "{:?}", sol.method);
        }
        assert_eq!(solve_series(&k, &r, 1e-12, 10).unwrap().terms, Some(1));
    }

    #[test]
    fn series_two_state_and_flip() {
        let k = two_state(0.5, 0.5);
        let r = RewardFunction::table(vec![0.0, 1.0]);
        let s = solve_series(&k, &r, 1e-12, 10).unwrap();
        assert!(s.terms.unwrap() <= 2);
        let l = solve_linear(&k, &r, 0).unwrap();
        assert!(s.sup_deviation(&l, 0) < 1e-14);

        let flip = MatrixKernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            solve_series(&flip, &r, 1e-12, 1000),
            Err(Error::SeriesDiverged { terms: 1000, .. })
        ));
    }

    #[test]
    fn regenerative_rejects_non_communicating_states() {
        let k = MatrixKernel::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        match solve_regenerative(&k, &RewardFunction::identity(), 0) {
            Err(Error::SolverFailure { states, .. }) => assert_eq!(states, vec![2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn monotone_certificate_and_sign_flip() {
        let k = build_birth_death(0.3, 20).unwrap().kernel;
        let sol = solve_regenerative(&k, &RewardFunction::identity(), 0).unwrap();
        let cert = certify_monotone(&sol).unwrap();
        assert!(cert.min_increment > 0.0);
        let neg = solve_regenerative(&k, &RewardFunction::linear(-1.0, 0.0), 0).unwrap();
        assert!(certify_monotone(&neg).is_err());
        let mut flipped = neg.clone();
        flipped.g.iter_mut().for_each(|v| *v = -*v);
        assert!(certify_monotone(&flipped).is_ok());
    }

    #[test]
    fn anchor_invariance() {
        let k = build_birth_death(0.3, 20).unwrap().kernel;
        let r = RewardFunction::identity();
        let a = solve_linear(&k, &r, 0).unwrap();
        let b = solve_linear(&k, &r, 7).unwrap();
        assert!(a.sup_deviation(&b, 3) < 1e-10);
        assert!(b.g[7].abs() < 1e-15);
    }

    #[test]
    fn bias_zero_horizon_and_two_state() {
        let k = two_state(0.5, 0.5);
        let r = RewardFunction::table(vec![0.0, 1.0]);
        let sol = solve_linear(&k, &r, 0).unwrap();
        let b0 = bias_expansion_check(&k, &r, &sol, 0, 0).unwrap();
        assert_eq!(b0.expected_sum, 0.0);
        assert!((b0.gap - 0.5).abs() < 1e-15);
        let b = bias_expansion_check(&k, &r, &sol, 0, 50).unwrap();
        assert!(b.gap <= 1e-12);
    }

    #[test]
    fn drift_is_zero_for_exact_solution() {
        let k = two_state(0.5, 0.5);
        let r = RewardFunction::table(vec![0.0, 1.0]);
        let sol = solve_linear(&k, &r, 0).unwrap();
        let paths = simulate_coupled(&k, &[0.0, 1.0], 30, 5).unwrap();
        for t in martingale_drift_check(&k, &r, &sol, &paths).unwrap() {
            assert!(t.max_abs_drift() < 1e-14);
            assert_eq!(t.values.len(), 31);
            assert_eq!(t.increments.len(), 30);
        }
        let c = RewardFunction::constant(2.0);
        let sol = solve_linear(&k, &c, 0).unwrap();
        for t in martingale_drift_check(&k, &c, &sol, &paths).unwrap() {
            assert!(t.values.iter().all(|v| v.abs() < 1e-15));
        }
    }
}
