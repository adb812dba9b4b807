//! Transition kernels: CDF `F(x, y) = P_x(X_1 <= y)`, generalized inverse
//! `F^{-1}(x, u) = inf{z : F(x, z) >= u}`, and (for chains on a truncated
//! `Z+`) the transition matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::solve_square;
use crate::math::{floor, round};
use crate::{Error, Result};

/// Allowed deviation of a discrete row sum from 1.
pub const MASS_TOL: f64 = 1e-12;
/// Allowed `|pi P - pi|` for stationary distributions.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Slack in `F(x', y) <= F(x, y) + slack` for monotonicity certification.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub mass: f64,
    pub fixed_point: f64,
    pub monotone_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass: MASS_TOL,
            fixed_point: FIXED_POINT_TOL,
            monotone_slack: MONOTONE_SLACK,
        }
    }
}

/// State space of a kernel. Discrete chains live on `{0, ..., top}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    Discrete { top: usize },
    Continuous,
}

impl StateSpace {
    pub fn is_discrete(self) -> bool {
        matches!(self, StateSpace::Discrete { .. })
    }
}

/// One-step transition law of a Markov chain on a subset of `R`.
///
/// States are `f64` throughout; discrete chains use the integers
/// `0.0, 1.0, ..., top as f64`.
pub trait TransitionKernel {
    fn state_space(&self) -> StateSpace;

    /// `F(x, y) = P_x(X_1 <= y)`.
    fn cdf(&self, x: f64, y: f64) -> f64;

    /// `F^{-1}(x, u) = inf{z : F(x, z) >= u}` for `u` in (0,1).
    fn inverse_cdf(&self, x: f64, u: f64) -> f64;

    /// Row-stochastic matrix, present iff the kernel is discrete.
    fn matrix(&self) -> Option<&TransitionMatrix> {
        None
    }

    /// Whether the constructor certified stochastic monotonicity.
    fn declared_monotone(&self) -> bool {
        false
    }

    /// Density of `P_x(X_1 in .)` at `y`. The reference measure is counting
    /// measure for discrete kernels and `delta_0 + Lebesgue(0, inf)` for
    /// kernels on `R+` (so `y = 0` returns the atom at zero).
    fn transition_density(&self, _x: f64, _y: f64) -> Option<f64> {
        None
    }

    /// Whether `x -> F^{-1}(x, u)` is continuous for every `u`.
    fn continuous_in_state(&self) -> bool {
        false
    }
}

impl<K: TransitionKernel + ?Sized> TransitionKernel for &K {
    fn state_space(&self) -> StateSpace {
        (**self).state_space()
    }
    fn cdf(&self, x: f64, y: f64) -> f64 {
        (**self).cdf(x, y)
    }
    fn inverse_cdf(&self, x: f64, u: f64) -> f64 {
        (**self).inverse_cdf(x, u)
    }
    fn matrix(&self) -> Option<&TransitionMatrix> {
        (**self).matrix()
    }
    fn declared_monotone(&self) -> bool {
        (**self).declared_monotone()
    }
    fn transition_density(&self, x: f64, y: f64) -> Option<f64> {
        (**self).transition_density(x, y)
    }
    fn continuous_in_state(&self) -> bool {
        (**self).continuous_in_state()
    }
}

impl<K: TransitionKernel + ?Sized> TransitionKernel for alloc::boxed::Box<K> {
    fn state_space(&self) -> StateSpace {
        (**self).state_space()
    }
    fn cdf(&self, x: f64, y: f64) -> f64 {
        (**self).cdf(x, y)
    }
    fn inverse_cdf(&self, x: f64, u: f64) -> f64 {
        (**self).inverse_cdf(x, u)
    }
    fn matrix(&self) -> Option<&TransitionMatrix> {
        (**self).matrix()
    }
    fn declared_monotone(&self) -> bool {
        (**self).declared_monotone()
    }
    fn transition_density(&self, x: f64, y: f64) -> Option<f64> {
        (**self).transition_density(x, y)
    }
    fn continuous_in_state(&self) -> bool {
        (**self).continuous_in_state()
    }
}

/// Maps a state to its index on `{0..=top}`.
#[inline]
pub fn state_index(x: f64, top: usize) -> usize {
    if !(x > 0.0) {
        0
    } else {
        let i = round(x);
        if i >= top as f64 {
            top
        } else {
            i as usize
        }
    }
}

/// Square non-negative matrix. Row sums are *not* forced to one here so that
/// [`validate_kernel`] can report mass defects.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    data: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("transition matrix has no rows"));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(format!("entry ({i},{j}) = {p} is not a probability")));
                }
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            data: DMatrix::from_row_slice(n, n, &flat),
        })
    }

    /// Number of states, `top + 1`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn top(&self) -> usize {
        self.dim() - 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|j| self.data[(i, j)]).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.data.row(i).sum()
    }

    /// `(P v)(i) = sum_j P(i, j) v(j)`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(v.len(), n, "vector length must match matrix dimension");
        (0..n)
            .map(|i| (0..n).map(|j| self.data[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `(mu P)(j) = sum_i mu(i) P(i, j)`.
    pub fn apply_left(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(mu.len(), n, "vector length must match matrix dimension");
        (0..n)
            .map(|j| (0..n).map(|i| mu[i] * self.data[(i, j)]).sum())
            .collect()
    }

    pub(crate) fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// States reachable from `from` in one or more steps, plus `from`.
    pub fn reachable_from(&self, from: usize) -> Vec<bool> {
        let n = self.dim();
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && self.get(i, j) > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// States from which `to` is reachable, plus `to`.
    pub fn reaching(&self, to: usize) -> Vec<bool> {
        let n = self.dim();
        let mut seen = vec![false; n];
        let mut stack = vec![to];
        seen[to] = true;
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if !seen[i] && self.get(i, j) > 0.0 {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen
    }
}

/// Discrete kernel backed by an explicit matrix on `{0..=top}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixKernel {
    matrix: TransitionMatrix,
    cumulative: Vec<f64>,
    monotone: bool,
}

impl MatrixKernel {
    pub fn new(matrix: TransitionMatrix) -> Self {
        let n = matrix.dim();
        let mut cumulative = Vec::with_capacity(n * n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += matrix.get(i, j);
                cumulative.push(acc);
            }
        }
        Self {
            matrix,
            cumulative,
            monotone: false,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(TransitionMatrix::from_rows(rows)?))
    }

    /// Runs [`check_stochastic_monotonicity`] on the full state grid and, if
    /// it passes, marks the kernel as monotone.
    pub fn certify_monotone(mut self) -> Result<Self> {
        let grid = integer_grid(self.matrix.top());
        let report = check_stochastic_monotonicity(&self, &grid, MONOTONE_SLACK)?;
        self.monotone = report.monotone;
        Ok(self)
    }

    pub fn transition_matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    fn cum_row(&self, i: usize) -> &[f64] {
        let n = self.matrix.dim();
        &self.cumulative[i * n..(i + 1) * n]
    }
}

impl TransitionKernel for MatrixKernel {
    fn state_space(&self) -> StateSpace {
        StateSpace::Discrete {
            top: self.matrix.top(),
        }
    }

    fn cdf(&self, x: f64, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        let top = self.matrix.top();
        let j = if y >= top as f64 { top } else { floor(y) as usize };
        self.cum_row(state_index(x, top))[j]
    }

    fn inverse_cdf(&self, x: f64, u: f64) -> f64 {
        let top = self.matrix.top();
        let row = self.cum_row(state_index(x, top));
        row.partition_point(|&c| c < u).min(top) as f64
    }

    fn matrix(&self) -> Option<&TransitionMatrix> {
        Some(&self.matrix)
    }

    fn declared_monotone(&self) -> bool {
        self.monotone
    }

    fn transition_density(&self, x: f64, y: f64) -> Option<f64> {
        let top = self.matrix.top();
        if y < 0.0 || y > top as f64 || floor(y) != y {
            return Some(0.0);
        }
        Some(self.matrix.get(state_index(x, top), y as usize))
    }
}

/// `{0, 1, ..., top}` as states.
pub fn integer_grid(top: usize) -> Vec<f64> {
    (0..=top).map(|i| i as f64).collect()
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Default certification grid: 201 points spanning `[0, hi]`, or every
/// state of a discrete kernel.
pub fn default_grid<K: TransitionKernel + ?Sized>(k: &K, hi: f64) -> Vec<f64> {
    match k.state_space() {
        StateSpace::Discrete { top } => integer_grid(top),
        StateSpace::Continuous => uniform_grid(0.0, hi, 201),
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid is empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("grid contains non-finite values"));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("grid is not sorted ascending"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelIssue {
    RowMass { row: usize, error: f64 },
    CdfOutOfRange { x: f64, y: f64, value: f64 },
    CdfDecreasing { x: f64, y: f64, drop: f64 },
    CdfLimit { x: f64, value: f64 },
    InverseBelowLevel { x: f64, u: f64, z: f64, cdf: f64 },
    InverseNotMinimal { x: f64, u: f64, z: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `max_i |sum_j P(i, j) - 1|`, discrete kernels only.
    pub max_mass_error: Option<f64>,
    pub cdf_violations: usize,
    pub inverse_violations: usize,
    pub issues: Vec<KernelIssue>,
    pub passed: bool,
}

/// Checks row masses, CDF shape (range, monotone in `y`, limit 1) and the
/// generalized-inverse identities on `grid` with `u` in `{0.01, ..., 0.99}`.
pub fn validate_kernel<K: TransitionKernel + ?Sized>(
    k: &K,
    grid: &[f64],
    tol: &Tolerances,
) -> Result<ValidationReport> {
    check_grid(grid)?;
    let mut issues = Vec::new();

    let mut max_mass_error = None;
    if let Some(m) = k.matrix() {
        let mut worst = 0.0f64;
        for i in 0..m.dim() {
            let err = (m.row_sum(i) - 1.0).abs();
            worst = worst.max(err);
            if err > tol.mass {
                issues.push(KernelIssue::RowMass { row: i, error: err });
            }
        }
        max_mass_error = Some(worst);
    }
    let mass_issues = issues.len();

    for &x in grid {
        let mut prev = f64::NEG_INFINITY;
        for &y in grid {
            let f = k.cdf(x, y);
            if !(-tol.mass..=1.0 + tol.mass).contains(&f) {
                issues.push(KernelIssue::CdfOutOfRange { x, y, value: f });
            }
            if f < prev - tol.monotone_slack {
                issues.push(KernelIssue::CdfDecreasing {
                    x,
                    y,
                    drop: prev - f,
                });
            }
            prev = prev.max(f);
        }
        // the discrete limit is the row mass, already reported above
        if k.matrix().is_none() {
            let lim = k.cdf(x, f64::MAX);
            if (lim - 1.0).abs() > tol.mass {
                issues.push(KernelIssue::CdfLimit { x, value: lim });
            }
        }
    }
    let cdf_violations = issues.len() - mass_issues;

    let discrete = k.state_space().is_discrete();
    for &x in grid {
        for i in 1..100 {
            let u = i as f64 / 100.0;
            let z = k.inverse_cdf(x, u);
            let f = k.cdf(x, z);
            if f < u - tol.monotone_slack {
                issues.push(KernelIssue::InverseBelowLevel { x, u, z, cdf: f });
                continue;
            }
            let below = if discrete {
                (z >= 1.0).then_some(z - 1.0)
            } else {
                (z > 0.0).then(|| z - 1e-7 * z.abs().max(1.0))
            };
            if let Some(zb) = below {
                if k.cdf(x, zb) >= u + tol.monotone_slack {
                    issues.push(KernelIssue::InverseNotMinimal { x, u, z });
                }
            }
        }
    }
    let inverse_violations = issues.len() - mass_issues - cdf_violations;

    Ok(ValidationReport {
        max_mass_error,
        cdf_violations,
        inverse_violations,
        passed: issues.is_empty(),
        issues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityViolation {
    pub x: f64,
    pub x_next: f64,
    pub y: f64,
    /// `F(x_next, y) - F(x, y)`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub monotone: bool,
    pub violations: usize,
    pub worst: Option<MonotonicityViolation>,
    /// Violations of `F^{-1}(x, u) <= F^{-1}(x', u)` for `u` in `{0.01..0.99}`.
    pub inverse_violations: usize,
}

/// Certifies on `grid` that `P_x(X_1 > y)` is non-decreasing in `x`:
/// `F(x', y) <= F(x, y) + slack` for consecutive `x < x'` and every grid `y`.
pub fn check_stochastic_monotonicity<K: TransitionKernel + ?Sized>(
    k: &K,
    grid: &[f64],
    slack: f64,
) -> Result<MonotonicityReport> {
    check_grid(grid)?;
    let mut violations = 0;
    let mut worst: Option<MonotonicityViolation> = None;
    let mut inverse_violations = 0;
    for w in grid.windows(2) {
        let (x, x_next) = (w[0], w[1]);
        for &y in grid {
            let excess = k.cdf(x_next, y) - k.cdf(x, y);
            if excess > slack {
                violations += 1;
                if worst.as_ref().is_none_or(|v| excess > v.excess) {
                    worst = Some(MonotonicityViolation {
                        x,
                        x_next,
                        y,
                        excess,
                    });
                }
            }
        }
        for i in 1..100 {
            let u = i as f64 / 100.0;
            if k.inverse_cdf(x, u) > k.inverse_cdf(x_next, u) + slack {
                inverse_violations += 1;
            }
        }
    }
    Ok(MonotonicityReport {
        monotone: violations == 0 && inverse_violations == 0,
        violations,
        worst,
        inverse_violations,
    })
}

/// Solves `pi P = pi`, `sum pi = 1` as a square linear system in which the
/// last balance equation is replaced by the normalization.
pub fn stationary_distribution<K: TransitionKernel + ?Sized>(k: &K) -> Result<Vec<f64>> {
    let m = k
        .matrix()
        .ok_or_else(|| Error::invalid("stationary_distribution needs a discrete kernel"))?;
    stationary_of_matrix(m)
}

pub(crate) fn stationary_of_matrix(m: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = m.dim();
    let p = m.as_dmatrix();
    let mut a = DMatrix::<f64>::identity(n, n) - p.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let mut pi = solve_square(a, &rhs).ok_or_else(|| {
        Error::NoUniqueStationary("balance equations are singular (reducible chain)".into())
    })?;
    for v in pi.iter_mut() {
        if *v < 0.0 {
            if *v < -FIXED_POINT_TOL {
                return Err(Error::NoUniqueStationary(format!(
                    "solution has negative mass {v}"
                )));
            }
            *v = 0.0;
        }
    }
    let pp = m.apply_left(&pi);
    let residual = pp
        .iter()
        .zip(&pi)
        .fold(0.0f64, |r, (a, b)| r.max((a - b).abs()));
    if residual > FIXED_POINT_TOL {
        return Err(Error::NoUniqueStationary(format!(
            "fixed-point residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two(rows: [[f64; 2]; 2]) -> MatrixKernel {
        MatrixKernel::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap()
    }

    #[test]
    fn doubly_stochastic_two_state_validates() {
        let k = two([[0.5, 0.5], [0.5, 0.5]]);
        let rep = validate_kernel(&k, &[0.0, 1.0], &Tolerances::default()).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.max_mass_error, Some(0.0));
    }

    #[test]
    fn mass_defect_is_reported() {
        let k = two([[0.5, 0.49], [0.5, 0.5]]);
        let rep = validate_kernel(&k, &[0.0, 1.0], &Tolerances::default()).unwrap();
        assert!(!rep.passed);
        assert!((rep.max_mass_error.unwrap() - 0.01).abs() < 1e-15);
        assert!(matches!(rep.issues[0], KernelIssue::RowMass { row: 0, .. }));
    }

    #[test]
    fn bad_grids_rejected() {
        let k = two([[0.5, 0.5], [0.5, 0.5]]);
        let tol = Tolerances::default();
        assert!(matches!(validate_kernel(&k, &[], &tol), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            validate_kernel(&k, &[1.0, 0.0], &tol),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            check_stochastic_monotonicity(&k, &[1.0, 0.0], MONOTONE_SLACK),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn monotone_and_flip_chains() {
        let k = two([[0.5, 0.5], [0.0, 1.0]]);
        let rep = check_stochastic_monotonicity(&k, &[0.0, 1.0], MONOTONE_SLACK).unwrap();
        assert!(rep.monotone);

        let flip = two([[0.0, 1.0], [1.0, 0.0]]);
        let rep = check_stochastic_monotonicity(&flip, &[0.0, 1.0], MONOTONE_SLACK).unwrap();
        assert!(!rep.monotone);
        let w = rep.worst.unwrap();
        assert_eq!((w.x, w.x_next, w.y), (0.0, 1.0, 0.0));
        assert_eq!(w.excess, 1.0);
    }

    #[test]
    fn matrix_cdf_and_inverse() {
        let k = MatrixKernel::from_rows(&[
            vec![0.2, 0.3, 0.5],
            vec![0.0, 0.5, 0.5],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(k.cdf(0.0, -0.5), 0.0);
        assert!((k.cdf(0.0, 1.7) - 0.5).abs() < 1e-15);
        assert_eq!(k.cdf(0.0, 10.0), 1.0);
        assert_eq!(k.inverse_cdf(0.0, 0.2), 0.0);
        assert_eq!(k.inverse_cdf(0.0, 0.2000001), 1.0);
        assert_eq!(k.inverse_cdf(1.0, 0.3), 1.0);
        assert_eq!(k.inverse_cdf(2.0, 0.01), 2.0);
        assert_eq!(k.transition_density(0.0, 1.0), Some(0.3));
        assert_eq!(k.transition_density(0.0, 0.5), Some(0.0));
    }

    #[test]
    fn stationary_small_cases() {
        let pi = stationary_distribution(&two([[0.5, 0.5], [0.5, 0.5]])).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let pi = stationary_distribution(&two([[0.7, 0.3], [0.7, 0.3]])).unwrap();
        assert!((pi[0] - 0.7).abs() < 1e-14 && (pi[1] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn reducible_chain_has_no_unique_stationary() {
        let k = MatrixKernel::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(matches!(
            stationary_distribution(&k),
            Err(Error::NoUniqueStationary(_))
        ));
    }

    #[test]
    fn reachability() {
        let k = MatrixKernel::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let m = k.transition_matrix();
        assert_eq!(m.reachable_from(1), vec![true, true, true]);
        assert_eq!(m.reaching(0), vec![true, true, false]);
    }

    #[test]
    fn state_index_rounds_and_clamps() {
        assert_eq!(state_index(-3.0, 5), 0);
        assert_eq!(state_index(2.0000000001, 5), 2);
        assert_eq!(state_index(17.0, 5), 5);
        assert_eq!(state_index(f64::NAN, 5), 0);
    }
}
