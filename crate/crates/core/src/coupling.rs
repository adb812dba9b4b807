//! The shared-uniform coupling `X_{n+1}(x) = F^{-1}(X_n(x), U_{n+1})`.
//!
//! Step `n -> n+1` of every path consumes the same draw `U_{n+1}` of one
//! [`UniformStream`]. Draws are indexed by time, so adding initial states
//! never changes the paths already there.

use alloc::vec::Vec;

use crate::kernel::TransitionKernel;
use crate::rng::UniformStream;
use crate::{Error, Result};

/// Jointly simulated trajectories from ordered initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub initial_states: Vec<f64>,
    pub horizon: usize,
    /// `paths[i][n] = X_n(initial_states[i])`.
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
}

impl CoupledPaths {
    pub fn state(&self, path: usize, step: usize) -> f64 {
        self.paths[path][step]
    }
}

/// A realized random map `kappa(x) = F^{-1}(x, u)`.
#[derive(Debug, Clone, Copy)]
pub struct RandomMap<'a, K: ?Sized> {
    kernel: &'a K,
    u: f64,
}

impl<'a, K: TransitionKernel + ?Sized> RandomMap<'a, K> {
    pub fn new(kernel: &'a K, u: f64) -> Self {
        Self { kernel, u }
    }

    pub fn uniform(&self) -> f64 {
        self.u
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.kernel.inverse_cdf(x, self.u)
    }
}

/// Forward coupled paths from sorted `xs` over `n` steps.
pub fn simulate_coupled<K: TransitionKernel + ?Sized>(
    k: &K,
    xs: &[f64],
    n: usize,
    seed: u64,
) -> Result<CoupledPaths> {
    if xs.windows(2).any(|w| !(w[0] <= w[1])) || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("initial states must be finite and sorted ascending"));
    }
    let stream = UniformStream::new(seed);
    let mut paths: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let mut p = Vec::with_capacity(n + 1);
            p.push(x);
            p
        })
        .collect();
    for step in 0..n {
        let map = RandomMap::new(k, stream.at(step as u64 + 1));
        for p in paths.iter_mut() {
            let next = map.apply(p[step]);
            p.push(next);
        }
    }
    Ok(CoupledPaths {
        initial_states: xs.to_vec(),
        horizon: n,
        paths,
        seed,
    })
}

/// `X_n(x)` for a single path, driven by the same stream layout as
/// [`simulate_coupled`].
pub fn simulate_forward<K: TransitionKernel + ?Sized>(k: &K, x: f64, n: usize, seed: u64) -> f64 {
    let stream = UniformStream::new(seed);
    (1..=n as u64).fold(x, |state, i| k.inverse_cdf(state, stream.at(i)))
}

/// Backward composition `(kappa_1 o kappa_2 o ... o kappa_n)(x)` with
/// `kappa_i = F^{-1}(., U_i)`: `kappa_n` is applied first.
pub fn simulate_backward<K: TransitionKernel + ?Sized>(k: &K, x: f64, n: usize, seed: u64) -> f64 {
    backward_from_stream(k, x, n, &UniformStream::new(seed))
}

pub(crate) fn backward_from_stream<K: TransitionKernel + ?Sized>(
    k: &K,
    x: f64,
    n: usize,
    stream: &UniformStream,
) -> f64 {
    (1..=n as u64)
        .rev()
        .fold(x, |state, i| k.inverse_cdf(state, stream.at(i)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderViolation {
    pub step: usize,
    /// Index of the lower path; the violation is against `path + 1`.
    pub path: usize,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub violations: usize,
    pub first: Option<OrderViolation>,
}

impl OrderReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Counts `paths[i][n] > paths[i+1][n] + slack`.
pub fn check_order_preservation(paths: &CoupledPaths, slack: f64) -> OrderReport {
    let mut violations = 0;
    let mut first = None;
    for step in 0..=paths.horizon {
        for i in 1..paths.paths.len() {
            let excess = paths.paths[i - 1][step] - paths.paths[i][step];
            if excess > slack {
                violations += 1;
                first.get_or_insert(OrderViolation {
                    step,
                    path: i - 1,
                    excess,
                });
            }
        }
    }
    OrderReport { violations, first }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::MatrixKernel;
    use crate::models::{build_birth_death, build_lindley};
    use alloc::vec;

    #[test]
    fn zero_horizon_and_equal_starts() {
        let k = build_lindley(0.5, 1.0).unwrap();
        let p = simulate_coupled(&k, &[2.5], 0, 1).unwrap();
        assert_eq!(p.paths, vec![vec![2.5]]);
        let p = simulate_coupled(&k, &[3.0, 3.0], 50, 9).unwrap();
        assert_eq!(p.paths[0], p.paths[1]);
        assert!(simulate_coupled(&k, &[3.0, 1.0], 5, 9).is_err());
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let k = build_birth_death(0.3, 20).unwrap().kernel;
        let a = simulate_coupled(&k, &[0.0, 5.0], 100, 17).unwrap();
        let b = simulate_coupled(&k, &[0.0, 5.0], 100, 17).unwrap();
        assert_eq!(a, b);
        let c = simulate_coupled(&k, &[0.0, 2.0, 5.0], 100, 17).unwrap();
        assert_eq!(a.paths[0], c.paths[0]);
        assert_eq!(a.paths[1], c.paths[2]);
    }

    #[test]
    fn birth_death_order_many_seeds() {
        let k = build_birth_death(0.3, 20).unwrap().kernel;
        for seed in 0..2000 {
            let p = simulate_coupled(&k, &[0.0, 5.0], 100, seed).unwrap();
            assert!(check_order_preservation(&p, 0.0).holds(), "seed {seed}");
        }
    }

    #[test]
    fn flip_chain_breaks_order() {
        let flip = MatrixKernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = simulate_coupled(&flip, &[0.0, 1.0], 3, 0).unwrap();
        let rep = check_order_preservation(&p, 0.0);
        assert_eq!(rep.violations, 2);
        assert_eq!(rep.first.unwrap().step, 1);
        let single = simulate_coupled(&flip, &[0.0], 3, 0).unwrap();
        assert!(check_order_preservation(&single, 0.0).holds());
    }

    #[test]
    fn backward_matches_forward_at_small_n() {
        let k = build_lindley(0.5, 1.0).unwrap();
        assert_eq!(simulate_backward(&k, 1.5, 0, 3), 1.5);
        assert_eq!(simulate_backward(&k, 1.5, 1, 3), simulate_forward(&k, 1.5, 1, 3));
        let p = simulate_coupled(&k, &[1.5], 1, 3).unwrap();
        assert_eq!(p.paths[0][1], simulate_forward(&k, 1.5, 1, 3));
    }
}
