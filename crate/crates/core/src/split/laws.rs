use alloc::vec::Vec;

use super::Law;
use crate::kernel::{TransitionKernel, TransitionMatrix};
use crate::math::{exp, log};
use crate::models::LindleyMm1;
use crate::{Error, Result};

/// Law on `{0, 1, ...}` given by a probability mass function.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfLaw {
    pmf: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PmfLaw {
    /// Normalizes non-negative `weights`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("weights have zero total mass"));
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { pmf, cumulative })
    }

    /// The largest minorizing measure over rows `0..=b` of a transition
    /// matrix, `nu(y) = min_{x <= b} P(x, y)`, normalized; returns the law and
    /// the mass of `nu` (the largest admissible `lambda`).
    pub fn row_minimum(m: &TransitionMatrix, b: usize) -> Result<(Self, f64)> {
        if b > m.top() {
            return Err(Error::invalid("small set extends past the truncation"));
        }
        let nu: Vec<f64> = (0..m.dim())
            .map(|y| (0..=b).map(|x| m.get(x, y)).fold(f64::INFINITY, f64::min))
            .collect();
        let mass = nu.iter().sum();
        Ok((Self::new(nu)?, mass))
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }
}

impl Law for PmfLaw {
    fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        let j = libm::floor(y);
        if j >= (self.pmf.len() - 1) as f64 {
            return 1.0;
        }
        self.cumulative[j as usize]
    }

    fn quantile(&self, u: f64) -> f64 {
        self.cumulative
            .partition_point(|&c| c < u)
            .min(self.pmf.len() - 1) as f64
    }

    fn density(&self, y: f64) -> Option<f64> {
        if y < 0.0 || libm::floor(y) != y || y >= self.pmf.len() as f64 {
            return Some(0.0);
        }
        Some(self.pmf[y as usize])
    }
}

/// `phi = P_at(X_1 in .)`: one row of the kernel itself.
#[derive(Debug, Clone)]
pub struct KernelRowLaw<K> {
    kernel: K,
    at: f64,
}

impl<K: TransitionKernel> KernelRowLaw<K> {
    pub fn new(kernel: K, at: f64) -> Self {
        Self { kernel, at }
    }
}

impl<K: TransitionKernel + core::fmt::Debug> Law for KernelRowLaw<K> {
    fn cdf(&self, y: f64) -> f64 {
        self.kernel.cdf(self.at, y)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.kernel.inverse_cdf(self.at, u)
    }

    fn density(&self, y: f64) -> Option<f64> {
        self.kernel.transition_density(self.at, y)
    }
}

/// Normalized pointwise minimum of the M/M/1 Lindley transition laws
/// `P_x(X_1 in .)` over `x in [0, b]`.
///
/// With `k = lm/(l+m)` and `y* = l b/(l+m)` the minimizing measure `nu` has
/// an atom `m/(l+m) e^{-l b}` at 0, density `k e^{l(y-b)}` on `(0, y*)` and
/// `k e^{-m y}` on `[y*, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindleyMinorant {
    arrival: f64,
    service: f64,
    b: f64,
    atom: f64,
    y_star: f64,
    k: f64,
    inner_mass: f64,
    outer_mass: f64,
    mass: f64,
}

impl LindleyMinorant {
    pub fn new(model: &LindleyMm1, b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid("small-set endpoint b must be positive"));
        }
        let (l, m) = (model.arrival(), model.service());
        let k = l * m / (l + m);
        let atom = m / (l + m) * exp(-l * b);
        let y_star = l * b / (l + m);
        let inner_mass = k / l * (exp(l * (y_star - b)) - exp(-l * b));
        let outer_mass = k / m * exp(-m * y_star);
        Ok(Self {
            arrival: l,
            service: m,
            b,
            atom,
            y_star,
            k,
            inner_mass,
            outer_mass,
            mass: atom + inner_mass + outer_mass,
        })
    }

    /// Total mass of the unnormalized minorant: the largest `lambda` for
    /// which `P_x >= lambda phi` on `[0, b]`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    fn nu_cdf(&self, y: f64) -> f64 {
        let (l, m, b, k) = (self.arrival, self.service, self.b, self.k);
        if y < 0.0 {
            0.0
        } else if y < self.y_star {
            self.atom + k / l * (exp(l * (y - b)) - exp(-l * b))
        } else {
            self.atom + self.inner_mass + k / m * (exp(-m * self.y_star) - exp(-m * y))
        }
    }
}

impl Law for LindleyMinorant {
    fn cdf(&self, y: f64) -> f64 {
        (self.nu_cdf(y) / self.mass).min(1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        let (l, m, b, k) = (self.arrival, self.service, self.b, self.k);
        let t = u * self.mass;
        if t <= self.atom {
            0.0
        } else if t <= self.atom + self.inner_mass {
            let y = b + log((t - self.atom) * l / k + exp(-l * b)) / l;
            y.clamp(0.0, self.y_star)
        } else {
            let rest = exp(-m * self.y_star) - (t - self.atom - self.inner_mass) * m / k;
            let y = -log(rest.max(f64::MIN_POSITIVE)) / m;
            y.max(self.y_star)
        }
    }

    fn density(&self, y: f64) -> Option<f64> {
        let (l, m, b, k) = (self.arrival, self.service, self.b, self.k);
        let nu = if y < 0.0 {
            0.0
        } else if y == 0.0 {
            self.atom
        } else if y < self.y_star {
            k * exp(l * (y - b))
        } else {
            k * exp(-m * y)
        };
        Some(nu / self.mass)
    }
}
