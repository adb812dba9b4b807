//! Concrete stochastically monotone kernels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::{MatrixKernel, StateSpace, TransitionKernel, TransitionMatrix};
use crate::math::{exp, log, normal_cdf, normal_pdf, normal_quantile};
use crate::{Error, Result};

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Waiting times of the M/M/1 queue, `W_{n+1} = [W_n + Z_{n+1}]^+` with
/// `Z = S - A`, `S ~ Exp(service)`, `A ~ Exp(arrival)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindleyMm1 {
    arrival: f64,
    service: f64,
}

/// Builds the M/M/1 Lindley kernel; requires `arrival < service`.
pub fn build_lindley(arrival: f64, service: f64) -> Result<LindleyMm1> {
    positive_finite("arrival rate", arrival)?;
    positive_finite("service rate", service)?;
    if arrival >= service {
        return Err(Error::UnstableModel { arrival, service });
    }
    Ok(LindleyMm1 { arrival, service })
}

impl LindleyMm1 {
    pub fn arrival(&self) -> f64 {
        self.arrival
    }

    pub fn service(&self) -> f64 {
        self.service
    }

    /// Traffic intensity `arrival / service`.
    pub fn load(&self) -> f64 {
        self.arrival / self.service
    }

    /// `P(Z <= z)`.
    pub fn increment_cdf(&self, z: f64) -> f64 {
        let (l, m) = (self.arrival, self.service);
        if z >= 0.0 {
            1.0 - l / (l + m) * exp(-m * z)
        } else {
            m / (l + m) * exp(l * z)
        }
    }

    pub fn increment_pdf(&self, z: f64) -> f64 {
        let (l, m) = (self.arrival, self.service);
        let k = l * m / (l + m);
        if z >= 0.0 {
            k * exp(-m * z)
        } else {
            k * exp(l * z)
        }
    }

    pub fn increment_quantile(&self, u: f64) -> f64 {
        let (l, m) = (self.arrival, self.service);
        let split = m / (l + m);
        if u <= split {
            log(u / split) / l
        } else {
            -log((1.0 - u) * (l + m) / l) / m
        }
    }

    /// Stationary mean waiting time `rho / (service - arrival)`.
    pub fn stationary_mean(&self) -> f64 {
        self.load() / (self.service - self.arrival)
    }

    /// Stationary `P(W = 0) = 1 - rho`.
    pub fn stationary_atom(&self) -> f64 {
        1.0 - self.load()
    }

    /// Stationary `P(W <= w) = 1 - rho * exp(-(service - arrival) w)`.
    pub fn stationary_cdf(&self, w: f64) -> f64 {
        if w < 0.0 {
            0.0
        } else {
            1.0 - self.load() * exp(-(self.service - self.arrival) * w)
        }
    }
}

impl TransitionKernel for LindleyMm1 {
    fn state_space(&self) -> StateSpace {
        StateSpace::Continuous
    }

    fn cdf(&self, x: f64, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else {
            self.increment_cdf(y - x)
        }
    }

    fn inverse_cdf(&self, x: f64, u: f64) -> f64 {
        (x + self.increment_quantile(u)).max(0.0)
    }

    fn declared_monotone(&self) -> bool {
        true
    }

    fn transition_density(&self, x: f64, y: f64) -> Option<f64> {
        Some(if y < 0.0 {
            0.0
        } else if y == 0.0 {
            self.increment_cdf(-x)
        } else {
            self.increment_pdf(y - x)
        })
    }

    fn continuous_in_state(&self) -> bool {
        true
    }
}

/// Lindley recursion on `{0..=top}` with two-point increments:
/// `Z = +up` w.p. `p_up`, `Z = -down` otherwise; `x + Z` is clamped to
/// `[0, top]`.
pub fn build_lindley_discrete(p_up: f64, up: usize, down: usize, top: usize) -> Result<MatrixKernel> {
    if !(p_up > 0.0 && p_up < 1.0) {
        return Err(Error::invalid(format!("p_up must lie in (0,1), got {p_up}")));
    }
    if up == 0 || down == 0 {
        return Err(Error::invalid("increments must be non-zero"));
    }
    if top < up.max(down) {
        return Err(Error::invalid("truncation level must exceed the increments"));
    }
    let drift = p_up * up as f64 - (1.0 - p_up) * down as f64;
    if drift >= 0.0 {
        return Err(Error::UnstableModel {
            arrival: p_up * up as f64,
            service: (1.0 - p_up) * down as f64,
        });
    }
    let n = top + 1;
    let mut rows = vec![vec![0.0; n]; n];
    for (x, row) in rows.iter_mut().enumerate() {
        row[(x + up).min(top)] += p_up;
        row[x.saturating_sub(down)] += 1.0 - p_up;
    }
    MatrixKernel::from_rows(&rows)?.certify_monotone()
}

/// Birth-death chain on `{0..=top}`, reflecting at 0 and folded at `top`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeath {
    pub kernel: MatrixKernel,
    /// Set when some up-probability is at least 1/2, where the untruncated
    /// chain is not positive recurrent and the fold at `top` dominates.
    pub heavy_truncation: bool,
}

/// Constant up-probability `p`, down-probability `1 - p`.
pub fn build_birth_death(p: f64, top: usize) -> Result<BirthDeath> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p must lie in (0,1), got {p}")));
    }
    if top < 2 {
        return Err(Error::invalid("truncation level must be at least 2"));
    }
    build_birth_death_with(&vec![p; top + 1], &vec![1.0 - p; top + 1])
}

/// State-indexed up/down probabilities; the remainder of each row stays put.
/// The up-move at `top` and the down-move at 0 are folded into staying.
pub fn build_birth_death_with(up: &[f64], down: &[f64]) -> Result<BirthDeath> {
    let n = up.len();
    if n < 3 || down.len() != n {
        return Err(Error::invalid("need matching up/down vectors with at least 3 states"));
    }
    let top = n - 1;
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        let (p, q) = (up[i], down[i]);
        if !(p >= 0.0 && q >= 0.0 && p + q <= 1.0 + 1e-15) {
            return Err(Error::invalid(format!("state {i}: up {p} + down {q} is not a sub-probability")));
        }
        rows[i][(i + 1).min(top)] += p;
        rows[i][i.saturating_sub(1)] += q;
        rows[i][i] += (1.0 - p - q).max(0.0);
    }
    let kernel = MatrixKernel::new(TransitionMatrix::from_rows(&rows)?).certify_monotone()?;
    if !kernel.declared_monotone() {
        return Err(Error::invalid("birth-death rates do not give a stochastically monotone chain"));
    }
    Ok(BirthDeath {
        kernel,
        heavy_truncation: up.iter().any(|&p| p >= 0.5),
    })
}

/// Noise laws for the reflected AR(1) model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLaw {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseLaw::Normal { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::invalid("noise mean must be finite"));
                }
                positive_finite("noise sd", sd)
            }
            NoiseLaw::Uniform { low, high } => {
                if low.is_finite() && high.is_finite() && low < high {
                    Ok(())
                } else {
                    Err(Error::invalid("uniform noise needs finite low < high"))
                }
            }
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            NoiseLaw::Normal { mean, sd } => normal_cdf((z - mean) / sd),
            NoiseLaw::Uniform { low, high } => ((z - low) / (high - low)).clamp(0.0, 1.0),
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match *self {
            NoiseLaw::Normal { mean, sd } => normal_pdf((z - mean) / sd) / sd,
            NoiseLaw::Uniform { low, high } => {
                if (low..=high).contains(&z) {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            NoiseLaw::Normal { mean, sd } => mean + sd * normal_quantile(u),
            NoiseLaw::Uniform { low, high } => low + (high - low) * u,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseLaw::Normal { mean, .. } => mean,
            NoiseLaw::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            NoiseLaw::Normal { mean, sd } => mean * mean + sd * sd,
            NoiseLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
        }
    }
}

/// `X_{n+1} = (a X_n + Z_{n+1})^+` with `0 <= a < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectedAr1 {
    a: f64,
    noise: NoiseLaw,
}

pub fn build_reflected_ar1(a: f64, noise: NoiseLaw) -> Result<ReflectedAr1> {
    if !a.is_finite() || a < 0.0 {
        return Err(Error::invalid(format!("coefficient must be in [0,1), got {a}")));
    }
    if a >= 1.0 {
        return Err(Error::NotContractive { rho_upper: a * a });
    }
    noise.validate()?;
    Ok(ReflectedAr1 { a, noise })
}

impl ReflectedAr1 {
    pub fn coefficient(&self) -> f64 {
        self.a
    }

    pub fn noise(&self) -> NoiseLaw {
        self.noise
    }
}

impl TransitionKernel for ReflectedAr1 {
    fn state_space(&self) -> StateSpace {
        StateSpace::Continuous
    }

    fn cdf(&self, x: f64, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else {
            self.noise.cdf(y - self.a * x)
        }
    }

    fn inverse_cdf(&self, x: f64, u: f64) -> f64 {
        (self.a * x + self.noise.quantile(u)).max(0.0)
    }

    fn declared_monotone(&self) -> bool {
        true
    }

    fn transition_density(&self, x: f64, y: f64) -> Option<f64> {
        Some(if y < 0.0 {
            0.0
        } else if y == 0.0 {
            self.noise.cdf(-self.a * x)
        } else {
            self.noise.pdf(y - self.a * x)
        })
    }

    fn continuous_in_state(&self) -> bool {
        true
    }
}

/// Helper for tests and CLI: the matrix of a discrete kernel as rows.
pub fn matrix_rows<K: TransitionKernel + ?Sized>(k: &K) -> Option<Vec<Vec<f64>>> {
    let m = k.matrix()?;
    Some((0..m.dim()).map(|i| m.row(i)).collect())
}
