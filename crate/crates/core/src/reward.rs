//! Reward functions with declared shape metadata.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::kernel::check_grid;
use crate::math::{fabs, floor};
use crate::{Error, Result};

/// Closed-form reward families, plus an escape hatch for closures.
#[derive(Clone)]
pub enum RewardForm {
    /// `r(x) = x`
    Identity,
    /// `r(x) = c`
    Constant(f64),
    /// `r(x) = slope * x + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `r(x) = min(x, cap)`
    Capped(f64),
    /// `r(x) = 1{x = 0}`
    IndicatorZero,
    /// `r(x) = low` for `x < threshold`, `high` otherwise.
    Step { threshold: f64, low: f64, high: f64 },
    /// `r(i) = values[i]` on `Z+`, the last value repeated past the end.
    Table(Vec<f64>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RewardForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardForm::Identity => f.write_str("Identity"),
            RewardForm::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            RewardForm::Linear { slope, intercept } => f
                .debug_struct("Linear")
                .field("slope", slope)
                .field("intercept", intercept)
                .finish(),
            RewardForm::Capped(c) => f.debug_tuple("Capped").field(c).finish(),
            RewardForm::IndicatorZero => f.write_str("IndicatorZero"),
            RewardForm::Step {
                threshold,
                low,
                high,
            } => f
                .debug_struct("Step")
                .field("threshold", threshold)
                .field("low", low)
                .field("high", high)
                .finish(),
            RewardForm::Table(v) => f.debug_tuple("Table").field(v).finish(),
            RewardForm::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A reward `r` together with what the caller declares about it.
#[derive(Debug, Clone)]
pub struct RewardFunction {
    form: RewardForm,
    monotone: bool,
    lipschitz_root_constant: Option<f64>,
    continuous: bool,
}

impl RewardFunction {
    /// Builds a reward and derives its metadata from the form.
    pub fn new(form: RewardForm) -> Self {
        let (monotone, lip, continuous) = match &form {
            RewardForm::Identity => (true, Some(1.0), true),
            RewardForm::Constant(_) => (true, Some(0.0), true),
            RewardForm::Linear { slope, .. } => (*slope >= 0.0, Some(fabs(*slope)), true),
            RewardForm::Capped(_) => (true, Some(1.0), true),
            RewardForm::IndicatorZero => (false, None, false),
            RewardForm::Step { low, high, .. } => (high >= low, None, low == high),
            RewardForm::Table(v) => {
                let monotone = v.windows(2).all(|w| w[0] <= w[1]);
                let lip = v
                    .windows(2)
                    .fold(0.0f64, |m, w| m.max(fabs(w[1] - w[0])));
                (monotone, Some(lip), false)
            }
            RewardForm::Custom(_) => (false, None, false),
        };
        Self {
            form,
            monotone,
            lipschitz_root_constant: lip,
            continuous,
        }
    }

    pub fn identity() -> Self {
        Self::new(RewardForm::Identity)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(RewardForm::Constant(c))
    }

    pub fn linear(slope: f64, intercept: f64) -> Self {
        Self::new(RewardForm::Linear { slope, intercept })
    }

    pub fn table(values: Vec<f64>) -> Self {
        Self::new(RewardForm::Table(values))
    }

    pub fn from_fn(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        monotone: bool,
        lipschitz_root_constant: Option<f64>,
        continuous: bool,
    ) -> Self {
        Self {
            form: RewardForm::Custom(Arc::new(f)),
            monotone,
            lipschitz_root_constant,
            continuous,
        }
    }

    /// Overrides the declared Lipschitz root constant `c^{1/2}`.
    pub fn with_lipschitz(mut self, c_root: Option<f64>) -> Self {
        self.lipschitz_root_constant = c_root;
        self
    }

    pub fn with_monotone(mut self, monotone: bool) -> Self {
        self.monotone = monotone;
        self
    }

    pub fn form(&self) -> &RewardForm {
        &self.form
    }

    pub fn monotone(&self) -> bool {
        self.monotone
    }

    pub fn lipschitz_root_constant(&self) -> Option<f64> {
        self.lipschitz_root_constant
    }

    pub fn continuous(&self) -> bool {
        self.continuous
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.form {
            RewardForm::Identity => x,
            RewardForm::Constant(c) => *c,
            RewardForm::Linear { slope, intercept } => slope * x + intercept,
            RewardForm::Capped(cap) => x.min(*cap),
            RewardForm::IndicatorZero => {
                if x == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            RewardForm::Step {
                threshold,
                low,
                high,
            } => {
                if x < *threshold {
                    *low
                } else {
                    *high
                }
            }
            RewardForm::Table(v) => {
                let i = if x > 0.0 { floor(x + 0.5) as usize } else { 0 };
                v[i.min(v.len() - 1)]
            }
            RewardForm::Custom(f) => f(x),
        }
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }

    /// Checks the monotone and Lipschitz declarations on every pair of grid
    /// points.
    pub fn check_declarations(&self, grid: &[f64]) -> Result<()> {
        check_grid(grid)?;
        let vals = self.eval_grid(grid);
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let (x, y) = (grid[i], grid[j]);
                let (rx, ry) = (vals[i], vals[j]);
                if self.monotone && rx > ry {
                    return Err(Error::CertificationFailed {
                        what: "declared monotone reward decreases".into(),
                        location: x,
                        value: rx - ry,
                    });
                }
                if let Some(c) = self.lipschitz_root_constant {
                    let excess = fabs(rx - ry) - c * (y - x) * (1.0 + 1e-12);
                    if excess > 1e-12 {
                        return Err(Error::CertificationFailed {
                            what: "declared Lipschitz constant exceeded".into(),
                            location: x,
                            value: excess,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn centered(&self, pi_r: f64) -> CenteredReward {
        CenteredReward {
            base: self.clone(),
            pi_r,
        }
    }
}

/// `r_c(x) = r(x) - pi r`.
#[derive(Debug, Clone)]
pub struct CenteredReward {
    pub base: RewardFunction,
    pub pi_r: f64,
}

impl CenteredReward {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.base.eval(x) - self.pi_r
    }

    /// `r~_c(x) = r_c(x) - r_c(0)`, non-negative when `r` is non-decreasing
    /// on `R+`.
    pub fn eval_shifted(&self, x: f64) -> f64 {
        self.base.eval(x) - self.base.eval(0.0)
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn metadata_follows_form() {
        assert!(RewardFunction::identity().monotone());
        assert!(!RewardFunction::linear(-1.0, 0.0).monotone());
        assert_eq!(RewardFunction::linear(-2.0, 1.0).lipschitz_root_constant(), Some(2.0));
        assert!(!RewardFunction::new(RewardForm::IndicatorZero).monotone());
        assert!(!RewardFunction::new(RewardForm::Step {
            threshold: 1.0,
            low: 0.0,
            high: 1.0
        })
        .continuous());
        let t = RewardFunction::table(vec![0.0, 1.0, 3.0]);
        assert!(t.monotone());
        assert_eq!(t.lipschitz_root_constant(), Some(2.0));
        assert_eq!(t.eval(7.0), 3.0);
    }

    #[test]
    fn declarations_are_checked() {
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        RewardFunction::identity().check_declarations(&grid).unwrap();
        let lie = RewardFunction::linear(-1.0, 0.0).with_monotone(true);
        assert!(lie.check_declarations(&grid).is_err());
        let lip_lie = RewardFunction::linear(3.0, 0.0).with_lipschitz(Some(1.0));
        assert!(lip_lie.check_declarations(&grid).is_err());
    }

    #[test]
    fn centering_is_exact() {
        let rc = RewardFunction::linear(2.0, 1.0).centered(0.75);
        assert_eq!(rc.eval(3.0), 7.0 - 0.75);
        assert_eq!(rc.eval_shifted(3.0), 6.0);
    }
}
