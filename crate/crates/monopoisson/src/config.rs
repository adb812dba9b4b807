//! Run configuration files (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! family = "lindley"        # birth_death | lindley | lindley_discrete | reflected_ar1 | matrix
//! arrival = 0.5
//! service = 1.0
//!
//! [reward]
//! form = "identity"          # identity | constant | linear | capped | indicator_zero | step | table
//!
//! [split]                    # optional
//! b = 1.0
//! phi = "minorant"           # minorant | row_minimum | kernel_row
//! v1 = [0.0, 10.0]           # polynomial coefficients, lowest degree first
//! v2 = [0.0, 40.0, 1.0]
//!
//! [solver]                   # every key optional
//! method = "linear"
//! cycles = 10000
//! ```
//!
//! Unknown keys are rejected. Errors carry the dotted path of the offending
//! key and, for syntax errors, the line number.

use std::fmt;

use monopoisson_core::kernel::{integer_grid, uniform_grid, MatrixKernel, TransitionMatrix};
use monopoisson_core::models::{
    build_birth_death, build_lindley, build_lindley_discrete, build_reflected_ar1, LindleyMm1, NoiseLaw,
    ReflectedAr1,
};
use monopoisson_core::split::{DriftFunction, KernelRowLaw, LindleyMinorant, Law, PmfLaw, SplitConfig};
use monopoisson_core::{RewardForm, RewardFunction, StateSpace, TransitionKernel};
use serde::{Deserialize, Serialize};

/// Seed used when neither the config, the command line nor
/// [`SEED_ENV`] supplies one.
pub const DEFAULT_SEED: u64 = 20_240_501;
/// Environment variable that replaces [`DEFAULT_SEED`].
pub const SEED_ENV: &str = "MONOPOISSON_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted key path, e.g. `split.lambda`; empty for top-level syntax errors.
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSection>,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    BirthDeath { p: f64, top: usize },
    Lindley { arrival: f64, service: f64 },
    LindleyDiscrete { p_up: f64, up: usize, down: usize, top: usize },
    ReflectedAr1 { a: f64, noise: NoiseConfig },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Identity,
    Constant,
    Linear,
    Capped,
    IndicatorZero,
    Step,
    Table,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(default)]
    pub form: RewardKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Overrides the derived monotonicity declaration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotone: Option<bool>,
    /// Overrides the derived Lipschitz root constant `c^{1/2}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_root: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKind {
    /// Pointwise minimum of the M/M/1 transition laws over the small set.
    Minorant,
    /// Pointwise minimum of the matrix rows over the small set.
    RowMinimum,
    /// One row of the kernel, at `phi_at`.
    KernelRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub b: f64,
    /// Defaults to the mass of the minorant for `minorant` and `row_minimum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_at: Option<f64>,
    #[serde(default)]
    pub v1: Vec<f64>,
    #[serde(default)]
    pub v2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Linear,
    Regenerative,
    Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: SolveMethod,
    pub anchor: usize,
    /// Stopping tolerance of the series route.
    pub tol: f64,
    pub max_terms: usize,
    /// Regeneration cycles per estimate.
    pub cycles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at: Option<Vec<f64>>,
    /// `"lo:hi:n"`; integer states for discrete models when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    pub contractive_tol: f64,
    /// Coupled paths for the contractive series.
    pub paths: usize,
    /// Backward-iteration samples for `pi r` on the contractive route.
    pub pi_samples: usize,
    /// Sample size of KS, contraction and coupling checks.
    pub samples: usize,
    pub horizon: usize,
    /// Horizon of the finite-time bias expansion check.
    pub bias_horizon: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: SolveMethod::Linear,
            anchor: 0,
            tol: 1e-12,
            max_terms: 100_000,
            cycles: 10_000,
            at: None,
            grid: None,
            contractive_tol: 1e-2,
            paths: 10_000,
            pi_samples: 100_000,
            samples: 10_000,
            horizon: 100,
            bias_horizon: 200,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError {
            path: if path == "." { String::new() } else { path },
            line: inner.span().map(|s| line_of(text, s.start)),
            message: inner.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes back to TOML; `parse_config(&to_toml(c)) == c` for valid `c`.
pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run configs always serialize")
}

fn check(ok: bool, path: &str, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::at(path, msg))
    }
}

fn in_open_unit(p: f64) -> bool {
    p > 0.0 && p < 1.0
}

/// Parses `"lo:hi:n"`.
pub fn parse_grid(spec: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let [lo, hi, n] = parts.as_slice() else {
        return None;
    };
    let (lo, hi, n): (f64, f64, usize) = (lo.parse().ok()?, hi.parse().ok()?, n.parse().ok()?);
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && n >= 1) || (n == 1 && lo != hi) {
        return None;
    }
    Some(uniform_grid(lo, hi, n))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.model {
            ModelConfig::BirthDeath { p, top } => {
                check(in_open_unit(*p), "model.p", "must lie in (0,1)")?;
                check(*top >= 2, "model.top", "must be at least 2")?;
            }
            ModelConfig::Lindley { arrival, service } => {
                check(*arrival > 0.0, "model.arrival", "must be positive")?;
                check(*service > 0.0, "model.service", "must be positive")?;
                check(arrival < service, "model.arrival", "must be below the service rate")?;
            }
            ModelConfig::LindleyDiscrete { p_up, up, down, top } => {
                check(in_open_unit(*p_up), "model.p_up", "must lie in (0,1)")?;
                check(*up >= 1, "model.up", "must be at least 1")?;
                check(*down >= 1, "model.down", "must be at least 1")?;
                check(
                    p_up * (*up as f64) < (1.0 - p_up) * (*down as f64),
                    "model.p_up",
                    "increment drift must be negative",
                )?;
                check(*top > *up, "model.top", "must exceed the up step")?;
            }
            ModelConfig::ReflectedAr1 { a, noise } => {
                check((0.0..1.0).contains(a), "model.a", "must lie in [0,1)")?;
                match noise {
                    NoiseConfig::Normal { mean, sd } => {
                        check(mean.is_finite(), "model.noise.mean", "must be finite")?;
                        check(*sd > 0.0 && sd.is_finite(), "model.noise.sd", "must be positive")?;
                    }
                    NoiseConfig::Uniform { low, high } => {
                        check(low < high, "model.noise.high", "must exceed low")?;
                    }
                }
            }
            ModelConfig::Matrix { rows } => {
                check(!rows.is_empty(), "model.rows", "must be non-empty")?;
                check(rows.iter().all(|r| r.len() == rows.len()), "model.rows", "must be square")?;
                TransitionMatrix::from_rows(rows).map_err(|e| ConfigError::at("model.rows", e.to_string()))?;
            }
        }

        let r = &self.reward;
        let need = |v: &Option<f64>, key: &str| check(v.is_some_and(f64::is_finite), key, "required for this form");
        match r.form {
            RewardKind::Constant => need(&r.value, "reward.value")?,
            RewardKind::Linear => need(&r.slope, "reward.slope")?,
            RewardKind::Capped => need(&r.cap, "reward.cap")?,
            RewardKind::Step => {
                need(&r.threshold, "reward.threshold")?;
                need(&r.low, "reward.low")?;
                need(&r.high, "reward.high")?;
            }
            RewardKind::Table => check(
                r.values.as_ref().is_some_and(|v| !v.is_empty() && v.iter().all(|x| x.is_finite())),
                "reward.values",
                "required for this form",
            )?,
            RewardKind::Identity | RewardKind::IndicatorZero => {}
        }
        if let Some(l) = r.lipschitz_root {
            check(l >= 0.0 && l.is_finite(), "reward.lipschitz_root", "must be finite and non-negative")?;
        }

        if let Some(s) = &self.split {
            check(s.b > 0.0 && s.b.is_finite(), "split.b", "must be positive")?;
            if let Some(l) = s.lambda {
                check(l > 0.0 && l <= 1.0, "split.lambda", "must lie in (0,1]")?;
            }
            match self.phi_kind() {
                Some(PhiKind::Minorant) => check(
                    matches!(self.model, ModelConfig::Lindley { .. }),
                    "split.phi",
                    "minorant is available for the lindley family only",
                )?,
                Some(PhiKind::RowMinimum) => check(self.is_discrete(), "split.phi", "row_minimum needs a discrete model")?,
                Some(PhiKind::KernelRow) => check(s.lambda.is_some(), "split.lambda", "required with phi = kernel_row")?,
                None => return Err(ConfigError::at("split.phi", "no default for this model family")),
            }
        }

        let sv = &self.solver;
        check(sv.tol > 0.0, "solver.tol", "must be positive")?;
        check(sv.max_terms >= 1, "solver.max_terms", "must be at least 1")?;
        check(sv.cycles >= 30, "solver.cycles", "must be at least 30")?;
        check(sv.contractive_tol > 0.0, "solver.contractive_tol", "must be positive")?;
        check(sv.paths >= 2, "solver.paths", "must be at least 2")?;
        check(sv.pi_samples >= 2, "solver.pi_samples", "must be at least 2")?;
        check(sv.samples >= 1000, "solver.samples", "must be at least 1000")?;
        check(sv.horizon >= 1, "solver.horizon", "must be at least 1")?;
        check(sv.bias_horizon >= 1, "solver.bias_horizon", "must be at least 1")?;
        if let Some(g) = &sv.grid {
            let grid = parse_grid(g).ok_or_else(|| ConfigError::at("solver.grid", "expected \"lo:hi:n\""))?;
            check(grid[0] >= 0.0, "solver.grid", "states are non-negative")?;
        }
        if let Some(at) = &sv.at {
            check(
                !at.is_empty() && at.iter().all(|x| x.is_finite() && *x >= 0.0) && at.windows(2).all(|w| w[0] <= w[1]),
                "solver.at",
                "must be non-empty, non-negative and sorted",
            )?;
        }
        if let Some(top) = self.top() {
            check(sv.anchor <= top, "solver.anchor", "outside the state space")?;
        }
        Ok(())
    }

    fn is_discrete(&self) -> bool {
        self.top().is_some()
    }

    /// Largest state of a discrete model.
    pub fn top(&self) -> Option<usize> {
        match &self.model {
            ModelConfig::BirthDeath { top, .. } | ModelConfig::LindleyDiscrete { top, .. } => Some(*top),
            ModelConfig::Matrix { rows } => Some(rows.len().saturating_sub(1)),
            _ => None,
        }
    }

    fn phi_kind(&self) -> Option<PhiKind> {
        self.split.as_ref().and_then(|s| {
            s.phi.or(match self.model {
                ModelConfig::Lindley { .. } => Some(PhiKind::Minorant),
                _ if self.is_discrete() => Some(PhiKind::RowMinimum),
                _ => None,
            })
        })
    }

    /// Seed precedence: explicit value, then the config, then
    /// [`SEED_ENV`], then [`DEFAULT_SEED`].
    pub fn resolve_seed(&self, explicit: Option<u64>) -> u64 {
        explicit
            .or(self.seed)
            .or_else(|| std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()))
            .unwrap_or(DEFAULT_SEED)
    }

    pub fn build_model(&self) -> Result<Model, ConfigError> {
        let err = |e: monopoisson_core::Error| ConfigError::at("model", e.to_string());
        Ok(match &self.model {
            ModelConfig::BirthDeath { p, top } => Model::Matrix(build_birth_death(*p, *top).map_err(err)?.kernel),
            ModelConfig::Lindley { arrival, service } => Model::Lindley(build_lindley(*arrival, *service).map_err(err)?),
            ModelConfig::LindleyDiscrete { p_up, up, down, top } => {
                Model::Matrix(build_lindley_discrete(*p_up, *up, *down, *top).map_err(err)?)
            }
            ModelConfig::ReflectedAr1 { a, noise } => {
                let noise = match *noise {
                    NoiseConfig::Normal { mean, sd } => NoiseLaw::Normal { mean, sd },
                    NoiseConfig::Uniform { low, high } => NoiseLaw::Uniform { low, high },
                };
                Model::Ar1(build_reflected_ar1(*a, noise).map_err(err)?)
            }
            ModelConfig::Matrix { rows } => {
                let k = MatrixKernel::from_rows(rows).map_err(err)?;
                // keep a non-monotone matrix usable; its declaration stays false
                Model::Matrix(k.clone().certify_monotone().unwrap_or(k))
            }
        })
    }

    pub fn build_reward(&self) -> RewardFunction {
        let r = &self.reward;
        let form = match r.form {
            RewardKind::Identity => RewardForm::Identity,
            RewardKind::Constant => RewardForm::Constant(r.value.unwrap_or(0.0)),
            RewardKind::Linear => RewardForm::Linear {
                slope: r.slope.unwrap_or(1.0),
                intercept: r.intercept.unwrap_or(0.0),
            },
            RewardKind::Capped => RewardForm::Capped(r.cap.unwrap_or(f64::INFINITY)),
            RewardKind::IndicatorZero => RewardForm::IndicatorZero,
            RewardKind::Step => RewardForm::Step {
                threshold: r.threshold.unwrap_or(0.0),
                low: r.low.unwrap_or(0.0),
                high: r.high.unwrap_or(1.0),
            },
            RewardKind::Table => RewardForm::Table(r.values.clone().unwrap_or_default()),
        };
        let mut f = RewardFunction::new(form);
        if let Some(m) = r.monotone {
            f = f.with_monotone(m);
        }
        if r.lipschitz_root.is_some() {
            f = f.with_lipschitz(r.lipschitz_root);
        }
        f
    }

    pub fn build_split(&self, model: &Model) -> Result<Option<SplitConfig>, ConfigError> {
        let Some(s) = &self.split else {
            return Ok(None);
        };
        let err = |path: &'static str| move |e: monopoisson_core::Error| ConfigError::at(path, e.to_string());
        let (phi, mass): (Box<dyn Law>, Option<f64>) = match (self.phi_kind(), model) {
            (Some(PhiKind::Minorant), Model::Lindley(m)) => {
                let phi = LindleyMinorant::new(m, s.b).map_err(err("split.b"))?;
                let mass = phi.mass();
                (Box::new(phi), Some(mass))
            }
            (Some(PhiKind::RowMinimum), Model::Matrix(k)) => {
                let m = k.transition_matrix();
                let b = s.b.floor() as usize;
                let (phi, mass) = PmfLaw::row_minimum(m, b).map_err(err("split.b"))?;
                (Box::new(phi), Some(mass))
            }
            (Some(PhiKind::KernelRow), _) => (
                Box::new(KernelRowLaw::new(model.clone(), s.phi_at.unwrap_or(s.b))),
                None,
            ),
            _ => return Err(ConfigError::at("split.phi", "not available for this model family")),
        };
        let lambda = s
            .lambda
            .or(mass)
            .ok_or_else(|| ConfigError::at("split.lambda", "required"))?;
        let mut cfg = SplitConfig::new(s.b, lambda, phi)
            .map_err(err("split.lambda"))?
            .with_drift(
                DriftFunction::polynomial(s.v1.clone()),
                DriftFunction::polynomial(s.v2.clone()),
            );
        if let Some(cap) = s.cycle_cap {
            cfg = cfg.with_cycle_cap(cap);
        }
        Ok(Some(cfg))
    }

    /// The configured grid, or every state of a discrete model, or
    /// `0:10:41` for continuous ones.
    pub fn grid(&self) -> Vec<f64> {
        if let Some(g) = self.solver.grid.as_deref().and_then(parse_grid) {
            return g;
        }
        match self.top() {
            Some(top) => integer_grid(top),
            None => uniform_grid(0.0, 10.0, 41),
        }
    }
}

/// A kernel built from a config.
#[derive(Debug, Clone)]
pub enum Model {
    Matrix(MatrixKernel),
    Lindley(LindleyMm1),
    Ar1(ReflectedAr1),
}

macro_rules! delegate {
    ($self:ident, $k:ident => $e:expr) => {
        match $self {
            Model::Matrix($k) => $e,
            Model::Lindley($k) => $e,
            Model::Ar1($k) => $e,
        }
    };
}

impl TransitionKernel for Model {
    fn state_space(&self) -> StateSpace {
        delegate!(self, k => k.state_space())
    }
    fn cdf(&self, x: f64, y: f64) -> f64 {
        delegate!(self, k => k.cdf(x, y))
    }
    fn inverse_cdf(&self, x: f64, u: f64) -> f64 {
        delegate!(self, k => k.inverse_cdf(x, u))
    }
    fn matrix(&self) -> Option<&TransitionMatrix> {
        delegate!(self, k => k.matrix())
    }
    fn declared_monotone(&self) -> bool {
        delegate!(self, k => k.declared_monotone())
    }
    fn transition_density(&self, x: f64, y: f64) -> Option<f64> {
        delegate!(self, k => k.transition_density(x, y))
    }
    fn continuous_in_state(&self) -> bool {
        delegate!(self, k => k.continuous_in_state())
    }
}
