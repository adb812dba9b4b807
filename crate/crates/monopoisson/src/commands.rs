//! Subcommand implementations. Each returns CSV text plus whether every
//! certification it ran passed; the binary maps that to the exit code.

use monopoisson_core::contractive::{
    certify_lipschitz, estimate_contraction_factor, estimate_second_moment, solve_contractive,
    ContractiveOptions, ContractiveParams, ContractiveSolution, LipschitzCertificate,
};
use monopoisson_core::coupling::{check_order_preservation, simulate_coupled};
use monopoisson_core::diagnostics::{monotone_within_ci, StatReport, SE_MULTIPLIER};
use monopoisson_core::discrete::{
    certify_monotone, solve_linear, solve_regenerative, solve_series, PoissonSolution,
};
use monopoisson_core::kernel::{check_stochastic_monotonicity, validate_kernel};
use monopoisson_core::split::{verify_assumption1, Condition, SplitChain};
use monopoisson_core::{Error, RewardFunction, Tolerances, TransitionKernel, UniformStream, MONOTONE_SLACK};

use crate::config::{ConfigError, Model, RunConfig, SolveMethod};
use crate::report::{real, reports_to_csv, to_csv};

/// Largest acceptable Poisson residual for an exact solve.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// States used by `estimate` when neither the flag nor the config gives any.
pub const DEFAULT_ESTIMATE_STATES: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

impl AppError {
    /// 1 for numerical or certification failures, 2 for usage and config
    /// problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(Error::InvalidArgument(_) | Error::UnstableModel { .. }) => 2,
            AppError::Core(_) => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Io(_) => "io",
            AppError::Csv(_) => "csv",
            AppError::Usage(_) => "usage",
            AppError::Core(e) => match e {
                Error::InvalidArgument(_) => "invalid_argument",
                Error::UnstableModel { .. } => "unstable_model",
                Error::NotContractive { .. } => "not_contractive",
                Error::NoUniqueStationary(_) => "no_unique_stationary",
                Error::SolverFailure { .. } => "solver_failure",
                Error::SeriesDiverged { .. } => "series_diverged",
                Error::SeriesBudgetExceeded { .. } => "series_budget_exceeded",
                Error::CertificationFailed { .. } => "certification_failed",
                Error::MinorizationUnsupported { .. } => "minorization_unsupported",
                Error::MinorizationViolated { .. } => "minorization_violated",
                Error::CycleOverflow { .. } => "cycle_overflow",
            },
        }
    }

    /// Single tab-separated line for standard error.
    pub fn machine_line(&self) -> String {
        let path = match self {
            AppError::Config(c) => c.path.as_str(),
            _ => "",
        };
        format!(
            "error\tkind={}\tpath={}\tmessage={}",
            self.kind(),
            path,
            self.to_string().replace(['\n', '\t'], " ")
        )
    }
}

pub type AppResult<T> = Result<T, AppError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub certified: bool,
}

/// Exact discrete solution, anchored at `anchor`.
pub fn solve_exact(
    model: &Model,
    r: &RewardFunction,
    method: SolveMethod,
    anchor: usize,
    tol: f64,
    max_terms: usize,
) -> AppResult<PoissonSolution> {
    if model.matrix().is_none() {
        return Err(AppError::Usage("solve needs a discrete model".into()));
    }
    Ok(match method {
        SolveMethod::Linear => solve_linear(model, r, anchor)?,
        SolveMethod::Regenerative => solve_regenerative(model, r, anchor)?,
        SolveMethod::Series => solve_series(model, r, tol, max_terms)?.anchored(anchor),
    })
}

pub fn solve(cfg: &RunConfig, method: Option<SolveMethod>, anchor: Option<usize>) -> AppResult<Outcome> {
    let model = cfg.build_model()?;
    let r = cfg.build_reward();
    let anchor = anchor.unwrap_or(cfg.solver.anchor);
    let sol = solve_exact(
        &model,
        &r,
        method.unwrap_or(cfg.solver.method),
        anchor,
        cfg.solver.tol,
        cfg.solver.max_terms,
    )?;
    let mut certified = sol.residual_sup.is_some_and(|v| v <= RESIDUAL_TOL);
    if model.declared_monotone() && r.monotone() {
        certified &= certify_monotone(&sol).is_ok();
    }
    let csv = to_csv(
        &["x", "g"],
        sol.grid.iter().zip(&sol.g).map(|(x, g)| vec![real(*x), real(*g)]),
    )?;
    Ok(Outcome { csv, certified })
}

pub fn estimate(cfg: &RunConfig, cycles: Option<usize>, at: Option<Vec<f64>>) -> AppResult<Outcome> {
    let model = cfg.build_model()?;
    let r = cfg.build_reward();
    let split = cfg
        .build_split(&model)?
        .ok_or_else(|| AppError::Usage("estimate needs a [split] section".into()))?;
    let xs = at
        .or_else(|| cfg.solver.at.clone())
        .unwrap_or_else(|| DEFAULT_ESTIMATE_STATES.to_vec());
    let cycles = cycles.unwrap_or(cfg.solver.cycles);
    let stream = UniformStream::new(cfg.resolve_seed(None));
    let chain = SplitChain::new(&split, &model);
    let pi = chain.estimate_pi_r(&r, cycles, &stream.substream(0))?;
    let sol = chain.estimate_g(&r, pi.estimate, &xs, cycles, &stream.substream(1))?;
    let certified = !(model.declared_monotone() && r.monotone()) || monotone_within_ci(&sol).is_ok();
    let se = sol.standard_error.clone().unwrap_or_default();
    let csv = to_csv(
        &["x", "g", "standard_error", "pi_r", "pi_r_standard_error"],
        sol.grid.iter().zip(&sol.g).zip(&se).map(|((x, g), s)| {
            vec![real(*x), real(*g), real(*s), real(pi.estimate), real(pi.standard_error)]
        }),
    )?;
    Ok(Outcome { csv, certified })
}

/// Pairs used to estimate the contraction factor: adjacent grid points and
/// one pair far from the boundary.
pub fn contraction_pairs(grid: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[0], w[1])).collect();
    let far = 10.0 * grid.last().copied().unwrap_or(0.0).max(1.0) + 50.0;
    pairs.push((far, far + 10.0));
    pairs
}

#[derive(Debug, Clone)]
pub struct ContractiveRun {
    pub params: ContractiveParams,
    pub solution: ContractiveSolution,
    pub certificate: Result<LipschitzCertificate, Error>,
}

pub fn run_contractive(
    model: &Model,
    r: &RewardFunction,
    grid: &[f64],
    opts: &ContractiveOptions,
    samples: usize,
    stream: &UniformStream,
) -> AppResult<ContractiveRun> {
    let c_root = r
        .lipschitz_root_constant()
        .ok_or_else(|| AppError::Usage("contractive needs a Lipschitz reward".into()))?;
    let est = estimate_contraction_factor(model, &contraction_pairs(grid), samples, &stream.substream(0))?;
    let m2 = estimate_second_moment(model, grid, samples, &stream.substream(1))?;
    let params = ContractiveParams::from_estimate(&est, c_root, m2)?;
    let solution = solve_contractive(model, r, &params, grid, opts, &stream.substream(2))?;
    let certificate = certify_lipschitz(&solution.solution, &params);
    Ok(ContractiveRun {
        params,
        solution,
        certificate,
    })
}

pub fn contractive(cfg: &RunConfig, tol: Option<f64>, grid: Option<Vec<f64>>) -> AppResult<Outcome> {
    let model = cfg.build_model()?;
    let r = cfg.build_reward();
    let grid = grid.unwrap_or_else(|| cfg.grid());
    let opts = ContractiveOptions {
        tol: tol.unwrap_or(cfg.solver.contractive_tol),
        n_paths: cfg.solver.paths,
        n_pi_samples: cfg.solver.pi_samples,
        term_cap: cfg.solver.max_terms,
    };
    let run = run_contractive(&model, &r, &grid, &opts, cfg.solver.samples, &UniformStream::new(cfg.resolve_seed(None)))?;
    let sol = &run.solution.solution;
    let se = sol.standard_error.clone().unwrap_or_default();
    let csv = to_csv(
        &["x", "g", "ci_halfwidth"],
        sol.grid
            .iter()
            .zip(&sol.g)
            .zip(&se)
            .map(|((x, g), s)| vec![real(*x), real(*g), real(SE_MULTIPLIER * s)]),
    )?;
    Ok(Outcome {
        csv,
        certified: run.certificate.is_ok(),
    })
}

pub fn simulate(cfg: &RunConfig, from: Vec<f64>, steps: usize, seed: Option<u64>) -> AppResult<Outcome> {
    let model = cfg.build_model()?;
    let mut from = from;
    from.sort_by(f64::total_cmp);
    let paths = simulate_coupled(&model, &from, steps, cfg.resolve_seed(seed))?;
    let certified = check_order_preservation(&paths, MONOTONE_SLACK).holds() || !model.declared_monotone();
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((0..from.len()).map(|i| format!("path{i}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let csv = to_csv(
        &header,
        (0..=steps).map(|t| {
            std::iter::once(t.to_string())
                .chain(paths.paths.iter().map(|p| real(p[t])))
                .collect::<Vec<_>>()
        }),
    )?;
    Ok(Outcome { csv, certified })
}

/// Kernel validation, monotonicity, reward declarations and, with a
/// `[split]` section, the minorization/drift conditions.
pub fn validation_reports(cfg: &RunConfig) -> AppResult<Vec<StatReport>> {
    let model = cfg.build_model()?;
    let r = cfg.build_reward();
    let grid = cfg.grid();
    let seed = cfg.resolve_seed(None);
    let mut out = Vec::new();
    let v = validate_kernel(&model, &grid, &Tolerances::default())?;
    out.push(StatReport::new("kernel_validation", v.issues.len() as f64, 0.0, v.passed, grid.len()));
    let m = check_stochastic_monotonicity(&model, &grid, MONOTONE_SLACK)?;
    out.push(StatReport::new(
        "stochastic_monotonicity",
        m.worst.map_or(0.0, |w| w.excess),
        MONOTONE_SLACK,
        m.monotone,
        grid.len(),
    ));
    let decl = r.check_declarations(&grid);
    out.push(StatReport::new("reward_declarations", 0.0, 0.0, decl.is_ok(), grid.len()));
    if let Some(split) = cfg.build_split(&model)? {
        let rep = verify_assumption1(&split, &model, &r, &grid, cfg.solver.samples, &UniformStream::new(seed))?;
        for c in &rep.checks {
            // drift statistics are margins that must clear two SEs; the
            // boundedness ones are suprema that must be finite
            let (name, threshold) = match c.condition {
                Condition::BoundedDrift => ("split_bounded_drift", f64::INFINITY),
                Condition::BoundedReward => ("split_bounded_reward", f64::INFINITY),
                Condition::DriftV1 => ("split_drift_v1", 2.0 * c.standard_error),
                Condition::DriftV2 => ("split_drift_v2", 2.0 * c.standard_error),
                Condition::Minorization => ("split_minorization", 0.0),
            };
            out.push(StatReport::new(name, c.statistic, threshold, c.passed, grid.len()).with_seed(seed));
        }
    }
    Ok(out)
}

pub fn validate(cfg: &RunConfig) -> AppResult<Outcome> {
    let reports = validation_reports(cfg)?;
    Ok(Outcome {
        certified: reports.iter().all(|r| r.passed),
        csv: reports_to_csv(&reports)?,
    })
}

pub fn check(cfg: &RunConfig) -> AppResult<Outcome> {
    let reports = crate::check::run_check(cfg)?;
    Ok(Outcome {
        certified: reports.iter().all(|r| r.passed),
        csv: reports_to_csv(&reports)?,
    })
}
