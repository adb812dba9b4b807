//! The `check` suite: every statistical and exact certification that applies
//! to one config, as a list of [`StatReport`]s.
//!
//! All randomness flows from the resolved seed through fixed substreams, so
//! the report is a pure function of the config.

use monopoisson_core::contractive::{crn_pathwise_differences, ContractiveOptions};
use monopoisson_core::coupling::{check_order_preservation, simulate_backward, simulate_coupled, simulate_forward};
use monopoisson_core::diagnostics::{
    binomial_check, ks_one_sample, ks_two_sample, martingale_mc_check, mean_and_se, monotone_within_ci,
    tav_constant, StatReport, SE_MULTIPLIER,
};
use monopoisson_core::discrete::{
    bias_expansion_check, certify_monotone, martingale_drift_check, solve_linear, solve_regenerative,
    solve_series,
};
use monopoisson_core::kernel::stationary_distribution;
use monopoisson_core::split::{CycleStart, SplitChain, SplitConfig};
use monopoisson_core::{RewardForm, RewardFunction, TransitionKernel, UniformStream, MONOTONE_SLACK};

use crate::commands::{run_contractive, validation_reports, AppResult, DEFAULT_ESTIMATE_STATES, RESIDUAL_TOL};
use crate::config::{Model, RunConfig};

/// Level of every KS and binomial test.
pub const ALPHA: f64 = 0.01;
/// Agreement required between exact solution routes after anchoring.
pub const ROUTE_AGREEMENT: f64 = 1e-6;
/// Allowed gap in the finite-horizon bias expansion.
pub const BIAS_TOL: f64 = 1e-6;
/// Forward steps before comparing against the stationary law.
pub const BURN_IN: usize = 200;
pub const KS_HORIZON: usize = 50;
/// Paths in the martingale ensemble.
pub const MARTINGALE_PATHS: usize = 1000;
/// Each time index is tested at 3 SE on its own, so a long horizon would
/// inflate the false-alarm rate.
pub const MARTINGALE_HORIZON: usize = 10;

// substream keys, one per check family
const KEY_COUPLING: u64 = 1;
const KEY_FORWARD: u64 = 2;
const KEY_BACKWARD: u64 = 3;
const KEY_MARTINGALE: u64 = 4;
const KEY_SPLIT: u64 = 5;
const KEY_CONTRACTIVE: u64 = 6;
const KEY_STATIONARY: u64 = 7;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    model: Model,
    r: RewardFunction,
    grid: Vec<f64>,
    seed: u64,
    stream: UniformStream,
    out: Vec<StatReport>,
}

impl Ctx<'_> {
    fn push(&mut self, rep: StatReport) {
        self.out.push(rep.with_seed(self.seed));
    }

    /// Derives a `u64` seed for the seed-addressed coupling helpers.
    fn seed_for(&self, key: u64, i: u64) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(key << 40)
            .wrapping_add(i)
    }
}

/// Runs the suite for `cfg`.
pub fn run_check(cfg: &RunConfig) -> AppResult<Vec<StatReport>> {
    let seed = cfg.resolve_seed(None);
    let mut ctx = Ctx {
        cfg,
        model: cfg.build_model()?,
        r: cfg.build_reward(),
        grid: cfg.grid(),
        seed,
        stream: UniformStream::new(seed),
        out: Vec::new(),
    };
    for rep in validation_reports(cfg)? {
        ctx.push(rep);
    }
    coupling_order(&mut ctx)?;
    if ctx.model.matrix().is_some() {
        exact_routes(&mut ctx)?;
    } else {
        forward_backward(&mut ctx)?;
    }
    if let Model::Lindley(m) = &ctx.model {
        let m = *m;
        let samples: Vec<f64> = (0..cfg.solver.samples as u64)
            .map(|i| simulate_forward(&ctx.model, 0.0, BURN_IN, ctx.seed_for(KEY_STATIONARY, i)))
            .collect();
        let rep = ks_one_sample(&samples, |w| m.stationary_cdf(w), ALPHA)?;
        ctx.push(StatReport { name: "ks_stationary_law".into(), ..rep });
    }
    if let Model::Ar1(_) = &ctx.model {
        contractive_checks(&mut ctx)?;
    }
    if let Some(split) = cfg.build_split(&ctx.model)? {
        split_checks(&mut ctx, &split)?;
    }
    Ok(ctx.out)
}

fn coupling_order(ctx: &mut Ctx<'_>) -> AppResult<()> {
    let hi = *ctx.grid.last().expect("grids are non-empty");
    let xs = [0.0, (hi / 4.0).floor(), (hi / 2.0).floor(), hi];
    let n = ctx.cfg.solver.samples;
    let mut violations = 0usize;
    for i in 0..n as u64 {
        let paths = simulate_coupled(&ctx.model, &xs, ctx.cfg.solver.horizon, ctx.seed_for(KEY_COUPLING, i))?;
        violations += check_order_preservation(&paths, MONOTONE_SLACK).violations;
    }
    let ok = violations == 0 || !ctx.model.declared_monotone();
    ctx.push(StatReport::new("coupling_order_violations", violations as f64, 0.0, ok, n));
    Ok(())
}

fn exact_routes(ctx: &mut Ctx<'_>) -> AppResult<()> {
    let (model, r) = (&ctx.model, &ctx.r);
    let anchor = ctx.cfg.solver.anchor;
    let lin = solve_linear(model, r, anchor)?;
    let regen = solve_regenerative(model, r, anchor)?;
    let series = solve_series(model, r, ctx.cfg.solver.tol, ctx.cfg.solver.max_terms)?;
    let dim = lin.g.len();
    let mut reps = vec![
        StatReport::at_most("residual_linear", lin.residual_sup.unwrap_or(f64::NAN), RESIDUAL_TOL, dim),
        StatReport::at_most("residual_regenerative", regen.residual_sup.unwrap_or(f64::NAN), RESIDUAL_TOL, dim),
        StatReport::at_most("residual_series", series.residual_sup.unwrap_or(f64::NAN), RESIDUAL_TOL, dim),
        StatReport::at_most("agreement_regenerative", regen.sup_deviation(&lin, anchor), ROUTE_AGREEMENT, dim),
        StatReport::at_most("agreement_series", series.sup_deviation(&lin, anchor), ROUTE_AGREEMENT, dim),
    ];
    if model.declared_monotone() && r.monotone() {
        let (stat, ok) = match certify_monotone(&lin) {
            Ok(c) => (-c.min_increment, true),
            Err(monopoisson_core::Error::CertificationFailed { value, .. }) => (-value, false),
            Err(e) => return Err(e.into()),
        };
        reps.push(StatReport::new("monotone_certificate", stat, 1e-10, ok, dim));
    }
    let horizon = ctx.cfg.solver.bias_horizon;
    let gap = (0..dim)
        .map(|x| bias_expansion_check(model, r, &lin, x, horizon).map(|b| b.gap))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    reps.push(StatReport::at_most(format!("bias_expansion_n{horizon}"), gap, BIAS_TOL, dim));

    let mut increments = Vec::with_capacity(MARTINGALE_PATHS);
    let mut drift = 0.0f64;
    for i in 0..MARTINGALE_PATHS as u64 {
        let paths = simulate_coupled(model, &[anchor as f64], MARTINGALE_HORIZON, ctx.seed_for(KEY_MARTINGALE, i))?;
        for t in martingale_drift_check(model, r, &lin, &paths)? {
            drift = drift.max(t.max_abs_drift());
            increments.push(t.increments);
        }
    }
    reps.push(StatReport::at_most("martingale_exact_drift", drift, RESIDUAL_TOL, MARTINGALE_PATHS));
    let mc = martingale_mc_check(&increments)?;
    reps.push(mc);
    let sigma2 = tav_constant(model, &lin)?;
    reps.push(StatReport::new("tav_constant", sigma2, 0.0, sigma2.is_finite() && sigma2 >= 0.0, dim));
    for rep in reps {
        ctx.push(rep);
    }
    Ok(())
}

fn forward_backward(ctx: &mut Ctx<'_>) -> AppResult<()> {
    let n = ctx.cfg.solver.samples as u64;
    let x = 1.0;
    let fwd: Vec<f64> = (0..n)
        .map(|i| simulate_forward(&ctx.model, x, KS_HORIZON, ctx.seed_for(KEY_FORWARD, i)))
        .collect();
    let bwd: Vec<f64> = (0..n)
        .map(|i| simulate_backward(&ctx.model, x, KS_HORIZON, ctx.seed_for(KEY_BACKWARD, i)))
        .collect();
    let rep = ks_two_sample(&fwd, &bwd, ALPHA)?;
    ctx.push(StatReport { name: "ks_forward_backward".into(), ..rep });
    Ok(())
}

fn contractive_checks(ctx: &mut Ctx<'_>) -> AppResult<()> {
    let sv = &ctx.cfg.solver;
    let opts = ContractiveOptions {
        tol: sv.contractive_tol,
        n_paths: sv.paths,
        n_pi_samples: sv.pi_samples,
        term_cap: sv.max_terms,
    };
    let stream = ctx.stream.substream(KEY_CONTRACTIVE);
    let run = run_contractive(&ctx.model, &ctx.r, &ctx.grid, &opts, sv.samples, &stream)?;
    let n = ctx.grid.len();
    let mut reps = vec![StatReport::new(
        "contraction_factor",
        run.params.rho,
        1.0,
        run.params.rho < 1.0,
        sv.samples,
    )];
    let bound = run.params.lipschitz_bound();
    reps.push(match &run.certificate {
        Ok(c) => StatReport::new("lipschitz_certificate", c.max_ratio, bound, true, n),
        Err(monopoisson_core::Error::CertificationFailed { value, .. }) => {
            StatReport::new("lipschitz_certificate", *value, bound, false, n)
        }
        Err(e) => return Err(e.clone().into()),
    });
    if ctx.model.declared_monotone() && ctx.r.monotone() {
        reps.push(StatReport::new(
            "contractive_monotone_ci",
            0.0,
            0.0,
            monotone_within_ci(&run.solution.solution).is_ok(),
            sv.paths,
        ));
        let crn = stream.substream(3);
        let mut negative = 0usize;
        let per_pair = 1000;
        for (i, w) in ctx.grid.windows(2).enumerate() {
            let d = crn_pathwise_differences(&ctx.model, &ctx.r, w[0], w[1], run.solution.terms, per_pair, &crn.substream(i as u64));
            negative += d.iter().filter(|&&v| v < 0.0).count();
        }
        reps.push(StatReport::new(
            "crn_pathwise_negative",
            negative as f64,
            0.0,
            negative == 0,
            per_pair * (n - 1),
        ));
    }
    for rep in reps {
        ctx.push(rep);
    }
    Ok(())
}

fn split_checks(ctx: &mut Ctx<'_>, split: &SplitConfig) -> AppResult<()> {
    let stream = ctx.stream.substream(KEY_SPLIT);
    let chain = SplitChain::new(split, &ctx.model);
    let n = ctx.cfg.solver.cycles;
    let lambda = split.lambda();
    let mut reps = Vec::new();

    let mut visits = Vec::with_capacity(n);
    let cycles_stream = stream.substream(0);
    for i in 0..n as u64 {
        let c = chain.simulate_cycle(CycleStart::Phi, &mut cycles_stream.substream(i))?;
        visits.push(c.small_set_visits as f64);
    }
    let (mean, se) = mean_and_se(&visits);
    let z = z_score(mean, se, 1.0 / lambda);
    reps.push(StatReport::at_most("split_visits_per_cycle", z, SE_MULTIPLIER, n));
    for k in 1..=5u32 {
        let hits = visits.iter().filter(|&&v| v >= (k + 1) as f64).count() as u64;
        let rep = binomial_check(hits, n as u64, (1.0 - lambda).powi(k as i32), ALPHA)?;
        reps.push(StatReport { name: format!("split_tail_k{k}"), ..rep });
    }

    let exact_pi_r = match (&ctx.model, ctx.r.form()) {
        (Model::Lindley(m), RewardForm::Identity) => Some(m.stationary_mean()),
        (Model::Matrix(_), _) => {
            let pi = stationary_distribution(&ctx.model)?;
            Some(pi.iter().enumerate().map(|(x, p)| p * ctx.r.eval(x as f64)).sum())
        }
        _ => None,
    };
    let pi = chain.estimate_pi_r(&ctx.r, n, &stream.substream(1))?;
    if let Some(target) = exact_pi_r {
        let z = z_score(pi.estimate, pi.standard_error, target);
        reps.push(StatReport::at_most("split_pi_r", z, SE_MULTIPLIER, n));
    }

    if ctx.model.declared_monotone() {
        let coupled = stream.substream(2);
        let indep = stream.substream(3);
        let (x, y) = (0.5 * split.b(), 2.0 * split.b() + 1.0);
        let mut order = 0usize;
        let mut tau_lower = Vec::with_capacity(n);
        let mut tau_indep = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let c = chain.simulate_coupled_cycle(x, y, &mut coupled.substream(i))?;
            order += usize::from(!c.order_held);
            tau_lower.push(c.tau_lower as f64);
            let c = chain.simulate_cycle(CycleStart::State(x), &mut indep.substream(i))?;
            tau_indep.push(c.tau as f64);
        }
        reps.push(StatReport::new("coupled_cycle_order", order as f64, 0.0, order == 0, n));
        let ks = ks_two_sample(&tau_lower, &tau_indep, ALPHA)?;
        reps.push(StatReport { name: "coupled_cycle_lower_law".into(), ..ks });
        reps.push(StatReport::new("coupled_rn_clamps", chain.clamp_events() as f64, 0.0, chain.clamp_events() == 0, n));

        if ctx.r.monotone() {
            let xs: Vec<f64> = match ctx.cfg.solver.at.clone() {
                Some(at) => at,
                None => DEFAULT_ESTIMATE_STATES.to_vec(),
            };
            let sol = chain.estimate_g(&ctx.r, pi.estimate, &xs, n, &stream.substream(4))?;
            let ok = monotone_within_ci(&sol);
            reps.push(StatReport::new(
                "estimate_g_monotone_ci",
                ok.err().map_or(0.0, |i| xs[i]),
                0.0,
                ok.is_ok(),
                n,
            ));
        }
    }
    for rep in reps {
        ctx.push(rep);
    }
    Ok(())
}

fn z_score(mean: f64, se: f64, target: f64) -> f64 {
    let dev = (mean - target).abs();
    if se > 0.0 {
        dev / se
    } else if dev <= 1e-12 * target.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}
