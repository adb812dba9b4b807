use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monopoisson::commands::{self, AppError, Outcome};
use monopoisson::config::{parse_config, parse_grid, RunConfig, SolveMethod};

/// Poisson-equation solvers for stochastically monotone Markov chains.
#[derive(Debug, Parser)]
#[command(name = "monopoisson", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Write CSV here instead of standard output (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Regenerative,
    Series,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact solution on a discrete model.
    Solve {
        #[command(flatten)]
        common: Common,
        /// State whose g value is pinned to zero.
        #[arg(long)]
        anchor: Option<usize>,
        /// Solution route.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Regenerative Monte Carlo estimate of g at chosen states.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Regeneration cycles per state.
        #[arg(long)]
        cycles: Option<usize>,
        /// Comma-separated states, e.g. 0,1,2,4,8.
        #[arg(long, value_delimiter = ',')]
        at: Option<Vec<f64>>,
    },
    /// Truncated-series solution for chains contractive on average.
    Contractive {
        #[command(flatten)]
        common: Common,
        /// Target truncation error.
        #[arg(long)]
        tol: Option<f64>,
        /// Grid as lo:hi:n.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Coupled paths from several initial states.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated initial states.
        #[arg(long, value_delimiter = ',', required = true)]
        from: Vec<f64>,
        /// Number of steps.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Full certification suite; one line per test.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Kernel, reward and minorization checks.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<RunConfig, AppError> {
    let text = std::fs::read_to_string(&common.config)?;
    Ok(parse_config(&text)?)
}

fn run(cli: Cli) -> Result<(Outcome, Option<PathBuf>), AppError> {
    let (common, outcome) = match cli.command {
        Command::Solve { common, anchor, method } => {
            let cfg = load(&common)?;
            let method = method.map(|m| match m {
                MethodArg::Linear => SolveMethod::Linear,
                MethodArg::Regenerative => SolveMethod::Regenerative,
                MethodArg::Series => SolveMethod::Series,
            });
            let out = commands::solve(&cfg, method, anchor)?;
            (common, (out, cfg.output))
        }
        Command::Estimate { common, cycles, at } => {
            let cfg = load(&common)?;
            let out = commands::estimate(&cfg, cycles, at)?;
            (common, (out, cfg.output))
        }
        Command::Contractive { common, tol, grid } => {
            let cfg = load(&common)?;
            let grid = grid
                .map(|g| parse_grid(&g).ok_or_else(|| AppError::Usage(format!("bad --grid {g:?}, expected lo:hi:n"))))
                .transpose()?;
            let out = commands::contractive(&cfg, tol, grid)?;
            (common, (out, cfg.output))
        }
        Command::Simulate { common, from, steps, seed } => {
            let cfg = load(&common)?;
            let out = commands::simulate(&cfg, from, steps, seed)?;
            (common, (out, cfg.output))
        }
        Command::Check { common } => {
            let cfg = load(&common)?;
            let out = commands::check(&cfg)?;
            (common, (out, cfg.output))
        }
        Command::Validate { common } => {
            let cfg = load(&common)?;
            let out = commands::validate(&cfg)?;
            (common, (out, cfg.output))
        }
    };
    let (outcome, cfg_out) = outcome;
    Ok((outcome, common.out.or(cfg_out.map(PathBuf::from))))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).and_then(|(outcome, path)| {
        match path {
            Some(p) => std::fs::write(p, &outcome.csv)?,
            None => print!("{}", outcome.csv),
        }
        Ok(outcome.certified)
    }) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error\tkind=certification\tpath=\tmessage=one or more certifications failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
