//! `mudkit` — metrics for a multi-user-diversity secondary link with a random
//! number of active users. Scenario files are JSON; results are CSV on stdout
//! or a file. Exit codes: 0 success, 2 invalid input (the message names the
//! offending field), 3 numeric non-convergence (the message names the grid
//! point).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mudkit::metrics::{BerModel, RateUnits, DEFAULT_QUAD_TOL};
use mudkit::usercount::CountFamily;

mod commands;
mod output;
mod scenario;

use scenario::{MetricKind, ScenarioDoc};

#[derive(Debug)]
pub enum CliError {
    /// Bad input: malformed file, out-of-range parameter, invalid combination.
    Spec(String),
    /// A numeric routine failed to converge.
    Numeric(String),
    /// I/O trouble.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Spec(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Spec(m) => write!(f, "invalid input: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mudkit",
    version,
    about = "Outage, ergodic capacity, and average BER of a best-user-selection \
             secondary link with a random number of active users"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonIo {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output CSV path, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a metric over a parameter grid for several count distributions.
    Sweep {
        #[command(flatten)]
        io: CommonIo,
        /// Override the sweep metric from the file.
        #[arg(long, value_enum)]
        metric: Option<MetricKind>,
        /// Override the sweep grid from the file (comma-separated values).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Monte-Carlo trials per grid point.
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Monte-Carlo base seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Worker threads for grid dispatch.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Interpretation of the transmit rate R.
        #[arg(long, value_enum)]
        rate_units: Option<RateUnitsArg>,
        /// Count slots with no active user into the BER average.
        #[arg(long)]
        include_empty_atom: bool,
    },
    /// Parse a scenario file, echo its diagnostics, exit 0 iff valid.
    Validate {
        /// Scenario file (JSON).
        scenario: PathBuf,
    },
    /// Laplace-transform order verdicts for consecutive distribution pairs.
    Ordering {
        #[command(flatten)]
        io: CommonIo,
        /// Number of z-grid points on [0, 1].
        #[arg(long, default_value_t = 1001)]
        grid_size: usize,
    },
    /// Poisson-approximation error: exact L1 distance vs the 2*sum(p^2) bound.
    Lecam {
        #[command(flatten)]
        io: CommonIo,
        /// Also compute the PB-vs-Poisson capacity gap at this SNR.
        #[arg(long)]
        capacity_gap_rho: Option<f64>,
    },
    /// Monte-Carlo run of the selection procedure.
    Mc {
        #[command(flatten)]
        io: CommonIo,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Count slots with no active user into the BER average.
        #[arg(long)]
        include_empty_atom: bool,
        /// Simulate the per-user interference test with this threshold
        /// (requires --threshold-users) instead of sampling the count law.
        #[arg(long)]
        threshold_q: Option<f64>,
        /// Number of users for threshold mode; alone, it switches a pb count
        /// to per-user Bernoulli simulation.
        #[arg(long)]
        threshold_users: Option<u64>,
        /// Interpretation of the transmit rate R.
        #[arg(long, value_enum)]
        rate_units: Option<RateUnitsArg>,
    },
    /// Asymptotic-claim diagnostics.
    Diag {
        #[command(subcommand)]
        what: DiagCommand,
    },
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Capacity scaling-law residuals and side conditions along a mean grid.
    Scaling {
        /// Count family.
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Success probability for binomial / negbinomial families.
        #[arg(long)]
        p: Option<f64>,
        /// Base probability pattern for the pb family, comma-separated.
        #[arg(long, value_delimiter = ',')]
        pattern: Option<Vec<f64>>,
        #[arg(long)]
        rho: f64,
        /// Mean grid, comma-separated, increasing, each >= 3.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Jensen gaps for a scenario, plus the tightness residual table.
    Jensen {
        #[command(flatten)]
        io: CommonIo,
        /// Mean grid for the Poisson tightness residuals.
        #[arg(long, value_delimiter = ',')]
        tightness_lambdas: Vec<f64>,
    },
    /// Regular-variation exponent estimates for the average-BER tail.
    Regvar {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
        /// Decreasing scale grid within (0, 0.1].
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-3, 1e-4, 1e-5, 1e-6])]
        u_grid: Vec<f64>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RateUnitsArg {
    Bits,
    Nats,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Exponential,
    Qform,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FamilyArg {
    Deterministic,
    Binomial,
    Negbinomial,
    Poisson,
    Pb,
}

fn quad_tol() -> Result<f64, CliError> {
    match std::env::var("MUDKIT_DEFAULT_TOL") {
        Ok(raw) => {
            let tol: f64 = raw.parse().map_err(|_| {
                CliError::Spec(format!("MUDKIT_DEFAULT_TOL must be a number, got `{raw}`"))
            })?;
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(CliError::Spec(format!(
                    "MUDKIT_DEFAULT_TOL must be positive, got {tol}"
                )));
            }
            Ok(tol)
        }
        Err(_) => Ok(DEFAULT_QUAD_TOL),
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let tol = quad_tol()?;
    match cli.command {
        Command::Sweep {
            io,
            metric,
            grid,
            trials,
            seed,
            workers,
            rate_units,
            include_empty_atom,
        } => {
            let mut doc = ScenarioDoc::load(&io.scenario)?;
            apply_rate_units(&mut doc, rate_units);
            if let (Some(points), Some(sweep)) = (grid, doc.sweep.as_mut()) {
                sweep.grid = scenario::GridSpec::Explicit(points);
            }
            let opts = commands::SweepOptions {
                metric,
                trials,
                seed,
                workers,
                include_empty_atom,
                tol,
            };
            commands::sweep(&doc, &opts, &io.out)
        }
        Command::Validate { scenario } => commands::validate(&scenario),
        Command::Ordering { io, grid_size } => {
            let doc = ScenarioDoc::load(&io.scenario)?;
            commands::ordering(&doc, grid_size, &io.out)
        }
        Command::Lecam {
            io,
            capacity_gap_rho,
        } => {
            let doc = ScenarioDoc::load(&io.scenario)?;
            commands::lecam(&doc, capacity_gap_rho, tol, &io.out)
        }
        Command::Mc {
            io,
            trials,
            seed,
            workers,
            include_empty_atom,
            threshold_q,
            threshold_users,
            rate_units,
        } => {
            let mut doc = ScenarioDoc::load(&io.scenario)?;
            apply_rate_units(&mut doc, rate_units);
            let opts = commands::McOptions {
                trials,
                seed,
                workers,
                include_empty_atom,
                threshold_q,
                threshold_users,
            };
            commands::mc(&doc, &opts, &io.out)
        }
        Command::Diag { what } => match what {
            DiagCommand::Scaling {
                family,
                p,
                pattern,
                rho,
                lambdas,
                out,
            } => {
                let family = resolve_family(family, p, pattern)?;
                commands::diag_scaling(&family, rho, &lambdas, tol, &out)
            }
            DiagCommand::Jensen {
                io,
                tightness_lambdas,
            } => {
                let doc = ScenarioDoc::load(&io.scenario)?;
                commands::diag_jensen(&doc, &tightness_lambdas, tol, &io.out)
            }
            DiagCommand::Regvar {
                model,
                rho,
                eta,
                kappa,
                u_grid,
                out,
            } => {
                let model = match model {
                    ModelArg::Exponential => BerModel::Exponential,
                    ModelArg::Qform => BerModel::QForm,
                };
                commands::diag_regvar(model, rho, eta, kappa, &u_grid, &out)
            }
        },
    }
}

fn apply_rate_units(doc: &mut ScenarioDoc, units: Option<RateUnitsArg>) {
    if let (Some(units), Some(s)) = (units, doc.scenario.as_mut()) {
        s.rate_units = match units {
            RateUnitsArg::Bits => RateUnits::Bits,
            RateUnitsArg::Nats => RateUnits::Nats,
        };
    }
}

fn resolve_family(
    family: FamilyArg,
    p: Option<f64>,
    pattern: Option<Vec<f64>>,
) -> Result<CountFamily, CliError> {
    let need_p = || p.ok_or_else(|| CliError::Spec("this family requires `--p`".into()));
    Ok(match family {
        FamilyArg::Deterministic => CountFamily::Deterministic,
        FamilyArg::Binomial => CountFamily::Binomial { p: need_p()? },
        FamilyArg::Negbinomial => CountFamily::NegBinomial { p: need_p()? },
        FamilyArg::Poisson => CountFamily::Poisson,
        FamilyArg::Pb => CountFamily::PoissonBinomial {
            pattern: pattern
                .ok_or_else(|| CliError::Spec("the pb family requires `--pattern`".into()))?,
        },
    })
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mudkit: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
