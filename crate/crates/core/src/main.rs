use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use privlqr::harness::{
    monte_carlo_regret, run_sweep, validate, write_sweep_csv, Experiment, ExperimentConfig, Method, Solved,
    VALIDATION_TRIALS,
};
use privlqr::{forecast::generate_arima, rng, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NONCONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(version, about = "Incentive and forecast-combination allocation for privacy-noised LQR control")]
struct Cli {
    /// Override the config's base_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo trials; results do not depend on it.
    #[arg(long, global = true, default_value_t = default_workers())]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON experiment config. Defaults to the bundled ARIMA setup.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Acs,
    Uniform,
    Both,
}

impl MethodArg {
    fn methods(self) -> &'static [Method] {
        match self {
            MethodArg::Acs => &[Method::Acs],
            MethodArg::Uniform => &[Method::Uniform],
            MethodArg::Both => &Method::ALL,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the allocation for one total incentive.
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        rho_total: f64,
        #[arg(long, value_enum, default_value = "acs")]
        method: MethodArg,
    },
    /// Solve and simulate every sweep point, writing one CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Monte Carlo regret statistics for one total incentive.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        rho_total: f64,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
    },
    /// Check every invariant on the configured instance.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = VALIDATION_TRIALS)]
        trials: usize,
    },
    /// Write the generated ground-truth series as headerless CSV.
    Series {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Failures mapped to exit statuses.
enum Failure {
    Config(Error),
    Run(Error),
    Validation,
    NonConvergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn load(arg: &ConfigArg, seed: Option<u64>) -> Result<Experiment, Failure> {
    let mut cfg = match &arg.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default_arima()),
    }
    .map_err(Failure::Config)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    Experiment::build(&cfg).map_err(Failure::Config)
}

fn check_rho(rho: f64) -> Result<(), Failure> {
    if rho.is_finite() && rho >= 0.0 {
        Ok(())
    } else {
        Err(Failure::Config(Error::Config(format!("--rho-total must be >= 0, got {rho}"))))
    }
}

fn print_solved(out: &mut impl Write, s: &Solved) -> io::Result<()> {
    writeln!(out, "method            {}", s.method)?;
    writeln!(out, "rho_total         {}", s.rho_total)?;
    writeln!(out, "expected_regret   {:.10e}", s.expected_regret)?;
    writeln!(out, "iterations        {}", s.iterations)?;
    writeln!(out, "converged         {}", s.converged)?;
    let means = s.allocation.mean_coefficients();
    writeln!(out, "src  rho_i          mean_c_i       c_i")?;
    for (i, (rho, c)) in s.allocation.incentives.iter().zip(&s.allocation.coeffs).enumerate() {
        let coeffs: Vec<String> = c.iter().map(|x| format!("{x:.4}")).collect();
        writeln!(out, "{i:<4} {rho:<14.6e} {:<14.6e} [{}]", means[i], coeffs.join(", "))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let workers = cli.workers.max(1);
    match cli.command {
        Command::Solve {
            config,
            rho_total,
            method,
        } => {
            check_rho(rho_total)?;
            let exp = load(&config, cli.seed)?;
            let mut stalled = Vec::new();
            for (k, &m) in method.methods().iter().enumerate() {
                let s = exp.solve(rho_total, m)?;
                if k > 0 {
                    writeln!(out)?;
                }
                print_solved(&mut out, &s)?;
                if !s.converged {
                    stalled.push(format!("{m} at rho_total={rho_total}"));
                }
            }
            if !stalled.is_empty() {
                return Err(Failure::NonConvergence(stalled.join(", ")));
            }
        }
        Command::Sweep { config, out: path, trials } => {
            let mut exp = load(&config, cli.seed)?;
            if let Some(t) = trials {
                if t == 0 {
                    return Err(Failure::Config(Error::Config("--trials must be >= 1".into())));
                }
                exp.config.trials = t;
            }
            let results = run_sweep(&exp, exp.config.base_seed, workers)?;
            let file = File::create(&path)?;
            write_sweep_csv(BufWriter::new(file), &results)?;

            let mut err = io::stderr().lock();
            writeln!(err, "{:>8} {:>8} {:>14} {:>14} {:>8} {:>8}", "rho", "method", "expected", "mean", "z", "ratio")?;
            let mut stalled = Vec::new();
            for pair in results.chunks(2) {
                let ratio = pair[1].expected_regret / pair[0].expected_regret;
                for r in pair {
                    let flag = if r.within_band() { "" } else { "  outside 3-SE band" };
                    let ratio = if r.method == Method::Acs { format!("{ratio:.3}") } else { String::new() };
                    writeln!(
                        err,
                        "{:>8} {:>8} {:>14.6e} {:>14.6e} {:>8.2} {:>8}{flag}",
                        r.rho_total,
                        r.method.to_string(),
                        r.expected_regret,
                        r.empirical.mean,
                        r.z_score(),
                        ratio
                    )?;
                    if !r.converged {
                        stalled.push(format!("{} at rho_total={}", r.method, r.rho_total));
                    }
                }
            }
            writeln!(err, "wrote {}", path.display())?;
            if !stalled.is_empty() {
                return Err(Failure::NonConvergence(stalled.join(", ")));
            }
        }
        Command::Simulate {
            config,
            rho_total,
            trials,
            method,
        } => {
            check_rho(rho_total)?;
            let exp = load(&config, cli.seed)?;
            let trials = trials.unwrap_or(exp.config.trials);
            if trials == 0 {
                return Err(Failure::Config(Error::Config("--trials must be >= 1".into())));
            }
            writeln!(
                out,
                "{:<8} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>7}",
                "method", "expected", "mean", "std", "median", "q25", "q75", "z"
            )?;
            let mut stalled = Vec::new();
            for &m in method.methods() {
                let s = exp.solve(rho_total, m)?;
                let stats = monte_carlo_regret(&exp, &s.allocation, trials, exp.config.base_seed, workers)?;
                let z = (stats.mean - s.expected_regret).abs() / stats.std_error();
                writeln!(
                    out,
                    "{:<8} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>7.2}",
                    m.to_string(),
                    s.expected_regret,
                    stats.mean,
                    stats.std,
                    stats.median,
                    stats.q25,
                    stats.q75,
                    z
                )?;
                if !s.converged {
                    stalled.push(format!("{m} at rho_total={rho_total}"));
                }
            }
            if !stalled.is_empty() {
                return Err(Failure::NonConvergence(stalled.join(", ")));
            }
        }
        Command::Validate { config, trials } => {
            if trials == 0 {
                return Err(Failure::Config(Error::Config("--trials must be >= 1".into())));
            }
            let exp = load(&config, cli.seed)?;
            let report = validate(&exp, exp.config.base_seed, trials, workers)?;
            writeln!(out, "{report}")?;
            if !report.passed() {
                return Err(Failure::Validation);
            }
        }
        Command::Series { config, out: path } => {
            let exp = load(&config, cli.seed)?;
            let mut rng = rng::substream(exp.config.base_seed, rng::SETUP_TRIAL, 0);
            let series = generate_arima(&mut rng, &exp.config.arima, exp.system.series_dim())?;
            series.save(&path)?;
            writeln!(out, "wrote {} steps x {} channels to {}", series.len(), series.channels(), path.display())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::NonConvergence(what)) => {
            eprintln!("solver did not converge: {what}");
            ExitCode::from(EXIT_NONCONVERGENCE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
