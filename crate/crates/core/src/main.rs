use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decision_sysid::cli::{self, IdentifyArgs, InputKind, SimulateArgs, TuneArgs};
use decision_sysid::experiment::{BenchmarkConfig, IdentifyOptions, KernelInit, Method};
use decision_sysid::kernel::TunerOptions;
use decision_sysid::lti::ModelOrders;
use decision_sysid::{io, Error, Result};

#[derive(Parser)]
#[command(name = "dsid", version, about = "Decision-theoretic output-error identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a rational system and write a t,u,y dataset.
    Simulate {
        /// Model JSON `{"b": [...], "f": [...], "nk": k}`.
        #[arg(long)]
        system: PathBuf,
        #[arg(long = "samples", short = 'N', default_value_t = 60)]
        n_samples: usize,
        #[arg(long, value_enum, default_value_t = Input::White)]
        input: Input,
        #[arg(long, default_value_t = 1.0)]
        input_variance: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_variance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a rational model to a dataset with PEM or BRM.
    Identify {
        #[arg(long)]
        data: PathBuf,
        /// `nb,nf,nk`.
        #[arg(long)]
        orders: ModelOrders,
        #[arg(long, default_value = "brm")]
        method: Method,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Use the initial kernel as given instead of tuning it.
        #[arg(long)]
        fixed_kernel: bool,
        /// Random starts of the risk minimization.
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Impulse-response coefficients entering the risk (default N).
        #[arg(long)]
        horizon: Option<usize>,
        /// Model JSON used as an additional start.
        #[arg(long)]
        init_model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximize the marginal likelihood of DC kernel hyperparameters.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Perturbed restarts in addition to the initial point.
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long)]
        pin_lambda: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo benchmark and write its tables into a directory.
    Benchmark {
        /// Benchmark config (JSON, or TOML by extension).
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Coefficients scored by the error metric.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the box-plot table from a per-replication CSV.
    Report {
        #[arg(long)]
        replications: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct KernelArgs {
    /// `c,alpha,rho` or `c,alpha,rho,lambda`.
    #[arg(long, default_value = "100,0.8,0.7", value_parser = parse_kernel_init)]
    kernel_init: KernelInit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Input {
    White,
    Impulse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    VaryN,
    VaryNf,
}

fn parse_kernel_init(s: &str) -> std::result::Result<KernelInit, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [c, alpha, rho] => Ok(KernelInit { c, alpha, rho, lambda: None }),
        [c, alpha, rho, lambda] => Ok(KernelInit { c, alpha, rho, lambda: Some(lambda) }),
        _ => Err("expected c,alpha,rho or c,alpha,rho,lambda".into()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { system, n_samples, input, input_variance, noise_variance, seed, out } => {
            let input = match input {
                Input::White => InputKind::White,
                Input::Impulse => InputKind::Impulse,
            };
            let args = SimulateArgs { system, n_samples, input, input_variance, noise_variance, seed, out };
            cli::cmd_simulate(&args)?;
            println!("wrote {}", args.out.display());
        }
        Command::Identify {
            data, orders, method, kernel, fixed_kernel, restarts, horizon, init_model, seed, out,
        } => {
            let mut options = IdentifyOptions {
                kernel_init: kernel.kernel_init,
                fixed_kernel,
                risk_horizon: horizon,
                init_model: init_model.map(io::read_json).transpose()?,
                ..IdentifyOptions::default()
            };
            options.risk.restarts = restarts;
            let args = IdentifyArgs { data, orders, method, seed, options, out };
            let report = cli::cmd_identify(&args)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} model b={:?} f={:?} nk={} risk objective {:.6e}",
                report.method,
                report.decision.model.b,
                report.decision.model.f,
                report.decision.model.nk,
                report.decision.objective
            );
            if let Some(ml) = &report.marginal_likelihood {
                println!("log marginal likelihood {:.6} -> {:.6}", ml.init, ml.tuned);
            }
        }
        Command::Tune { data, kernel, restarts, pin_lambda, seed, out } => {
            let tuner = TunerOptions { restarts, pin_lambda, seed, ..TunerOptions::default() };
            let args = TuneArgs { data, init: kernel.kernel_init, tuner, out };
            let res = cli::cmd_tune(&args)?;
            let p = res.params;
            println!(
                "c={} alpha={} rho={} lambda={} log marginal likelihood {:.6} -> {:.6}",
                p.c, p.alpha, p.rho, p.lambda, res.init_log_likelihood, res.log_likelihood
            );
        }
        Command::Benchmark { config, preset, replications, seed, horizon, out } => {
            let mut cfg = match (config, preset) {
                (Some(path), _) => cli::load_benchmark_config(&path)?,
                (None, Some(Preset::VaryNf)) => BenchmarkConfig::vary_nf(),
                (None, Some(Preset::VaryN)) => BenchmarkConfig::vary_n(),
                (None, None) => {
                    return Err(Error::InvalidConfig("benchmark needs --config or --preset".into()))
                }
            };
            if let Some(r) = replications {
                cfg.base.replications = r;
            }
            if let Some(s) = seed {
                cfg.base.seed = s;
            }
            if let Some(h) = horizon {
                cfg.base.metric_horizon = h;
            }
            let outcome = cli::cmd_benchmark(&cfg, &out)?;
            for c in &outcome.cells {
                let median = c.summary.map_or(f64::NAN, |s| s.median);
                println!(
                    "{:>4} N={:<4} nf={:<2} median {:>8.4}  above 0: {:.2}  failed {}",
                    c.method, c.n_samples, c.nf, median, c.fraction_above(0.0), c.failed
                );
            }
            if outcome.failed > 0 {
                eprintln!("{} replications failed", outcome.failed);
                return Ok(false);
            }
        }
        Command::Report { replications, out } => {
            let cells = cli::cmd_report(&replications, &out)?;
            println!("wrote {} cells to {}", cells.len(), out.display());
            if cells.iter().any(|c| c.failed > 0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
