//! Command implementations behind the `dsid` binary.
//!
//! Each command writes its artifacts atomically and records the fully
//! resolved configuration next to them (`<out>.config.json` for single-file
//! outputs, `config.json` inside benchmark output directories).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    benchmark_suite, group_records, identify, parse_replications_csv, plot_data_csv,
    replications_csv, BenchmarkConfig, ErrorDistribution, IdentifyOptions, KernelInit, Method,
};
use crate::io;
use crate::kernel::{
    initial_noise_variance, marginal_log_likelihood, tune_hyperparameters, DcHyperParams,
    TuneResult, TunerOptions,
};
use crate::lti::{impulse_response, sample_white_noise, simulate, Dataset, ModelOrders, RationalModel};
use crate::posterior::PosteriorReport;
use crate::risk::Decision;

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// White Gaussian input of the configured variance.
    White,
    /// Unit impulse at `t = 1`.
    Impulse,
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(InputKind::White),
            "impulse" => Ok(InputKind::Impulse),
            other => Err(Error::InvalidConfig(format!(
                "unknown input kind {other:?} (expected white or impulse)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    pub system: PathBuf,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub input: InputKind,
    pub input_variance: f64,
    pub noise_variance: f64,
    pub seed: u64,
    pub out: PathBuf,
}

/// Simulates the system in `args.system` and writes a `t,u,y` dataset.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<Dataset> {
    let system: RationalModel = io::read_json(&args.system)?;
    system.validate()?;
    if args.n_samples == 0 {
        return Err(Error::InvalidConfig("N must be at least 1".into()));
    }
    if args.input_variance < 0.0 || args.noise_variance < 0.0 {
        return Err(Error::InvalidConfig("variances must be nonnegative".into()));
    }
    let n = args.n_samples;
    let u = match args.input {
        InputKind::White => sample_white_noise(n, args.input_variance, args.seed),
        InputKind::Impulse => {
            let mut u = vec![0.0; n];
            u[0] = 1.0;
            u
        }
    };
    let e = sample_white_noise(n, args.noise_variance, args.seed.wrapping_add(1));
    let g = impulse_response(&system, n)?;
    let y = simulate(&g, &u, Some(&e))?;
    let data = Dataset::new(u, y)?;
    io::write_dataset_csv(&args.out, &data)?;
    io::write_json(sidecar(&args.out), args)?;
    Ok(data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifyArgs {
    pub data: PathBuf,
    pub orders: ModelOrders,
    pub method: Method,
    pub seed: u64,
    pub options: IdentifyOptions,
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginalLikelihoodReport {
    pub init: f64,
    pub tuned: f64,
}

/// Written by `identify`: the decision plus the posterior summary it was
/// derived from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentifyReport {
    pub method: Method,
    pub decision: Decision,
    pub posterior: PosteriorReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hyperparams: Option<DcHyperParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub marginal_likelihood: Option<MarginalLikelihoodReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn cmd_identify(args: &IdentifyArgs) -> Result<IdentifyReport> {
    let data = io::read_dataset_csv(&args.data)?;
    let mut warnings = Vec::new();
    if data.u[0] == 0.0 {
        warnings.push("u(1) = 0: the regressor is singular".to_string());
    }
    let mut options = args.options.clone();
    options.risk.seed = args.seed;
    options.tuner.seed = args.seed;
    let fit = identify(&data, args.orders, &args.method, &options)?;
    if fit.decision.rank_deficient {
        warnings.push("rank-deficient regressor: unexcited directions carry zero weight".into());
    }
    let report = IdentifyReport {
        method: fit.method,
        posterior: fit.posterior.report(),
        hyperparams: fit.hyperparams,
        marginal_likelihood: fit.tuning.as_ref().map(|t| MarginalLikelihoodReport {
            init: t.init_log_likelihood,
            tuned: t.log_likelihood,
        }),
        decision: fit.decision,
        warnings,
    };
    io::write_json(&args.out, &report)?;
    let resolved = IdentifyArgs {
        options,
        ..args.clone()
    };
    io::write_json(sidecar(&args.out), &resolved)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneArgs {
    pub data: PathBuf,
    pub init: KernelInit,
    pub tuner: TunerOptions,
    pub out: PathBuf,
}

/// Maximizes the marginal likelihood and writes the tuned hyperparameters.
pub fn cmd_tune(args: &TuneArgs) -> Result<TuneResult> {
    let data = io::read_dataset_csv(&args.data)?;
    let h = data.regressor();
    let y = data.y_vector();
    let lambda = args.init.lambda.unwrap_or_else(|| initial_noise_variance(&h, &y));
    let start = DcHyperParams::new(args.init.c, args.init.alpha, args.init.rho, lambda)?;
    let result = tune_hyperparameters(&h, &y, &start, &args.tuner)?;
    debug_assert!(
        (marginal_log_likelihood(&result.params, &h, &y)? - result.log_likelihood).abs()
            <= 1e-6 * result.log_likelihood.abs().max(1.0)
    );
    io::write_json(&args.out, &result.params)?;
    let resolved = TuneArgs {
        init: KernelInit {
            lambda: Some(lambda),
            ..args.init
        },
        ..args.clone()
    };
    io::write_json(sidecar(&args.out), &resolved)?;
    Ok(result)
}

#[derive(Serialize)]
struct SummaryCell<'a> {
    method: Method,
    #[serde(rename = "N")]
    n_samples: usize,
    nf: usize,
    count: usize,
    failed: usize,
    summary: &'a Option<crate::experiment::BoxSummary>,
    fraction_above_zero: f64,
}

fn summary_json(cells: &[ErrorDistribution]) -> Result<String> {
    let rows: Vec<SummaryCell<'_>> = cells
        .iter()
        .map(|c| SummaryCell {
            method: c.method,
            n_samples: c.n_samples,
            nf: c.nf,
            count: c.errors.len(),
            failed: c.failed,
            summary: &c.summary,
            fraction_above_zero: c.fraction_above(0.0),
        })
        .collect();
    io::to_json_pretty(&rows)
}

/// Result of a benchmark run; `failed` counts failed replications over all
/// cells.
pub struct BenchmarkOutcome {
    pub cells: Vec<ErrorDistribution>,
    pub failed: usize,
}

/// Runs a benchmark config and writes `replications.csv`, `summary.json`,
/// `plot_data.csv` and the resolved `config.json` into `out_dir`.
pub fn cmd_benchmark(config: &BenchmarkConfig, out_dir: &Path) -> Result<BenchmarkOutcome> {
    config.validate()?;
    let cells = benchmark_suite(config)?;
    io::write_atomic(out_dir.join("replications.csv"), replications_csv(&cells).as_bytes())?;
    io::write_atomic(out_dir.join("summary.json"), summary_json(&cells)?.as_bytes())?;
    io::write_atomic(out_dir.join("plot_data.csv"), plot_data_csv(&cells).as_bytes())?;
    io::write_json(out_dir.join("config.json"), config)?;
    let failed = cells.iter().map(|c| c.failed).sum();
    Ok(BenchmarkOutcome { cells, failed })
}

pub fn load_benchmark_config(path: &Path) -> Result<BenchmarkConfig> {
    let config: BenchmarkConfig = io::read_config(path)?;
    config.validate().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(config)
}

/// Converts a per-replication CSV into the box-plot table without rerunning
/// anything.
pub fn cmd_report(replications: &Path, out: &Path) -> Result<Vec<ErrorDistribution>> {
    let text = io::read_to_string(replications)?;
    let records = parse_replications_csv(text.as_bytes()).map_err(|e| Error::Parse {
        path: replications.to_path_buf(),
        message: e.to_string(),
    })?;
    let cells = group_records(records);
    io::write_atomic(out, plot_data_csv(&cells).as_bytes())?;
    Ok(cells)
}
