//! End-to-end identification and the Monte Carlo comparison of PEM and BRM.
//!
//! [`identify`] runs the full method on one dataset: build `H`, tune the DC
//! kernel (BRM only), form the posterior summary, minimize the risk.
//! [`run_monte_carlo`] repeats that on freshly simulated data and collects
//! the normalized impulse-response errors
//! `log10(||g_true - g_hat||^2 / ||g_true||^2)`; the all-zero model scores 0.
//!
//! Every replication draws its data from a random stream derived from
//! `(seed, replication)` only, so results do not depend on scheduling and
//! both methods see the same data for a given replication.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    dc_kernel, initial_noise_variance, tune_hyperparameters, DcHyperParams, TuneResult,
    TunerOptions,
};
use crate::lti::{
    impulse_response, impulse_response_unbounded, simulate, white_noise, Dataset,
    ImpulseResponse, ModelOrders, RationalModel,
};
use crate::posterior::{gaussian_posterior, ls_summary, PosteriorSummary};
use crate::risk::{minimize_risk, Decision, RiskMinOptions, RiskSpec};

/// Lower clamp of the normalized error (an exact match would be `-inf`).
pub const ERROR_FLOOR: f64 = -16.0;
/// Upper clamp, reached only by wildly unstable decisions.
pub const ERROR_CEILING: f64 = 300.0;

/// How the risk inputs are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Least-squares mean and `H^T H` weight: the prediction error method.
    Pem,
    /// Gaussian posterior under a tuned DC kernel.
    Brm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pem => "pem",
            Method::Brm => "brm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pem" => Ok(Method::Pem),
            "brm" => Ok(Method::Brm),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (expected pem or brm)"
            ))),
        }
    }
}

/// DC kernel starting point for the hyperparameter search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelInit {
    pub c: f64,
    pub alpha: f64,
    pub rho: f64,
    /// Initial noise variance; estimated from a least-squares FIR fit if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Default for KernelInit {
    fn default() -> Self {
        Self {
            c: 100.0,
            alpha: 0.8,
            rho: 0.7,
            lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyOptions {
    pub kernel_init: KernelInit,
    /// Skip the marginal-likelihood search and use `kernel_init` as is.
    pub fixed_kernel: bool,
    pub tuner: TunerOptions,
    pub risk: RiskMinOptions,
    /// Number of impulse-response coefficients in the risk; defaults to `N`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk_horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_model: Option<RationalModel>,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            kernel_init: KernelInit::default(),
            fixed_kernel: false,
            tuner: TunerOptions::default(),
            risk: RiskMinOptions::default(),
            risk_horizon: None,
            init_model: None,
        }
    }
}

/// Everything produced by one identification run.
#[derive(Clone, Debug)]
pub struct Identification {
    pub method: Method,
    pub decision: Decision,
    pub posterior: PosteriorSummary,
    /// Hyperparameter search (BRM only).
    pub tuning: Option<TuneResult>,
    /// Kernel hyperparameters used for the posterior (BRM only).
    pub hyperparams: Option<DcHyperParams>,
}

/// Identifies a model of the given orders from one dataset.
pub fn identify(
    data: &Dataset,
    orders: ModelOrders,
    method: &Method,
    options: &IdentifyOptions,
) -> Result<Identification> {
    let h = data.regressor();
    let y = data.y_vector();
    let (posterior, tuning, hyperparams) = match method {
        Method::Pem => (ls_summary(&h, &y)?, None, None),
        Method::Brm => {
            let init = options.kernel_init;
            let lambda = init
                .lambda
                .unwrap_or_else(|| initial_noise_variance(&h, &y));
            let start = DcHyperParams::new(init.c, init.alpha, init.rho, lambda)?;
            let (params, tuning) = if options.fixed_kernel {
                (start, None)
            } else {
                let res = tune_hyperparameters(&h, &y, &start, &options.tuner)?;
                (res.params, Some(res))
            };
            let kernel = dc_kernel(&params, data.len())?;
            let post = gaussian_posterior(&kernel, params.lambda, &h, &y)?;
            (post, tuning, Some(params))
        }
    };
    let mut spec = RiskSpec::from_posterior(&posterior);
    if let Some(n) = options.risk_horizon {
        spec = spec.truncated(n)?;
    }
    let decision = minimize_risk(&spec, orders, options.init_model.as_ref(), &options.risk)?;
    Ok(Identification {
        method: *method,
        decision,
        posterior,
        tuning,
        hyperparams,
    })
}

/// `log10(||g_true - g_hat||^2 / ||g_true||^2)`, clamped to
/// `[ERROR_FLOOR, ERROR_CEILING]`.
pub fn normalized_error(g_true: &ImpulseResponse, g_hat: &ImpulseResponse) -> Result<f64> {
    if g_true.len() != g_hat.len() {
        return Err(Error::LengthMismatch {
            what: "estimated impulse response",
            got: g_hat.len(),
            expected: g_true.len(),
        });
    }
    let reference = g_true.norm_squared();
    if reference == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let miss: f64 = g_true
        .as_slice()
        .iter()
        .zip(g_hat.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let err = (miss / reference).log10();
    Ok(if err.is_nan() {
        ERROR_CEILING
    } else {
        err.clamp(ERROR_FLOOR, ERROR_CEILING)
    })
}

fn default_system() -> RationalModel {
    RationalModel {
        b: vec![0.41],
        f: vec![-1.82, 2.04, -1.27, 0.46],
        nk: 0,
    }
}

/// One Monte Carlo cell: data-generating system, sample size, method and
/// model class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: RationalModel,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub input_variance: f64,
    pub noise_variance: f64,
    pub orders: ModelOrders,
    pub method: Method,
    pub replications: usize,
    pub seed: u64,
    /// Number of impulse-response coefficients scored by the error metric.
    pub metric_horizon: usize,
    pub identify: IdentifyOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: default_system(),
            n_samples: 60,
            input_variance: 1.0,
            noise_variance: 2.0,
            orders: ModelOrders::new(0, 4, 0),
            method: Method::Brm,
            replications: 100,
            seed: 0,
            metric_horizon: 100,
            identify: IdentifyOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.n_samples == 0 {
            return bad("N must be at least 1");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.metric_horizon == 0 {
            return bad("metric_horizon must be at least 1");
        }
        if !(self.input_variance >= 0.0 && self.noise_variance >= 0.0) {
            return bad("variances must be nonnegative");
        }
        if self.input_variance == 0.0 {
            return bad("input_variance must be positive to excite the system");
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the random stream serving `purpose` in replication `index`.
pub fn substream_seed(seed: u64, index: usize, purpose: u64) -> u64 {
    mix(mix(mix(seed) ^ index as u64) ^ purpose)
}

const STREAM_DATA: u64 = 1;
const STREAM_RISK: u64 = 2;
const STREAM_TUNER: u64 = 3;

/// Simulated input/output record of replication `index`.
pub fn replication_dataset(config: &ExperimentConfig, index: usize) -> Result<Dataset> {
    let n = config.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, index, STREAM_DATA));
    let u = white_noise(&mut rng, n, config.input_variance);
    let e = white_noise(&mut rng, n, config.noise_variance);
    let g = impulse_response(&config.system, n)?;
    let y = simulate(&g, &u, Some(&e))?;
    Dataset::new(u, y)
}

/// Runs replication `index` and returns its normalized error.
pub fn run_single(config: &ExperimentConfig, index: usize) -> Result<f64> {
    config.validate()?;
    let data = replication_dataset(config, index)?;
    let mut options = config.identify.clone();
    options.risk.seed = substream_seed(config.seed, index, STREAM_RISK);
    options.tuner.seed = substream_seed(config.seed, index, STREAM_TUNER);
    let fit = identify(&data, config.orders, &config.method, &options)?;
    let g_true = impulse_response(&config.system, config.metric_horizon)?;
    let g_hat = impulse_response_unbounded(&fit.decision.model, config.metric_horizon);
    normalized_error(&g_true, &g_hat)
}

/// Five-number summary plus mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl BoxSummary {
    /// Quartiles by linear interpolation between order statistics
    /// (position `p (n - 1)` in the sorted sample).
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linear-interpolation quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub method: Method,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub nf: usize,
    /// Normalized error; `NaN` for failed replications.
    pub error: f64,
    pub status: String,
}

impl ReplicationRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Normalized errors of one Monte Carlo cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub method: Method,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub nf: usize,
    /// Errors of the successful replications, in replication order.
    pub errors: Vec<f64>,
    /// `None` when every replication failed.
    pub summary: Option<BoxSummary>,
    pub failed: usize,
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

impl ErrorDistribution {
    pub fn from_records(method: Method, n_samples: usize, nf: usize, records: Vec<ReplicationRecord>) -> Self {
        let errors: Vec<f64> = records.iter().filter(|r| r.is_ok()).map(|r| r.error).collect();
        let failed = records.len() - errors.len();
        Self {
            method,
            n_samples,
            nf,
            summary: BoxSummary::from_values(&errors),
            errors,
            failed,
            records,
        }
    }

    /// Fraction of successful replications with error above `threshold`.
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        if self.errors.is_empty() {
            return f64::NAN;
        }
        self.errors.iter().filter(|e| **e > threshold).count() as f64 / self.errors.len() as f64
    }

    pub fn median(&self) -> f64 {
        self.summary.map_or(f64::NAN, |s| s.median)
    }
}

/// Runs all replications of one cell. Failed replications are kept as
/// records with their error message and counted, never dropped.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<ErrorDistribution> {
    config.validate()?;
    let records: Vec<ReplicationRecord> = (0..config.replications)
        .into_par_iter()
        .map(|index| {
            let (error, status) = match run_single(config, index) {
                Ok(e) => (e, "ok".to_string()),
                Err(e) => (f64::NAN, format!("failed: {e}")),
            };
            ReplicationRecord {
                replication: index,
                method: config.method,
                n_samples: config.n_samples,
                nf: config.orders.nf,
                error,
                status,
            }
        })
        .collect();
    Ok(ErrorDistribution::from_records(
        config.method,
        config.n_samples,
        config.orders.nf,
        records,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Sample sizes `n_values` at the base model orders.
    VaryN,
    /// Denominator orders `nf_values` at the base sample size.
    VaryNf,
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vary_n" | "vary_N" => Ok(SuiteKind::VaryN),
            "vary_nf" => Ok(SuiteKind::VaryNf),
            other => Err(Error::InvalidConfig(format!(
                "unknown suite {other:?} (expected vary_n or vary_nf)"
            ))),
        }
    }
}

/// A benchmark: one base configuration swept over `N` or `nf`, both methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub kind: SuiteKind,
    pub n_values: Vec<usize>,
    pub nf_values: Vec<usize>,
    pub methods: Vec<Method>,
    pub base: ExperimentConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            kind: SuiteKind::VaryN,
            n_values: vec![30, 60, 120],
            nf_values: vec![2, 4, 8],
            methods: vec![Method::Pem, Method::Brm],
            base: ExperimentConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    /// Sample-size sweep `N in {30, 60, 120}`.
    pub fn vary_n() -> Self {
        Self::default()
    }

    /// Model-order sweep `nf in {2, 4, 8}` at `N = 60`.
    pub fn vary_nf() -> Self {
        Self {
            kind: SuiteKind::VaryNf,
            ..Self::default()
        }
    }

    /// The per-cell configurations, grid value outermost and methods inner.
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let grid: Vec<(usize, usize)> = match self.kind {
            SuiteKind::VaryN => self
                .n_values
                .iter()
                .map(|&n| (n, self.base.orders.nf))
                .collect(),
            SuiteKind::VaryNf => self
                .nf_values
                .iter()
                .map(|&nf| (self.base.n_samples, nf))
                .collect(),
        };
        grid.into_iter()
            .flat_map(|(n, nf)| {
                self.methods.iter().map(move |&method| {
                    let mut cfg = self.base.clone();
                    cfg.n_samples = n;
                    cfg.orders.nf = nf;
                    cfg.method = method;
                    cfg
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must not be empty".into()));
        }
        let values = match self.kind {
            SuiteKind::VaryN => &self.n_values,
            SuiteKind::VaryNf => &self.nf_values,
        };
        if values.is_empty() {
            return Err(Error::InvalidConfig("sweep values must not be empty".into()));
        }
        self.cells().iter().try_for_each(ExperimentConfig::validate)
    }
}

/// Runs every cell of a benchmark.
pub fn benchmark_suite(config: &BenchmarkConfig) -> Result<Vec<ErrorDistribution>> {
    config.validate()?;
    config.cells().iter().map(run_monte_carlo).collect()
}

/// Per-replication CSV: `replication,method,N,nf,error,status`.
pub fn replications_csv(cells: &[ErrorDistribution]) -> String {
    let mut out = String::from("replication,method,N,nf,error,status\n");
    for r in cells.iter().flat_map(|c| &c.records) {
        let status = if r.is_ok() { "ok" } else { "failed" };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.replication, r.method, r.n_samples, r.nf, r.error, status
        ));
    }
    out
}

/// Parses a per-replication CSV back into records.
pub fn parse_replications_csv<R: std::io::Read>(reader: R) -> Result<Vec<ReplicationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_err = |what: &str| Error::InvalidConfig(format!("row {}: bad {what}", row + 2));
        out.push(ReplicationRecord {
            replication: field(0).parse().map_err(|_| parse_err("replication"))?,
            method: field(1).parse()?,
            n_samples: field(2).parse().map_err(|_| parse_err("N"))?,
            nf: field(3).parse().map_err(|_| parse_err("nf"))?,
            error: field(4).parse().map_err(|_| parse_err("error"))?,
            status: field(5).to_string(),
        });
    }
    Ok(out)
}

/// Groups records into cells keyed by `(method, N, nf)`, in order of first
/// appearance.
pub fn group_records(records: Vec<ReplicationRecord>) -> Vec<ErrorDistribution> {
    let mut keys: Vec<(Method, usize, usize)> = Vec::new();
    let mut groups: Vec<Vec<ReplicationRecord>> = Vec::new();
    for r in records {
        let key = (r.method, r.n_samples, r.nf);
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|((m, n, nf), recs)| ErrorDistribution::from_records(m, n, nf, recs))
        .collect()
}

/// Box-plot table, one row per cell.
pub fn plot_data_csv(cells: &[ErrorDistribution]) -> String {
    let mut out = String::from("method,N,nf,count,failed,min,q1,median,q3,max,mean\n");
    for c in cells {
        let s = c.summary.unwrap_or(BoxSummary {
            min: f64::NAN,
            q1: f64::NAN,
            median: f64::NAN,
            q3: f64::NAN,
            max: f64::NAN,
            mean: f64::NAN,
        });
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.method,
            c.n_samples,
            c.nf,
            c.errors.len(),
            c.failed,
            s.min,
            s.q1,
            s.median,
            s.q3,
            s.max,
            s.mean
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metric_edge_cases() {
        let g = ImpulseResponse::new(vec![1.0, 0.0]);
        assert_eq!(normalized_error(&g, &g).unwrap(), ERROR_FLOOR);
        assert_eq!(normalized_error(&g, &ImpulseResponse::zeros(2)).unwrap(), 0.0);
        assert_eq!(normalized_error(&g, &ImpulseResponse::new(vec![2.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            normalized_error(&ImpulseResponse::zeros(2), &g),
            Err(Error::ZeroNorm)
        ));
        let inf = ImpulseResponse::new(vec![f64::INFINITY, 0.0]);
        assert_eq!(normalized_error(&g, &inf).unwrap(), ERROR_CEILING);
    }

    #[test]
    fn zero_model_scores_zero() {
        let system = default_system();
        let g = impulse_response(&system, 100).unwrap();
        let zero = RationalModel::fir(vec![0.0], 0).unwrap();
        let g0 = impulse_response(&zero, 100).unwrap();
        assert_eq!(normalized_error(&g, &g0).unwrap(), 0.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = BoxSummary::from_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert!((s.q1 - 1.75).abs() < 1e-15);
        assert!((s.median - 2.5).abs() < 1e-15);
        assert!((s.q3 - 3.25).abs() < 1e-15);
        let one = BoxSummary::from_values(&[-3.5]).unwrap();
        assert_eq!((one.min, one.median, one.max), (-3.5, -3.5, -3.5));
        assert!(BoxSummary::from_values(&[]).is_none());
    }

    #[test]
    fn default_system_gain_is_one() {
        let g = impulse_response(&default_system(), 2000).unwrap();
        let sum: f64 = g.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn suite_shapes() {
        let n = BenchmarkConfig::vary_n().cells();
        assert_eq!(n.len(), 6);
        assert_eq!(
            n.iter().map(|c| (c.n_samples, c.method)).collect::<Vec<_>>(),
            vec![
                (30, Method::Pem),
                (30, Method::Brm),
                (60, Method::Pem),
                (60, Method::Brm),
                (120, Method::Pem),
                (120, Method::Brm)
            ]
        );
        let nf = BenchmarkConfig::vary_nf().cells();
        assert_eq!(nf.iter().map(|c| c.orders.nf).collect::<Vec<_>>(), vec![2, 2, 4, 4, 8, 8]);
        assert!(nf.iter().all(|c| c.n_samples == 60));
    }

    #[test]
    fn substreams_differ() {
        assert_ne!(substream_seed(0, 0, 1), substream_seed(0, 1, 1));
        assert_ne!(substream_seed(0, 0, 1), substream_seed(0, 0, 2));
        assert_ne!(substream_seed(0, 0, 1), substream_seed(1, 0, 1));
    }

    #[test]
    fn datasets_shared_across_methods() {
        let pem = ExperimentConfig { method: Method::Pem, ..Default::default() };
        let brm = ExperimentConfig { method: Method::Brm, ..Default::default() };
        assert_eq!(replication_dataset(&pem, 3).unwrap(), replication_dataset(&brm, 3).unwrap());
        assert_ne!(replication_dataset(&pem, 3).unwrap(), replication_dataset(&pem, 4).unwrap());
    }

    #[test]
    fn config_validation() {
        let cfg = ExperimentConfig { replications: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { noise_variance: -1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{ "N": 30, "method": "pem" }"#).unwrap();
        assert_eq!(cfg.n_samples, 30);
        assert_eq!(cfg.method, Method::Pem);
        assert_eq!(cfg.noise_variance, 2.0);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{ "n": 30 }"#).is_err());
    }

    #[test]
    fn replication_csv_round_trip() {
        let records = vec![
            ReplicationRecord {
                replication: 0,
                method: Method::Pem,
                n_samples: 30,
                nf: 4,
                error: -1.25,
                status: "ok".into(),
            },
            ReplicationRecord {
                replication: 1,
                method: Method::Pem,
                n_samples: 30,
                nf: 4,
                error: f64::NAN,
                status: "failed: boom".into(),
            },
        ];
        let cell = ErrorDistribution::from_records(Method::Pem, 30, 4, records);
        assert_eq!(cell.failed, 1);
        let text = replications_csv(std::slice::from_ref(&cell));
        assert_eq!(text, "replication,method,N,nf,error,status\n0,pem,30,4,-1.25,ok\n1,pem,30,4,NaN,failed\n");
        let parsed = parse_replications_csv(text.as_bytes()).unwrap();
        let regrouped = group_records(parsed);
        assert_eq!(regrouped.len(), 1);
        assert_eq!(regrouped[0].errors, vec![-1.25]);
        assert_eq!(regrouped[0].failed, 1);
        assert!(plot_data_csv(&regrouped).starts_with("method,N,nf,count,failed,min,q1,median,q3,max,mean\npem,30,4,1,1,-1.25,"));
    }
}
