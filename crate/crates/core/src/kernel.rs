//! Diagonal/correlated (DC) prior covariance for impulse responses and
//! empirical-Bayes tuning of its hyperparameters.
//!
//! The DC kernel is `K[i][j] = c * alpha^((i+j)/2) * rho^|i-j|` with
//! `i, j = 1..n` indexing `g(0)..g(n-1)`. It factors as `K = c D R D`
//! where `D = diag(alpha^(i/2))` and `R[i][j] = rho^|i-j|` is an AR(1)
//! correlation matrix, so `K^{-1}` is tridiagonal and known in closed
//! form. The hyperparameter search uses that structure; the dense
//! data-space evaluation in [`marginal_log_likelihood`] is kept as the
//! reference path.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, cholesky_log_det, spd_inverse, symmetrize};
use crate::lti::ToeplitzRegressor;
use crate::optim::{
    central_difference_gradient, minimize_bfgs, DescentOptions, DescentStatus,
    DIVERGED_OBJECTIVE,
};

/// DC kernel hyperparameters plus the noise variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcHyperParams {
    /// Prior scale, `c > 0`.
    pub c: f64,
    /// Decay rate, `0 < alpha < 1`.
    pub alpha: f64,
    /// Neighbor correlation, `|rho| < 1`.
    pub rho: f64,
    /// Noise variance, `lambda > 0`.
    pub lambda: f64,
}

impl DcHyperParams {
    pub fn new(c: f64, alpha: f64, rho: f64, lambda: f64) -> Result<Self> {
        let p = Self { c, alpha, rho, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c.is_finite()
            && self.c > 0.0
            && self.alpha > 0.0
            && self.alpha < 1.0
            && self.rho.abs() < 1.0
            && self.lambda.is_finite()
            && self.lambda > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHyperParams(format!(
                "need c > 0, 0 < alpha < 1, |rho| < 1, lambda > 0; got {self:?}"
            )))
        }
    }

    /// Unconstrained coordinates `(ln c, logit alpha, artanh rho, ln lambda)`.
    pub fn to_unconstrained(&self) -> [f64; 4] {
        [
            self.c.ln(),
            (self.alpha / (1.0 - self.alpha)).ln(),
            self.rho.atanh(),
            self.lambda.ln(),
        ]
    }

    pub fn from_unconstrained(x: [f64; 4]) -> Self {
        Self {
            c: x[0].exp(),
            alpha: 1.0 / (1.0 + (-x[1]).exp()),
            rho: x[2].tanh(),
            lambda: x[3].exp(),
        }
    }
}

/// Closed-form structure of a DC kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct DcStructure {
    pub(crate) c: f64,
    pub(crate) alpha: f64,
    pub(crate) rho: f64,
}

impl DcStructure {
    pub(crate) fn sqrt_decay(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.alpha.powf(0.5 * i as f64)).collect()
    }

    /// Tridiagonal `R^{-1}` of the AR(1) correlation matrix.
    pub(crate) fn correlation_precision(&self, n: usize) -> DMatrix<f64> {
        let rho = self.rho;
        let s = 1.0 / (1.0 - rho * rho);
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let interior = i > 0 && i + 1 < n;
            p[(i, i)] = if n == 1 {
                1.0
            } else if interior {
                (1.0 + rho * rho) * s
            } else {
                s
            };
            if i + 1 < n {
                p[(i, i + 1)] = -rho * s;
                p[(i + 1, i)] = -rho * s;
            }
        }
        p
    }

    /// Bidiagonal `B` with `B R B^T = I` (so `R^{-1} = B^T B`).
    pub(crate) fn correlation_whitening(&self, n: usize) -> DMatrix<f64> {
        let root = (1.0 - self.rho * self.rho).sqrt();
        let mut b = DMatrix::zeros(n, n);
        b[(0, 0)] = 1.0;
        for i in 1..n {
            b[(i, i)] = 1.0 / root;
            b[(i, i - 1)] = -self.rho / root;
        }
        b
    }
}

/// Symmetric positive semidefinite impulse-response covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    matrix: DMatrix<f64>,
    dc: Option<DcStructure>,
}

impl KernelMatrix {
    /// Wraps an arbitrary symmetric covariance matrix.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidHyperParams("kernel matrix must be square".into()));
        }
        let scale = matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        let asym = (&matrix - matrix.transpose()).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if asym > 1e-12 * scale {
            return Err(Error::InvalidHyperParams(format!(
                "kernel matrix not symmetric (max deviation {asym:e})"
            )));
        }
        Ok(Self { matrix, dc: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub(crate) fn dc_structure(&self) -> Option<DcStructure> {
        self.dc
    }

    /// `K^{-1}`: closed form for DC kernels, Cholesky inverse otherwise.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        match self.dc {
            Some(dc) => {
                let n = self.dim();
                let d = dc.sqrt_decay(n);
                let rinv = dc.correlation_precision(n);
                Ok(DMatrix::from_fn(n, n, |i, j| rinv[(i, j)] / (dc.c * d[i] * d[j])))
            }
            None => spd_inverse(&self.matrix),
        }
    }

    /// A matrix `F` with `F^T F = K^{-1}`.
    pub fn whitening(&self) -> Result<DMatrix<f64>> {
        match self.dc {
            Some(dc) => {
                let n = self.dim();
                let d = dc.sqrt_decay(n);
                let b = dc.correlation_whitening(n);
                let root_c = dc.c.sqrt();
                Ok(DMatrix::from_fn(n, n, |i, j| b[(i, j)] / (root_c * d[j])))
            }
            None => {
                let chol = cholesky_jittered(&self.matrix)?;
                let n = self.dim();
                let l = chol.l();
                l.solve_lower_triangular(&DMatrix::identity(n, n))
                    .ok_or_else(|| Error::Factorization("singular kernel factor".into()))
            }
        }
    }
}

/// Builds the `n x n` DC kernel matrix (1-based indices, `K[1][1] = c alpha`).
pub fn dc_kernel(params: &DcHyperParams, n: usize) -> Result<KernelMatrix> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidHyperParams("kernel dimension must be positive".into()));
    }
    let dc = DcStructure {
        c: params.c,
        alpha: params.alpha,
        rho: params.rho,
    };
    let d = dc.sqrt_decay(n);
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let lag = i.abs_diff(j) as i32;
        params.c * d[i] * d[j] * params.rho.powi(lag)
    });
    Ok(KernelMatrix {
        matrix: symmetrize(matrix),
        dc: Some(dc),
    })
}

fn check_dims(h: &ToeplitzRegressor, y: &DVector<f64>) -> Result<()> {
    if y.len() != h.dim() {
        return Err(Error::LengthMismatch {
            what: "output vector",
            got: y.len(),
            expected: h.dim(),
        });
    }
    Ok(())
}

/// `-1/2 ln det(S) - 1/2 y^T S^{-1} y` with `S = lambda I + H K H^T`,
/// evaluated through a Cholesky factorization of `S`. The `-N/2 ln(2 pi)`
/// constant is omitted.
pub fn marginal_log_likelihood(
    params: &DcHyperParams,
    h: &ToeplitzRegressor,
    y: &DVector<f64>,
) -> Result<f64> {
    check_dims(h, y)?;
    let k = dc_kernel(params, h.dim())?;
    marginal_log_likelihood_with_kernel(&k, params.lambda, h, y)
}

/// Data-space marginal log-likelihood for an arbitrary kernel matrix.
pub fn marginal_log_likelihood_with_kernel(
    kernel: &KernelMatrix,
    lambda: f64,
    h: &ToeplitzRegressor,
    y: &DVector<f64>,
) -> Result<f64> {
    check_dims(h, y)?;
    let hm = h.matrix();
    let mut s = hm * kernel.matrix() * hm.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += lambda;
    }
    let chol = cholesky_jittered(&symmetrize(s))?;
    let alpha = chol.solve(y);
    Ok(-0.5 * cholesky_log_det(&chol) - 0.5 * y.dot(&alpha))
}

/// Marginal likelihood of one dataset with the regressor-dependent
/// quantities precomputed.
///
/// Evaluation runs in the scaled information form
/// `P = R^{-1}/c + D H^T H D / lambda`, which never forms `K^{-1}` with its
/// `alpha^{-i}` entries:
///
/// ```text
/// ln det S    = N ln lambda + N ln c + (N-1) ln(1 - rho^2) + ln det P
/// y^T S^-1 y  = ||y - H g||^2 / lambda + ||B w||^2 / c,
///     w = P^{-1} D H^T y / lambda,  g = D w
/// ```
#[derive(Clone, Debug)]
pub struct MarginalLikelihood {
    h: DMatrix<f64>,
    y: DVector<f64>,
    gram: DMatrix<f64>,
    hty: DVector<f64>,
}

impl MarginalLikelihood {
    pub fn new(h: &ToeplitzRegressor, y: &DVector<f64>) -> Result<Self> {
        check_dims(h, y)?;
        let hm = h.matrix().clone();
        let gram = hm.transpose() * &hm;
        let hty = hm.transpose() * y;
        Ok(Self {
            h: hm,
            y: y.clone(),
            gram,
            hty,
        })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn eval(&self, params: &DcHyperParams) -> Result<f64> {
        params.validate()?;
        let n = self.dim();
        let dc = DcStructure {
            c: params.c,
            alpha: params.alpha,
            rho: params.rho,
        };
        let d = dc.sqrt_decay(n);
        let rinv = dc.correlation_precision(n);
        let lambda = params.lambda;
        let p = DMatrix::from_fn(n, n, |i, j| {
            rinv[(i, j)] / params.c + d[i] * d[j] * self.gram[(i, j)] / lambda
        });
        let chol = cholesky_jittered(&p)?;
        let db = DVector::from_fn(n, |i, _| d[i] * self.hty[i] / lambda);
        let w = chol.solve(&db);
        let g = DVector::from_fn(n, |i, _| d[i] * w[i]);
        let resid = &self.y - &self.h * &g;
        let bw = dc.correlation_whitening(n) * &w;

        let log_det = n as f64 * (lambda.ln() + params.c.ln())
            + (n as f64 - 1.0) * (1.0 - params.rho * params.rho).ln()
            + cholesky_log_det(&chol);
        let quad = resid.norm_squared() / lambda + bw.norm_squared() / params.c;
        let value = -0.5 * log_det - 0.5 * quad;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite(format!("marginal likelihood at {params:?}")))
        }
    }
}

/// Settings of the multi-start hyperparameter search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerOptions {
    /// Perturbed restarts in addition to the initial point.
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Keep `lambda` at its initial value.
    pub pin_lambda: bool,
    pub seed: u64,
}

impl Default for TunerOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            pin_lambda: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneStart {
    pub index: usize,
    pub start: DcHyperParams,
    pub params: DcHyperParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub status: DescentStatus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneResult {
    pub params: DcHyperParams,
    pub log_likelihood: f64,
    pub init_log_likelihood: f64,
    pub starts: Vec<TuneStart>,
}

const PERTURBATION_SD: [f64; 4] = [1.0, 1.0, 0.5, 0.5];
const COORDINATE_BOUND: f64 = 40.0;
/// `|rho| <= tanh(5) ~ 0.99991`.
const RHO_BOUND: f64 = 5.0;
/// Smallest `ln(alpha^n)` allowed, so that `alpha^(-n/2)` stays far from
/// overflow when the prior is whitened.
const MIN_LOG_DECAY: f64 = -460.0;

/// Search box in unconstrained coordinates: `(lower, upper)` per coordinate.
fn search_box(n: usize) -> [(f64, f64); 4] {
    let alpha_min = (MIN_LOG_DECAY / n.max(1) as f64).exp();
    let logit_min = (alpha_min / (1.0 - alpha_min)).ln().max(-COORDINATE_BOUND);
    [
        (-COORDINATE_BOUND, COORDINATE_BOUND),
        (logit_min, COORDINATE_BOUND),
        (-RHO_BOUND, RHO_BOUND),
        (-COORDINATE_BOUND, COORDINATE_BOUND),
    ]
}

/// Maximizes the marginal likelihood over `(c, alpha, rho, lambda)`.
///
/// Runs BFGS with finite-difference gradients in unconstrained
/// coordinates from `init` and from `options.restarts` random
/// perturbations of it. The best start wins (ties go to the lower index),
/// so the result never scores below `init`. The search stays inside a box
/// that keeps `|rho| < 1` and `alpha^n` representable; starts outside it
/// are projected onto it.
pub fn tune_hyperparameters(
    h: &ToeplitzRegressor,
    y: &DVector<f64>,
    init: &DcHyperParams,
    options: &TunerOptions,
) -> Result<TuneResult> {
    init.validate()?;
    let ml = MarginalLikelihood::new(h, y)?;
    let init_log_likelihood = ml.eval(init)?;

    let bounds = search_box(h.dim());
    let project = |x: &mut [f64; 4]| {
        for (xi, (lo, hi)) in x.iter_mut().zip(bounds) {
            *xi = xi.clamp(lo, hi);
        }
    };
    let mut base = init.to_unconstrained();
    project(&mut base);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = vec![base];
    for _ in 0..options.restarts {
        let mut x = base;
        for (xi, sd) in x.iter_mut().zip(PERTURBATION_SD) {
            let z: f64 = rng.sample(StandardNormal);
            *xi += sd * z;
        }
        if options.pin_lambda {
            x[3] = base[3];
        }
        project(&mut x);
        starts.push(x);
    }

    let free = if options.pin_lambda { 3 } else { 4 };
    let expand = |x: &DVector<f64>| -> [f64; 4] {
        let mut full = base;
        full[..free].copy_from_slice(&x.as_slice()[..free]);
        full
    };
    let objective = |x: &DVector<f64>| -> f64 {
        let outside = x
            .iter()
            .zip(bounds)
            .any(|(v, (lo, hi))| !v.is_finite() || *v < lo || *v > hi);
        if outside {
            return DIVERGED_OBJECTIVE;
        }
        match ml.eval(&DcHyperParams::from_unconstrained(expand(x))) {
            Ok(v) => -v,
            Err(_) => DIVERGED_OBJECTIVE,
        }
    };
    let descent = DescentOptions {
        max_iterations: options.max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        ..Default::default()
    };

    let runs: Vec<TuneStart> = starts
        .par_iter()
        .enumerate()
        .map(|(index, x0)| {
            let x0v = DVector::from_column_slice(&x0[..free]);
            let mut f = objective;
            let res = minimize_bfgs(
                objective,
                |x, _| central_difference_gradient(&mut f, x, 1e-5),
                x0v,
                &descent,
            );
            TuneStart {
                index,
                start: DcHyperParams::from_unconstrained(*x0),
                params: DcHyperParams::from_unconstrained(expand(&res.x)),
                log_likelihood: -res.value,
                iterations: res.iterations,
                status: res.status,
            }
        })
        .collect();

    let best = runs
        .iter()
        .filter(|r| r.log_likelihood.is_finite() && r.log_likelihood > -DIVERGED_OBJECTIVE)
        .fold(None::<&TuneStart>, |best, r| match best {
            Some(b) if b.log_likelihood >= r.log_likelihood => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::NonFinite("every hyperparameter start failed".into()))?;

    Ok(TuneResult {
        params: best.params,
        log_likelihood: best.log_likelihood,
        init_log_likelihood,
        starts: runs,
    })
}

/// Noise-variance guess from the residual of a least-squares FIR fit of
/// order `N/4` (at least one tap), used to initialize `lambda`.
pub fn initial_noise_variance(h: &ToeplitzRegressor, y: &DVector<f64>) -> f64 {
    let n = h.dim();
    let taps = (n / 4).max(1);
    let phi = h.matrix().columns(0, taps).into_owned();
    let fallback = (y.norm_squared() / n as f64).max(1e-8);
    let Ok(svd) = phi.clone().svd(true, true).solve(y, 1e-10) else {
        return fallback;
    };
    let resid = y - phi * svd;
    let dof = n.saturating_sub(taps).max(1) as f64;
    let v = resid.norm_squared() / dof;
    if v.is_finite() && v > 1e-12 {
        v
    } else {
        fallback
    }
}
