//! The decision rule: choose the rational model minimizing
//! `R(theta) = 1/2 tr(W Sigma) + 1/2 ||mean - g_theta||_W^2`.
//!
//! Only the `theta`-dependent part is optimized; `1/2 tr(W Sigma)` is
//! reported as [`RiskSpec::constant`] when a covariance is available.
//! With the least-squares summary this is the prediction error method, with
//! the Gaussian posterior summary it is the kernel-regularized method.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, symmetrize};
use crate::lti::{
    impulse_response, impulse_response_unbounded, impulse_response_with_jacobian, Dataset,
    ImpulseResponse, ModelOrders, RationalModel,
};
use crate::optim::{
    minimize_least_squares, DescentOptions, DescentStatus, Linearization, DIVERGED_OBJECTIVE,
};
use crate::posterior::{PosteriorSummary, WeightFactor};

/// Mean, weight and optional covariance defining a risk over impulse
/// responses of length `n`.
#[derive(Clone, Debug)]
pub struct RiskSpec {
    pub mean: ImpulseResponse,
    pub weight: DMatrix<f64>,
    pub covariance: Option<DMatrix<f64>>,
    /// `1/2 tr(W Sigma)`, present with a covariance.
    pub constant: Option<f64>,
    pub rank_deficient: bool,
    whitened: WeightFactor,
}

impl RiskSpec {
    pub fn new(
        mean: ImpulseResponse,
        weight: DMatrix<f64>,
        covariance: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = mean.len();
        if weight.nrows() != n || weight.ncols() != n {
            return Err(Error::LengthMismatch {
                what: "weight matrix",
                got: weight.nrows(),
                expected: n,
            });
        }
        if let Some(cov) = &covariance {
            if cov.nrows() != n || cov.ncols() != n {
                return Err(Error::LengthMismatch {
                    what: "covariance matrix",
                    got: cov.nrows(),
                    expected: n,
                });
            }
        }
        let weight = symmetrize(weight);
        let whitened = WeightFactor::from_weight(&weight, &mean.to_dvector());
        let constant = covariance
            .as_ref()
            .map(|cov| 0.5 * (&weight * cov).trace());
        Ok(Self {
            mean,
            weight,
            covariance,
            constant,
            rank_deficient: false,
            whitened,
        })
    }

    pub fn from_posterior(summary: &PosteriorSummary) -> Self {
        let constant = summary
            .covariance
            .as_ref()
            .map(|cov| 0.5 * (&summary.weight * cov).trace());
        Self {
            mean: summary.mean.clone(),
            weight: summary.weight.clone(),
            covariance: summary.covariance.clone(),
            constant,
            rank_deficient: summary.rank_deficient,
            whitened: summary.whitened.clone(),
        }
    }

    /// Risk horizon (length of the mean).
    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    /// The same spec with `W` replaced by `scale * W`.
    pub fn scaled(&self, scale: f64) -> Self {
        let root = scale.sqrt();
        Self {
            mean: self.mean.clone(),
            weight: &self.weight * scale,
            covariance: self.covariance.clone(),
            constant: self.constant.map(|c| c * scale),
            rank_deficient: self.rank_deficient,
            whitened: WeightFactor {
                factor: &self.whitened.factor * root,
                target: &self.whitened.target * root,
            },
        }
    }

    /// Restricts the risk to the first `n` coefficients. With a covariance
    /// the weight becomes the marginal precision `Sigma[..n, ..n]^{-1}`,
    /// otherwise the leading block of `W`.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("risk horizon must be positive".into()));
        }
        if n >= self.horizon() {
            return Ok(self.clone());
        }
        let mean = self.mean.truncated(n);
        let covariance = self
            .covariance
            .as_ref()
            .map(|c| c.view((0, 0), (n, n)).into_owned());
        let weight = match &covariance {
            Some(c) => crate::linalg::spd_inverse(c)?,
            None => self.weight.view((0, 0), (n, n)).into_owned(),
        };
        let mut spec = Self::new(mean, weight, covariance)?;
        spec.rank_deficient = self.rank_deficient;
        Ok(spec)
    }

    fn residual(&self, g: &ImpulseResponse) -> DVector<f64> {
        &self.whitened.target - &self.whitened.factor * g.to_dvector()
    }
}

/// `1/2 (mean - g_theta)^T W (mean - g_theta)`; models whose impulse
/// response diverges score [`DIVERGED_OBJECTIVE`].
pub fn risk_value(model: &RationalModel, spec: &RiskSpec) -> f64 {
    match impulse_response(model, spec.horizon()) {
        Ok(g) => {
            let v = 0.5 * spec.residual(&g).norm_squared();
            if v.is_finite() {
                v.min(DIVERGED_OBJECTIVE)
            } else {
                DIVERGED_OBJECTIVE
            }
        }
        Err(_) => DIVERGED_OBJECTIVE,
    }
}

/// The weighted loss evaluated literally as a quadratic form in `W`.
pub fn risk_value_dense(model: &RationalModel, spec: &RiskSpec) -> f64 {
    let g = impulse_response_unbounded(model, spec.horizon()).to_dvector();
    let d = spec.mean.to_dvector() - g;
    0.5 * quad_form(&spec.weight, &d)
}

/// Gradient `J^T W (g_theta - mean)` of [`risk_value`] over the flat
/// parameter vector.
pub fn risk_gradient(model: &RationalModel, spec: &RiskSpec) -> Result<DVector<f64>> {
    let (g, jac) = impulse_response_with_jacobian(model, spec.horizon())?;
    let r = spec.residual(&g);
    Ok(-(&spec.whitened.factor * jac).transpose() * r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskMinOptions {
    /// Random stable starts in addition to a user-supplied initial model.
    pub restarts: usize,
    pub seed: u64,
    pub descent: DescentOptions,
}

impl Default for RiskMinOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            descent: DescentOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub index: usize,
    pub objective: f64,
    pub iterations: usize,
    pub status: DescentStatus,
}

/// Outcome of the risk minimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub model: RationalModel,
    /// `1/2 ||mean - g_theta||_W^2` at the chosen model.
    pub objective: f64,
    /// `1/2 tr(W Sigma)` when known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub risk_constant: Option<f64>,
    pub best_start: usize,
    #[serde(default)]
    pub rank_deficient: bool,
    pub starts: Vec<StartReport>,
}

/// Monic denominator with all roots inside radius 0.95: `nf / 2`
/// complex-conjugate pairs plus one real root when `nf` is odd.
pub fn random_stable_denominator<R: Rng + ?Sized>(rng: &mut R, nf: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    let mul = |poly: &[f64], factor: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; poly.len() + factor.len() - 1];
        for (i, a) in poly.iter().enumerate() {
            for (j, b) in factor.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    for _ in 0..nf / 2 {
        let r: f64 = rng.random_range(0.0..0.95);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::PI);
        poly = mul(&poly, &[1.0, -2.0 * r * phi.cos(), r * r]);
    }
    if nf % 2 == 1 {
        let p: f64 = rng.random_range(-0.95..0.95);
        poly = mul(&poly, &[1.0, -p]);
    }
    poly[1..].to_vec()
}

fn random_start<R: Rng + ?Sized>(rng: &mut R, orders: ModelOrders, mean_scale: f64) -> RationalModel {
    let f = random_stable_denominator(rng, orders.nf);
    let b = (0..=orders.nb)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * mean_scale
        })
        .collect();
    RationalModel {
        b,
        f,
        nk: orders.nk,
    }
}

fn descend(spec: &RiskSpec, orders: ModelOrders, start: &RationalModel, opts: &DescentOptions) -> (RationalModel, StartReport) {
    let horizon = spec.horizon();
    let to_model = |x: &DVector<f64>| RationalModel {
        b: x.as_slice()[..=orders.nb].to_vec(),
        f: x.as_slice()[orders.nb + 1..].to_vec(),
        nk: orders.nk,
    };
    let residual = |x: &DVector<f64>| {
        impulse_response(&to_model(x), horizon)
            .ok()
            .map(|g| spec.residual(&g))
    };
    let linearize = |x: &DVector<f64>| {
        let (g, jac) = impulse_response_with_jacobian(&to_model(x), horizon).ok()?;
        Some(Linearization {
            residual: spec.residual(&g),
            jacobian: -(&spec.whitened.factor * jac),
        })
    };
    let res = minimize_least_squares(
        residual,
        linearize,
        DVector::from_vec(start.flatten()),
        opts,
    );
    let model = to_model(&res.x);
    let objective = risk_value(&model, spec);
    let report = StartReport {
        index: 0,
        objective,
        iterations: res.iterations,
        status: res.status,
    };
    (model, report)
}

/// Minimizes the risk over models of the given orders.
///
/// Starts are the optional `init` followed by `options.restarts` random
/// stable models drawn from `options.seed`. The lowest objective wins, ties
/// going to the lower start index.
pub fn minimize_risk(
    spec: &RiskSpec,
    orders: ModelOrders,
    init: Option<&RationalModel>,
    options: &RiskMinOptions,
) -> Result<Decision> {
    if let Some(m) = init {
        if m.orders() != orders {
            return Err(Error::InvalidModel(format!(
                "initial model has orders {}, expected {orders}",
                m.orders()
            )));
        }
    }
    let n = spec.horizon();
    let mean_scale = (spec.mean.norm_squared() / n as f64).sqrt();
    let mean_scale = if mean_scale.is_finite() && mean_scale > 0.0 {
        mean_scale
    } else {
        1.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let starts: Vec<RationalModel> = init
        .cloned()
        .into_iter()
        .chain((0..options.restarts).map(|_| random_start(&mut rng, orders, mean_scale)))
        .collect();
    if starts.is_empty() {
        return Err(Error::InvalidConfig("risk minimization needs at least one start".into()));
    }

    let runs: Vec<(RationalModel, StartReport)> = starts
        .par_iter()
        .enumerate()
        .map(|(index, start)| {
            let (model, mut report) = descend(spec, orders, start, &options.descent);
            report.index = index;
            (model, report)
        })
        .collect();

    let best = runs
        .iter()
        .filter(|(_, r)| r.status != DescentStatus::Diverged && r.objective < DIVERGED_OBJECTIVE)
        .fold(None::<&(RationalModel, StartReport)>, |best, run| match best {
            Some(b) if b.1.objective <= run.1.objective => Some(b),
            _ => Some(run),
        })
        .ok_or(Error::AllStartsDiverged { starts: runs.len() })?;

    Ok(Decision {
        model: best.0.clone(),
        objective: best.1.objective,
        risk_constant: spec.constant,
        best_start: best.1.index,
        rank_deficient: spec.rank_deficient,
        starts: runs.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Output-error criterion `1/2 ||y - H g_theta||^2`.
pub fn pem_prediction_error(model: &RationalModel, data: &Dataset) -> f64 {
    let g = impulse_response_unbounded(model, data.len());
    let fit = data.regressor().apply(g.as_slice());
    0.5 * data
        .y
        .iter()
        .zip(&fit)
        .map(|(y, f)| (y - f).powi(2))
        .sum::<f64>()
}

/// Monte Carlo estimate of the expected loss `E[1/2 ||g - g_theta||_W^2]`
/// under `g ~ N(mean, Sigma)`, returned with the closed form
/// `1/2 tr(W Sigma) + 1/2 ||mean - g_theta||_W^2` as `(empirical, analytic)`.
pub fn monte_carlo_risk_check(
    spec: &RiskSpec,
    model: &RationalModel,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let cov = spec
        .covariance
        .as_ref()
        .ok_or_else(|| Error::Factorization("risk spec has no covariance".into()))?;
    let n = spec.horizon();
    let eig = symmetrize(cov.clone()).symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite() || *v < -1e-10 * cov.amax().max(1.0)) {
        return Err(Error::Factorization("covariance is not positive semidefinite".into()));
    }
    // Sigma = S S^T with S = V diag(sqrt(lambda_i)).
    let root = DMatrix::from_fn(n, n, |i, j| {
        eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()
    });
    let g_theta = impulse_response_unbounded(model, n).to_dvector();
    let offset = spec.mean.to_dvector() - &g_theta;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(n);
    let mut total = 0.0;
    for _ in 0..samples {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let d = &offset + &root * &z;
        total += 0.5 * quad_form(&spec.weight, &d);
    }
    let empirical = total / samples.max(1) as f64;
    let analytic = 0.5 * (&spec.weight * cov).trace() + 0.5 * quad_form(&spec.weight, &offset);
    Ok((empirical, analytic))
}
