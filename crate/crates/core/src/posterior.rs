//! Posterior summaries `(mean, weight, covariance)` of the impulse response
//! that feed the risk.
//!
//! * [`ls_summary`]: least-squares mean `H^+ y` with weight `H^T H`
//!   (noise variance set to one; it does not change the decision).
//! * [`gaussian_posterior`]: conditional mean and precision under the prior
//!   `g ~ N(0, K)` and white noise of variance `lambda`.
//!
//! Every summary also carries a factor `F` with `F^T F = W` and the
//! whitened target `F mean`, so that `||mean - g||_W^2 = ||F mean - F g||^2`
//! can be evaluated without forming `W` or cancelling large terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::linalg::{cholesky_jittered, spd_inverse, symmetrize};
use crate::lti::{ImpulseResponse, ToeplitzRegressor};

/// Relative singular-value cutoff of the least-squares pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Whitened form of a weighted norm: `||m - g||_W^2 = ||target - factor g||^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFactor {
    pub factor: DMatrix<f64>,
    pub target: DVector<f64>,
}

impl WeightFactor {
    /// Factor of an arbitrary PSD weight from its eigendecomposition.
    pub fn from_weight(weight: &DMatrix<f64>, mean: &DVector<f64>) -> Self {
        let eig = symmetrize(weight.clone()).symmetric_eigen();
        let n = weight.nrows();
        let factor = DMatrix::from_fn(n, n, |i, j| {
            eig.eigenvalues[i].max(0.0).sqrt() * eig.eigenvectors[(j, i)]
        });
        let target = &factor * mean;
        Self { factor, target }
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub mean: ImpulseResponse,
    /// Precision-like weight `W` (symmetric PSD).
    pub weight: DMatrix<f64>,
    /// `W^{-1}` when it exists.
    pub covariance: Option<DMatrix<f64>>,
    /// The least-squares regressor was rank deficient.
    pub rank_deficient: bool,
    pub whitened: WeightFactor,
}

impl PosteriorSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `2 sqrt(diag(W^{-1}))`, defined only when `W` is invertible.
    pub fn band(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|cov| cov.diagonal().iter().map(|v| 2.0 * v.max(0.0).sqrt()).collect())
    }

    pub fn report(&self) -> PosteriorReport {
        PosteriorReport {
            mean: self.mean.as_slice().to_vec(),
            band: self.band(),
            rank_deficient: self.rank_deficient,
        }
    }
}

/// Serialized view of a posterior summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub band: Option<Vec<f64>>,
    #[serde(default)]
    pub rank_deficient: bool,
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

/// Least-squares summary: `mean = H^+ y`, `W = H^T H`,
/// covariance `(H^T H)^{-1}` when `H` has full rank.
pub fn ls_summary(h: &ToeplitzRegressor, y: &DVector<f64>) -> Result<PosteriorSummary> {
    check_dims(h, y)?;
    let hm = h.matrix();
    let n = h.dim();
    let svd = hm.clone().svd(true, true);
    let (u, v_t) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Factorization("SVD of regressor".into())),
    };
    let sigma_max = svd.singular_values.max();
    let cutoff = PINV_CUTOFF * sigma_max;
    let kept: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] > cutoff)
        .collect();
    let rank_deficient = kept.len() < n;

    let mut mean = DVector::zeros(n);
    let mut target = DVector::zeros(n);
    for &i in &kept {
        let ui = u.column(i);
        let coef = ui.dot(y);
        mean += v_t.row(i).transpose() * (coef / svd.singular_values[i]);
        target += ui * coef;
    }
    let covariance = (!rank_deficient).then(|| {
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            let vi = v_t.row(i).transpose();
            cov += &vi * vi.transpose() / svd.singular_values[i].powi(2);
        }
        symmetrize(cov)
    });

    Ok(PosteriorSummary {
        mean: ImpulseResponse::from_dvector(&mean),
        weight: symmetrize(hm.transpose() * hm),
        covariance,
        rank_deficient,
        whitened: WeightFactor {
            factor: hm.clone(),
            target,
        },
    })
}

/// Gaussian posterior of the impulse response given `y = H g + e`,
/// `g ~ N(0, K)`, `e ~ N(0, lambda I)`.
///
/// DC kernels are handled in the scaled information form
/// `P = R^{-1}/c + D H^T H D / lambda`, `Sigma = D P^{-1} D`; other kernels
/// in the data-space form (see [`data_space_form`]) with `W` recovered
/// from `Sigma` by a symmetric solve.
pub fn gaussian_posterior(
    kernel: &KernelMatrix,
    lambda: f64,
    h: &ToeplitzRegressor,
    y: &DVector<f64>,
) -> Result<PosteriorSummary> {
    check_dims(h, y)?;
    if kernel.dim() != h.dim() {
        return Err(Error::LengthMismatch {
            what: "kernel matrix",
            got: kernel.dim(),
            expected: h.dim(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidHyperParams(format!("noise variance {lambda}")));
    }
    let Some(dc) = kernel.dc_structure() else {
        let (mean, covariance) = data_space_form(kernel, lambda, h, y)?;
        let weight = spd_inverse(&covariance)?;
        let whitened = WeightFactor::from_weight(&weight, &mean);
        return Ok(PosteriorSummary {
            mean: ImpulseResponse::from_dvector(&mean),
            weight,
            covariance: Some(covariance),
            rank_deficient: false,
            whitened,
        });
    };

    let n = h.dim();
    let hm = h.matrix();
    let gram = hm.transpose() * hm;
    let hty = hm.transpose() * y;
    let d = dc.sqrt_decay(n);
    let rinv = dc.correlation_precision(n);
    let p = DMatrix::from_fn(n, n, |i, j| {
        rinv[(i, j)] / dc.c + d[i] * d[j] * gram[(i, j)] / lambda
    });
    let chol = cholesky_jittered(&p)?;
    let w = chol.solve(&DVector::from_fn(n, |i, _| d[i] * hty[i] / lambda));
    let mean = DVector::from_fn(n, |i, _| d[i] * w[i]);
    let p_inv = chol.inverse();
    let covariance = symmetrize(DMatrix::from_fn(n, n, |i, j| d[i] * p_inv[(i, j)] * d[j]));
    let weight = symmetrize(kernel.precision()? + &gram / lambda);

    // F = [H / sqrt(lambda); B D^{-1} / sqrt(c)], target F mean = [H mean / sqrt(lambda); B w / sqrt(c)].
    let root_lambda = lambda.sqrt();
    let kernel_factor = kernel.whitening()?;
    let mut factor = DMatrix::zeros(2 * n, n);
    factor.rows_mut(0, n).copy_from(&(hm / root_lambda));
    factor.rows_mut(n, n).copy_from(&kernel_factor);
    let mut target = DVector::zeros(2 * n);
    target.rows_mut(0, n).copy_from(&(hm * &mean / root_lambda));
    target
        .rows_mut(n, n)
        .copy_from(&(dc.correlation_whitening(n) * &w / dc.c.sqrt()));

    Ok(PosteriorSummary {
        mean: ImpulseResponse::from_dvector(&mean),
        weight,
        covariance: Some(covariance),
        rank_deficient: false,
        whitened: WeightFactor { factor, target },
    })
}

/// Data-space posterior: `mean = K H^T S^{-1} y`,
/// `Sigma = K - K H^T S^{-1} H K`, `S = lambda I + H K H^T`.
pub fn data_space_form(
    kernel: &KernelMatrix,
    lambda: f64,
    h: &ToeplitzRegressor,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dims(h, y)?;
    let k = kernel.matrix();
    let hm = h.matrix();
    let kht = k * hm.transpose();
    let mut s = hm * &kht;
    for i in 0..s.nrows() {
        s[(i, i)] += lambda;
    }
    let chol = cholesky_jittered(&symmetrize(s))?;
    let mean = &kht * chol.solve(y);
    let covariance = symmetrize(k - &kht * chol.solve(&kht.transpose()));
    Ok((mean, covariance))
}

/// Information form: `W = K^{-1} + H^T H / lambda`,
/// `mean = W^{-1} H^T y / lambda`, `Sigma = W^{-1}`.
/// Returns `(mean, weight, covariance)`.
pub fn information_form(
    kernel: &KernelMatrix,
    lambda: f64,
    h: &ToeplitzRegressor,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_dims(h, y)?;
    let hm = h.matrix();
    let weight = symmetrize(kernel.precision()? + hm.transpose() * hm / lambda);
    let chol = cholesky_jittered(&weight)?;
    let mean = chol.solve(&(hm.transpose() * y / lambda));
    let covariance = symmetrize(chol.inverse());
    Ok((mean, weight, covariance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{dc_kernel, DcHyperParams};
    use crate::linalg::spectral_norm;
    use crate::lti::{build_toeplitz, impulse_response, sample_white_noise, simulate, RationalModel};

    fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / b.amax().max(1e-300)
    }

    #[test]
    fn ls_recovers_noise_free_response() {
        // |u(1)| dominates so that H is well conditioned.
        let mut u = sample_white_noise(25, 0.25, 1);
        u[0] = 3.0;
        let m = RationalModel::new(vec![0.72], vec![-1.28, 0.64], 1).unwrap();
        let g = impulse_response(&m, 25).unwrap();
        let y = DVector::from_vec(simulate(&g, &u, None).unwrap());
        let s = ls_summary(&build_toeplitz(&u), &y).unwrap();
        for (a, b) in s.mean.as_slice().iter().zip(g.as_slice()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(!s.rank_deficient);
        assert!(s.band().is_some());
    }

    #[test]
    fn ls_unit_impulse() {
        let mut u = vec![0.0; 6];
        u[0] = 1.0;
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.1, 0.0, 5.0]);
        let s = ls_summary(&build_toeplitz(&u), &y).unwrap();
        assert!((s.mean.to_dvector() - &y).amax() < 1e-14);
        assert!((s.weight.clone() - DMatrix::identity(6, 6)).amax() < 1e-14);
    }

    #[test]
    fn ls_square_solve_reproduces_output() {
        let u = sample_white_noise(12, 1.0, 5);
        let h = build_toeplitz(&u);
        let y = DVector::from_vec(sample_white_noise(12, 1.0, 6));
        let s = ls_summary(&h, &y).unwrap();
        let fit = h.matrix() * s.mean.to_dvector();
        assert!((fit - &y).amax() < 1e-8);
    }

    #[test]
    fn ls_singular_regressor_has_no_covariance() {
        let h = build_toeplitz(&[0.0, 1.0, 0.5]);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let s = ls_summary(&h, &y).unwrap();
        assert!(s.rank_deficient);
        assert!(s.covariance.is_none());
        assert!(s.band().is_none());
        assert!(s.report().band.is_none());
    }

    #[test]
    fn vague_noise_returns_prior() {
        let u = sample_white_noise(8, 1.0, 2);
        let h = build_toeplitz(&u);
        let y = DVector::from_vec(sample_white_noise(8, 1.0, 3));
        let k = dc_kernel(&DcHyperParams::new(2.0, 0.8, 0.5, 1.0).unwrap(), 8).unwrap();
        let s = gaussian_posterior(&k, 1e12, &h, &y).unwrap();
        assert!(s.mean.to_dvector().amax() < 1e-9);
        assert!(rel_diff(s.covariance.as_ref().unwrap(), k.matrix()) < 1e-8);
    }

    #[test]
    fn flat_prior_matches_least_squares() {
        let u = sample_white_noise(10, 1.0, 7);
        let h = build_toeplitz(&u);
        let y = DVector::from_vec(sample_white_noise(10, 1.0, 8));
        let k = KernelMatrix::from_matrix(DMatrix::identity(10, 10) * 1e12).unwrap();
        let bayes = gaussian_posterior(&k, 1.0, &h, &y).unwrap();
        let ls = ls_summary(&h, &y).unwrap();
        let diff = (bayes.mean.to_dvector() - ls.mean.to_dvector()).norm();
        assert!(diff <= 1e-4 * ls.mean.to_dvector().norm());
    }

    #[test]
    fn dc_path_matches_both_reference_forms() {
        let u = sample_white_noise(15, 1.0, 9);
        let h = build_toeplitz(&u);
        let y = DVector::from_vec(sample_white_noise(15, 2.0, 10));
        let p = DcHyperParams::new(1.5, 0.8, 0.6, 0.7).unwrap();
        let k = dc_kernel(&p, 15).unwrap();
        let s = gaussian_posterior(&k, p.lambda, &h, &y).unwrap();
        let (m_ds, cov_ds) = data_space_form(&k, p.lambda, &h, &y).unwrap();
        let (m_if, w_if, cov_if) = information_form(&k, p.lambda, &h, &y).unwrap();
        let mean = s.mean.to_dvector();
        assert!((&mean - &m_ds).amax() <= 1e-8 * m_ds.amax());
        assert!((&mean - &m_if).amax() <= 1e-8 * m_if.amax());
        assert!(rel_diff(s.covariance.as_ref().unwrap(), &cov_ds) < 1e-8);
        assert!(rel_diff(&cov_if, &cov_ds) < 1e-8);
        assert!(rel_diff(&s.weight, &w_if) < 1e-8);

        let wsigma = &s.weight * s.covariance.as_ref().unwrap();
        assert!(spectral_norm(&(wsigma - DMatrix::identity(15, 15))) < 1e-6);
        let kinv = &s.weight - h.matrix().transpose() * h.matrix() / p.lambda;
        let exact = k.precision().unwrap();
        assert!(spectral_norm(&(kinv - &exact)) <= 1e-6 * spectral_norm(&exact));
    }

    #[test]
    fn whitened_target_reproduces_weighted_norm() {
        let u = sample_white_noise(20, 1.0, 13);
        let h = build_toeplitz(&u);
        let y = DVector::from_vec(sample_white_noise(20, 1.0, 14));
        let p = DcHyperParams::new(1.0, 0.7, 0.3, 0.5).unwrap();
        let k = dc_kernel(&p, 20).unwrap();
        let s = gaussian_posterior(&k, p.lambda, &h, &y).unwrap();
        let g = DVector::from_fn(20, |i, _| 0.5 * 0.6_f64.powi(i as i32));
        let d = s.mean.to_dvector() - &g;
        let dense = d.dot(&(&s.weight * &d));
        let whitened = (&s.whitened.target - &s.whitened.factor * &g).norm_squared();
        assert!((dense - whitened).abs() <= 1e-7 * dense);
    }
}
