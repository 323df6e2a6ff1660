//! Discrete-time SISO linear time-invariant systems.
//!
//! A rational output-error model is
//!
//! ```text
//!          b_0 q^{-nk} + b_1 q^{-nk-1} + ... + b_nb q^{-nk-nb}
//! G(q) = -----------------------------------------------------
//!                1 + f_1 q^{-1} + ... + f_nf q^{-nf}
//! ```
//!
//! Its impulse response is obtained from the long-division recursion
//! `g(k) + sum_i f_i g(k-i) = b_{k-nk}`, which is exact and costs
//! `O(T * nf)`. Data use 1-based time (`t = 1..N`), impulse responses are
//! stored 0-based (`g(0)` first); [`ToeplitzRegressor`] is the only place
//! where the two conventions meet.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude above which an impulse-response coefficient counts as diverged.
pub const DIVERGENCE_CAP: f64 = 1e12;

/// Polynomial orders of a rational model: `nb + 1` numerator coefficients,
/// `nf` denominator coefficients and an input delay of `nk` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrders {
    pub nb: usize,
    pub nf: usize,
    pub nk: usize,
}

impl ModelOrders {
    pub fn new(nb: usize, nf: usize, nk: usize) -> Self {
        Self { nb, nf, nk }
    }

    /// Length of the flat parameter vector `[b_0..b_nb, f_1..f_nf]`.
    pub fn n_params(&self) -> usize {
        self.nb + 1 + self.nf
    }
}

impl fmt::Display for ModelOrders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.nb, self.nf, self.nk)
    }
}

impl FromStr for ModelOrders {
    type Err = Error;

    /// Parses `"nb,nf,nk"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidConfig(format!("orders {s:?}: {e}")))?;
        match parts.as_slice() {
            [nb, nf, nk] => Ok(Self::new(*nb, *nf, *nk)),
            _ => Err(Error::InvalidConfig(format!(
                "orders {s:?}: expected three comma-separated integers nb,nf,nk"
            ))),
        }
    }
}

/// Rational transfer function `B(q)/F(q)` with a monic denominator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalModel {
    /// Numerator coefficients `b_0..b_nb`.
    pub b: Vec<f64>,
    /// Denominator coefficients `f_1..f_nf`; the leading 1 is implied.
    pub f: Vec<f64>,
    /// Input delay in samples.
    pub nk: usize,
}

impl RationalModel {
    pub fn new(b: Vec<f64>, f: Vec<f64>, nk: usize) -> Result<Self> {
        let model = Self { b, f, nk };
        model.validate()?;
        Ok(model)
    }

    /// Finite impulse response model `b_0 q^{-nk} + ... + b_nb q^{-nk-nb}`.
    pub fn fir(b: Vec<f64>, nk: usize) -> Result<Self> {
        Self::new(b, Vec::new(), nk)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.is_empty() {
            return Err(Error::InvalidModel(
                "numerator needs at least one coefficient".into(),
            ));
        }
        if self.b.iter().chain(&self.f).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn orders(&self) -> ModelOrders {
        ModelOrders::new(self.b.len() - 1, self.f.len(), self.nk)
    }

    /// Flat parameter vector `[b_0..b_nb, f_1..f_nf]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.b.iter().chain(&self.f).copied().collect()
    }

    /// Inverse of [`RationalModel::flatten`].
    pub fn from_flat(orders: ModelOrders, theta: &[f64]) -> Result<Self> {
        if theta.len() != orders.n_params() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                got: theta.len(),
                expected: orders.n_params(),
            });
        }
        let (b, f) = theta.split_at(orders.nb + 1);
        Self::new(b.to_vec(), f.to_vec(), orders.nk)
    }

    /// `B(1)/F(1)`, the sum of all impulse-response coefficients of a
    /// stable model.
    pub fn static_gain(&self) -> f64 {
        let num: f64 = self.b.iter().sum();
        let den: f64 = 1.0 + self.f.iter().sum::<f64>();
        num / den
    }
}

/// The first `T` coefficients `g(0), ..., g(T-1)` of an impulse response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImpulseResponse {
    coeffs: Vec<f64>,
}

impl ImpulseResponse {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn from_dvector(v: &DVector<f64>) -> Self {
        Self::new(v.iter().copied().collect())
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coeffs)
    }

    pub fn norm_squared(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum()
    }

    /// Returns the first `len` coefficients, zero-padded if needed.
    pub fn truncated(&self, len: usize) -> Self {
        let mut coeffs: Vec<f64> = self.coeffs.iter().take(len).copied().collect();
        coeffs.resize(len, 0.0);
        Self::new(coeffs)
    }
}

impl std::ops::Index<usize> for ImpulseResponse {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.coeffs[k]
    }
}

/// Input/output records `(u(t), y(t))`, `t = 1..N`; `u(t) = 0` for `t <= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::InvalidConfig("dataset must contain at least one sample".into()));
        }
        if u.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "output record",
                got: y.len(),
                expected: u.len(),
            });
        }
        Ok(Self { u, y })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn regressor(&self) -> ToeplitzRegressor {
        build_toeplitz(&self.u)
    }

    pub fn y_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }
}

/// Lower-triangular Toeplitz convolution matrix `H`, `H[i][j] = u(i - j + 1)`
/// for `j <= i` (1-based), so that `y = H g` for noise-free data.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzRegressor {
    input: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl ToeplitzRegressor {
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.input.len()
    }

    /// `H` is invertible iff `u(1) != 0`.
    pub fn is_invertible(&self) -> bool {
        self.input[0] != 0.0
    }

    /// `H g` evaluated as a causal convolution of the first `N` coefficients.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        convolve_causal(g, &self.input)
    }
}

/// Builds the `N x N` lower-triangular Toeplitz regressor of an input record.
///
/// # Panics
///
/// Panics if `u` is empty.
pub fn build_toeplitz(u: &[f64]) -> ToeplitzRegressor {
    assert!(!u.is_empty(), "input record must be nonempty");
    let n = u.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| if j <= i { u[i - j] } else { 0.0 });
    ToeplitzRegressor {
        input: u.to_vec(),
        matrix,
    }
}

fn convolve_causal(g: &[f64], u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|i| {
            g.iter()
                .take(i + 1)
                .enumerate()
                .map(|(k, gk)| gk * u[i - k])
                .sum()
        })
        .collect()
}

/// Runs `x` through `1/F(q)`: `v(k) = x(k) - sum_i f_i v(k-i)`.
fn filter_denominator(f: &[f64], x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut acc = x[k];
        for (i, fi) in f.iter().enumerate() {
            let lag = i + 1;
            if lag > k {
                break;
            }
            acc -= fi * v[k - lag];
        }
        v.push(acc);
    }
    v
}

fn check_divergence(values: &[f64]) -> Result<()> {
    match values
        .iter()
        .position(|v| !v.is_finite() || v.abs() > DIVERGENCE_CAP)
    {
        Some(k) => Err(Error::Diverged {
            k,
            value: values[k].abs(),
        }),
        None => Ok(()),
    }
}

fn numerator_sequence(model: &RationalModel, len: usize) -> Vec<f64> {
    let mut x = vec![0.0; len];
    for (m, bm) in model.b.iter().enumerate() {
        if let Some(slot) = x.get_mut(model.nk + m) {
            *slot = *bm;
        }
    }
    x
}

/// First `len` impulse-response coefficients without the divergence guard.
/// Unstable models may produce very large or non-finite values.
pub fn impulse_response_unbounded(model: &RationalModel, len: usize) -> ImpulseResponse {
    ImpulseResponse::new(filter_denominator(&model.f, &numerator_sequence(model, len)))
}

/// First `len` impulse-response coefficients of `B/F`.
///
/// Fails with [`Error::Diverged`] if any coefficient exceeds
/// [`DIVERGENCE_CAP`] in magnitude.
pub fn impulse_response(model: &RationalModel, len: usize) -> Result<ImpulseResponse> {
    assert!(len >= 1, "impulse response length must be positive");
    let g = impulse_response_unbounded(model, len);
    check_divergence(g.as_slice())?;
    Ok(g)
}

/// Impulse response together with its sensitivities `d g(k) / d theta_p`,
/// columns ordered as [`RationalModel::flatten`].
pub fn impulse_response_with_jacobian(
    model: &RationalModel,
    len: usize,
) -> Result<(ImpulseResponse, DMatrix<f64>)> {
    let g = impulse_response(model, len)?;
    let orders = model.orders();
    let mut jac = DMatrix::zeros(len, orders.n_params());

    // b_m: s(k) = h(k - nk - m), h the impulse response of 1/F.
    let mut delta = vec![0.0; len];
    delta[0] = 1.0;
    let h = filter_denominator(&model.f, &delta);
    check_divergence(&h)?;
    for m in 0..=orders.nb {
        let shift = orders.nk + m;
        for k in shift..len {
            jac[(k, m)] = h[k - shift];
        }
    }

    // f_j: s(k) = -v(k - j), v = g filtered through 1/F.
    if orders.nf > 0 {
        let v = filter_denominator(&model.f, g.as_slice());
        check_divergence(&v)?;
        for j in 1..=orders.nf {
            let col = orders.nb + j;
            for k in j..len {
                jac[(k, col)] = -v[k - j];
            }
        }
    }
    Ok((g, jac))
}

/// Sensitivity matrix of the first `len` impulse-response coefficients.
pub fn impulse_response_jacobian(model: &RationalModel, len: usize) -> Result<DMatrix<f64>> {
    impulse_response_with_jacobian(model, len).map(|(_, jac)| jac)
}

/// Noise-free output `H g` plus an optional disturbance record.
pub fn simulate(g: &ImpulseResponse, u: &[f64], noise: Option<&[f64]>) -> Result<Vec<f64>> {
    if g.len() != u.len() {
        return Err(Error::LengthMismatch {
            what: "impulse response",
            got: g.len(),
            expected: u.len(),
        });
    }
    let mut y = convolve_causal(g.as_slice(), u);
    if let Some(e) = noise {
        if e.len() != u.len() {
            return Err(Error::LengthMismatch {
                what: "noise record",
                got: e.len(),
                expected: u.len(),
            });
        }
        y.iter_mut().zip(e).for_each(|(yi, ei)| *yi += ei);
    }
    Ok(y)
}

/// Draws `n` i.i.d. zero-mean Gaussian samples of the given variance.
pub fn white_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> Vec<f64> {
    let sd = variance.max(0.0).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect()
}

/// Seeded white Gaussian noise; identical seeds give identical records.
pub fn sample_white_noise(n: usize, variance: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    white_noise(&mut rng, n, variance)
}
