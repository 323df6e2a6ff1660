//! Local descent methods with backtracking (Armijo) line search.
//!
//! [`minimize_bfgs`] is a generic quasi-Newton minimizer used for the
//! hyperparameter search. [`minimize_least_squares`] exploits the
//! `1/2 ||r(x)||^2` structure of the risk: its search direction is the
//! damped Gauss-Newton step `(J^T J + mu I)^{-1} J^T r`, falling back to
//! steepest descent when the line search cannot make progress.
//!
//! Both methods only ever accept iterates that decrease the objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Objective value reported for points where the model cannot be evaluated.
pub const DIVERGED_OBJECTIVE: f64 = 1e30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentOptions {
    pub max_iterations: usize,
    /// Stop when `max|grad| <= gradient_tolerance * (1 + |f|)`.
    pub gradient_tolerance: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentStatus {
    /// Gradient criterion met.
    Converged,
    /// No decrease could be found along any search direction.
    Stalled,
    MaxIterations,
    /// The starting point (and hence every accepted iterate) was not evaluable.
    Diverged,
}

#[derive(Clone, Debug)]
pub struct DescentResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient_inf_norm: f64,
    pub iterations: usize,
    pub status: DescentStatus,
    /// Objective at the start point followed by every accepted iterate.
    pub trace: Vec<f64>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn converged(grad: &DVector<f64>, value: f64, opts: &DescentOptions) -> bool {
    inf_norm(grad) <= opts.gradient_tolerance * (1.0 + value.abs())
}

/// Backtracks from a unit step along `dir`. Returns the accepted point and
/// its value, or `None` if no sufficient decrease was found.
fn backtrack<F>(
    f: &mut F,
    x: &DVector<f64>,
    value: f64,
    slope: f64,
    dir: &DVector<f64>,
    opts: &DescentOptions,
) -> Option<(DVector<f64>, f64)>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    if slope >= 0.0 || !slope.is_finite() {
        return None;
    }
    let mut step = 1.0;
    for _ in 0..=opts.max_backtracks {
        let candidate = x + dir * step;
        let fc = f(&candidate);
        if fc.is_finite() && fc <= value + opts.armijo * step * slope && fc < value {
            return Some((candidate, fc));
        }
        step *= opts.backtrack;
    }
    None
}

/// Quasi-Newton (BFGS inverse-Hessian update) minimization.
///
/// `f` returns the objective, `grad` its gradient at a point whose value is
/// passed along (useful for finite differences).
pub fn minimize_bfgs<F, G>(
    mut f: F,
    mut grad: G,
    x0: DVector<f64>,
    opts: &DescentOptions,
) -> DescentResult
where
    F: FnMut(&DVector<f64>) -> f64,
    G: FnMut(&DVector<f64>, f64) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut value = f(&x);
    let mut trace = vec![value];
    if !value.is_finite() || value >= DIVERGED_OBJECTIVE {
        return DescentResult {
            gradient_inf_norm: f64::INFINITY,
            x,
            value,
            iterations: 0,
            status: DescentStatus::Diverged,
            trace,
        };
    }
    let mut g = grad(&x, value);
    let mut inv_hess = DMatrix::<f64>::identity(n, n);
    let mut status = DescentStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if converged(&g, value, opts) {
            status = DescentStatus::Converged;
            break;
        }
        let mut dir = -(&inv_hess * &g);
        let mut accepted = backtrack(&mut f, &x, value, g.dot(&dir), &dir, opts);
        if accepted.is_none() {
            // Reset curvature and retry along steepest descent.
            inv_hess = DMatrix::identity(n, n);
            dir = -&g;
            accepted = backtrack(&mut f, &x, value, g.dot(&dir), &dir, opts);
        }
        let Some((x_new, value_new)) = accepted else {
            status = DescentStatus::Stalled;
            break;
        };
        iterations += 1;
        let g_new = grad(&x_new, value_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if iterations == 1 {
                inv_hess *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &inv_hess * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 y'Hy + rho) s s'
            inv_hess -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            inv_hess += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        x = x_new;
        value = value_new;
        g = g_new;
        trace.push(value);
    }
    if status == DescentStatus::MaxIterations && converged(&g, value, opts) {
        status = DescentStatus::Converged;
    }
    DescentResult {
        gradient_inf_norm: inf_norm(&g),
        x,
        value,
        iterations,
        status,
        trace,
    }
}

/// Central finite-difference gradient with per-coordinate step
/// `h * max(1, |x_i|)`.
pub fn central_difference_gradient<F>(f: &mut F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        probe[i] = x[i] + step;
        let fp = f(&probe);
        probe[i] = x[i] - step;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Residual vector `r(x)` and its Jacobian `dr/dx`.
pub struct Linearization {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

fn half_sq(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimizes `1/2 ||r(x)||^2` with damped Gauss-Newton steps and Armijo
/// backtracking.
///
/// `residual` returns `None` where the model cannot be evaluated; such
/// points get [`DIVERGED_OBJECTIVE`] so the line search retreats from them.
pub fn minimize_least_squares<R, L>(
    mut residual: R,
    mut linearize: L,
    x0: DVector<f64>,
    opts: &DescentOptions,
) -> DescentResult
where
    R: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
    L: FnMut(&DVector<f64>) -> Option<Linearization>,
{
    let n = x0.len();
    let mut objective = |x: &DVector<f64>| match residual(x) {
        Some(r) if r.iter().all(|v| v.is_finite()) => half_sq(&r).min(DIVERGED_OBJECTIVE),
        _ => DIVERGED_OBJECTIVE,
    };

    let mut x = x0;
    let Some(mut lin) = linearize(&x) else {
        return DescentResult {
            gradient_inf_norm: f64::INFINITY,
            x,
            value: DIVERGED_OBJECTIVE,
            iterations: 0,
            status: DescentStatus::Diverged,
            trace: vec![DIVERGED_OBJECTIVE],
        };
    };
    let mut value = half_sq(&lin.residual);
    let mut trace = vec![value];
    let mut grad = lin.jacobian.transpose() * &lin.residual;
    let mut status = DescentStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if converged(&grad, value, opts) {
            status = DescentStatus::Converged;
            break;
        }
        let jtj = lin.jacobian.transpose() * &lin.jacobian;
        let scale = (jtj.trace() / n as f64).max(f64::MIN_POSITIVE);
        let mut accepted = None;
        for damping in [1e-12, 1e-8, 1e-4, 1e-1, 10.0] {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += damping * scale;
            }
            let Some(chol) = a.cholesky() else { continue };
            let dir = -chol.solve(&grad);
            accepted = backtrack(&mut objective, &x, value, grad.dot(&dir), &dir, opts);
            if accepted.is_some() {
                break;
            }
        }
        if accepted.is_none() {
            let dir = -&grad / scale;
            accepted = backtrack(&mut objective, &x, value, grad.dot(&dir), &dir, opts);
        }
        let Some((x_new, _)) = accepted else {
            status = DescentStatus::Stalled;
            break;
        };
        let Some(lin_new) = linearize(&x_new) else {
            status = DescentStatus::Stalled;
            break;
        };
        iterations += 1;
        x = x_new;
        lin = lin_new;
        value = half_sq(&lin.residual);
        grad = lin.jacobian.transpose() * &lin.residual;
        trace.push(value);
    }
    if status == DescentStatus::MaxIterations && converged(&grad, value, opts) {
        status = DescentStatus::Converged;
    }
    DescentResult {
        gradient_inf_norm: inf_norm(&grad),
        x,
        value,
        iterations,
        status,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &DVector<f64>) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let opts = DescentOptions {
            max_iterations: 2000,
            ..Default::default()
        };
        let res = minimize_bfgs(
            rosenbrock,
            |x, _| {
                DVector::from_vec(vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            },
            DVector::from_vec(vec![-1.2, 1.0]),
            &opts,
        );
        assert!((res.x[0] - 1.0).abs() < 1e-5 && (res.x[1] - 1.0).abs() < 1e-5, "{:?}", res.x);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bfgs_with_finite_differences() {
        let res = minimize_bfgs(
            rosenbrock,
            |x, _| central_difference_gradient(&mut rosenbrock, x, 1e-6),
            DVector::from_vec(vec![-1.2, 1.0]),
            &DescentOptions {
                max_iterations: 2000,
                gradient_tolerance: 1e-6,
                ..Default::default()
            },
        );
        assert!((res.x[0] - 1.0).abs() < 1e-3, "{:?}", res.x);
    }

    #[test]
    fn gauss_newton_fits_exponential() {
        // r_i = a exp(b t_i) - y_i, zero-residual problem.
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|ti| 2.0 * (-1.5 * ti).exp()).collect();
        let res_fn = |x: &DVector<f64>| {
            Some(DVector::from_iterator(
                t.len(),
                t.iter().zip(&y).map(|(ti, yi)| x[0] * (x[1] * ti).exp() - yi),
            ))
        };
        let lin_fn = |x: &DVector<f64>| {
            let residual = res_fn(x)?;
            let jacobian = DMatrix::from_fn(t.len(), 2, |i, j| {
                let e = (x[1] * t[i]).exp();
                if j == 0 {
                    e
                } else {
                    x[0] * t[i] * e
                }
            });
            Some(Linearization { residual, jacobian })
        };
        let res = minimize_least_squares(
            res_fn,
            lin_fn,
            DVector::from_vec(vec![1.0, 0.0]),
            &DescentOptions::default(),
        );
        assert!((res.x[0] - 2.0).abs() < 1e-8 && (res.x[1] + 1.5).abs() < 1e-8, "{:?}", res);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn unevaluable_start_is_reported() {
        let res = minimize_least_squares(
            |_| None,
            |_| None,
            DVector::from_vec(vec![0.0]),
            &DescentOptions::default(),
        );
        assert_eq!(res.status, DescentStatus::Diverged);
    }
}
