//! Marginal-likelihood tuning of the DC kernel from the initial guess
//! `(c, alpha, rho) = (100, 0.8, 0.7)`, with the per-start results.
//!
//! ```bash
//! cargo run --release --example tune_dc_kernel
//! ```

use nalgebra::DVector;

use decision_sysid::kernel::{
    initial_noise_variance, tune_hyperparameters, DcHyperParams, TunerOptions,
};
use decision_sysid::lti::{build_toeplitz, impulse_response, sample_white_noise, simulate, RationalModel};

fn main() -> decision_sysid::Result<()> {
    let system = RationalModel::new(vec![0.72], vec![-1.28, 0.64], 1)?;
    let n = 50;
    let u = sample_white_noise(n, 1.0, 5);
    let e = sample_white_noise(n, 1.0, 6);
    let y = DVector::from_vec(simulate(&impulse_response(&system, n)?, &u, Some(&e))?);
    let h = build_toeplitz(&u);

    let init = DcHyperParams::new(100.0, 0.8, 0.7, initial_noise_variance(&h, &y))?;
    let res = tune_hyperparameters(&h, &y, &init, &TunerOptions::default())?;
    for s in &res.starts {
        println!(
            "start {}: log likelihood {:>10.4} after {:>3} iterations ({:?})",
            s.index, s.log_likelihood, s.iterations, s.status
        );
    }
    let p = res.params;
    println!(
        "tuned c = {:.4}, alpha = {:.4}, rho = {:.4}, lambda = {:.4}",
        p.c, p.alpha, p.rho, p.lambda
    );
    println!("log likelihood {:.4} -> {:.4}", res.init_log_likelihood, res.log_likelihood);
    Ok(())
}
