//! Regularized decision: tune a DC kernel by marginal likelihood, form the
//! Gaussian posterior and fit a rational model to it. Compares with PEM on
//! the same data.
//!
//! ```bash
//! cargo run --release --example brm_decision
//! ```

use decision_sysid::experiment::{identify, normalized_error, IdentifyOptions, Method};
use decision_sysid::lti::{
    impulse_response, impulse_response_unbounded, sample_white_noise, simulate, Dataset,
    ModelOrders, RationalModel,
};

fn main() -> decision_sysid::Result<()> {
    let system = RationalModel::new(vec![0.41], vec![-1.82, 2.04, -1.27, 0.46], 0)?;
    let n = 60;
    let u = sample_white_noise(n, 1.0, 21);
    let e = sample_white_noise(n, 2.0, 22);
    let y = simulate(&impulse_response(&system, n)?, &u, Some(&e))?;
    let data = Dataset::new(u, y)?;
    let truth = impulse_response(&system, 100)?;
    let orders = ModelOrders::new(0, 8, 0);

    for method in [Method::Pem, Method::Brm] {
        let fit = identify(&data, orders, &method, &IdentifyOptions::default())?;
        let g = impulse_response_unbounded(&fit.decision.model, 100);
        println!("{method}: log10 relative error {:.3}", normalized_error(&truth, &g)?);
        if let (Some(eta), Some(t)) = (fit.hyperparams, &fit.tuning) {
            println!(
                "  c = {:.4}, alpha = {:.4}, rho = {:.4}, lambda = {:.4}",
                eta.c, eta.alpha, eta.rho, eta.lambda
            );
            println!("  log marginal likelihood {:.3} -> {:.3}", t.init_log_likelihood, t.log_likelihood);
        }
        let band = fit.posterior.band();
        if let Some(band) = band {
            println!("  posterior band at k = 0, 5, 10: {:.3} {:.3} {:.3}", band[0], band[5], band[10]);
        } else {
            println!("  no band: weight matrix is singular");
        }
    }
    Ok(())
}
