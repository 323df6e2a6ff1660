//! Two identities behind the method, checked numerically: the prediction
//! error equals the weighted risk up to a constant, and the expected loss
//! under a Gaussian posterior has a closed form.
//!
//! ```bash
//! cargo run --release --example risk_identities
//! ```

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use decision_sysid::lti::{impulse_response, sample_white_noise, simulate, Dataset, ImpulseResponse, RationalModel};
use decision_sysid::posterior::ls_summary;
use decision_sysid::risk::{
    monte_carlo_risk_check, pem_prediction_error, random_stable_denominator, risk_value, RiskSpec,
};

fn main() -> decision_sysid::Result<()> {
    let system = RationalModel::new(vec![0.72], vec![-1.28, 0.64], 1)?;
    let n = 20;
    let u = sample_white_noise(n, 1.0, 1);
    let y = simulate(&impulse_response(&system, n)?, &u, Some(&sample_white_noise(n, 0.5, 2)))?;
    let data = Dataset::new(u, y)?;
    let spec = RiskSpec::from_posterior(&ls_summary(&data.regressor(), &data.y_vector())?);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    println!("prediction error - risk for random stable models:");
    for _ in 0..5 {
        let m = RationalModel::new(vec![1.0, -0.5], random_stable_denominator(&mut rng, 2), 1)?;
        println!("  {:+.3e}", pem_prediction_error(&m, &data) - risk_value(&m, &spec));
    }

    let w = DMatrix::from_fn(5, 5, |i, j| if i == j { 2.0 } else { 0.3 });
    let sigma = DMatrix::from_fn(5, 5, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
    let mean = ImpulseResponse::new(vec![1.0, 0.5, 0.25, 0.0, -0.1]);
    let spec = RiskSpec::new(mean, w, Some(sigma))?;
    let model = RationalModel::new(vec![0.9], vec![-0.4], 0)?;
    let (empirical, analytic) = monte_carlo_risk_check(&spec, &model, 100_000, 4)?;
    println!("expected loss: Monte Carlo {empirical:.5}, closed form {analytic:.5}");
    Ok(())
}
