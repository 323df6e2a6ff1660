//! The prediction error method as a risk-minimizing decision: least-squares
//! mean and weight `H^T H`, then a fit of an overparameterized model.
//!
//! ```bash
//! cargo run --release --example pem_decision
//! ```

use decision_sysid::experiment::{identify, normalized_error, IdentifyOptions, Method};
use decision_sysid::lti::{impulse_response, impulse_response_unbounded, sample_white_noise, simulate};
use decision_sysid::lti::{Dataset, ModelOrders, RationalModel};
use decision_sysid::risk::pem_prediction_error;

fn main() -> decision_sysid::Result<()> {
    let system = RationalModel::new(vec![0.72], vec![-1.28, 0.64], 1)?;
    let n = 50;
    let u = sample_white_noise(n, 1.0, 11);
    let e = sample_white_noise(n, 1.0, 12);
    let y = simulate(&impulse_response(&system, n)?, &u, Some(&e))?;
    let data = Dataset::new(u, y)?;

    // Four poles where the truth has two.
    let orders = ModelOrders::new(0, 4, 1);
    let fit = identify(&data, orders, &Method::Pem, &IdentifyOptions::default())?;
    let model = &fit.decision.model;
    println!("decision: b = {:?}, f = {:?}", model.b, model.f);
    println!("risk objective       {:.6}", fit.decision.objective);
    println!("prediction error     {:.6}", pem_prediction_error(model, &data));
    println!("best of {} starts: #{}", fit.decision.starts.len(), fit.decision.best_start);

    let truth = impulse_response(&system, 100)?;
    let mean_err = normalized_error(&truth.truncated(n), &fit.posterior.mean)?;
    let dec_err = normalized_error(&truth, &impulse_response_unbounded(model, 100))?;
    println!("log10 relative error: least-squares mean {mean_err:.3}, decision {dec_err:.3}");
    Ok(())
}
