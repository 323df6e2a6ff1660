//! Impulse response, static gain and parameter Jacobian of a rational model.
//!
//! ```bash
//! cargo run --example impulse_response
//! ```

use decision_sysid::lti::{impulse_response, impulse_response_jacobian, RationalModel};

fn main() -> decision_sysid::Result<()> {
    // Poles at 0.64 +- 0.48i, one sample of delay, static gain 2.
    let model = RationalModel::new(vec![0.72], vec![-1.28, 0.64], 1)?;
    let g = impulse_response(&model, 12)?;
    for (k, v) in g.as_slice().iter().enumerate() {
        println!("g({k:>2}) = {v:>10.6}");
    }
    let long = impulse_response(&model, 2001)?;
    println!("B(1)/F(1) = {:.6}", model.static_gain());
    println!("sum of 2001 coefficients = {:.9}", long.as_slice().iter().sum::<f64>());

    let jac = impulse_response_jacobian(&model, 6)?;
    println!("d g / d [b0 f1 f2] over the first 6 coefficients:\n{jac:.4}");
    Ok(())
}
