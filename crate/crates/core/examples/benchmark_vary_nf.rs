//! Monte Carlo comparison of PEM and BRM for model orders nf = 2, 4, 8 at N = 60.
//!
//! ```bash
//! cargo run --release --example benchmark_vary_nf -- 100
//! ```
//!
//! The optional argument is the number of replications per cell (default 20).

use std::time::Instant;

use decision_sysid::experiment::{benchmark_suite, plot_data_csv, BenchmarkConfig};

fn main() -> decision_sysid::Result<()> {
    let replications = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(20);
    let mut config = BenchmarkConfig::vary_nf();
    config.base.replications = replications;

    let start = Instant::now();
    let cells = benchmark_suite(&config)?;
    print!("{}", plot_data_csv(&cells));
    for c in &cells {
        println!(
            "{:>4} nf={:<3} fraction above 0: {:.2}  failed: {}",
            c.method,
            c.nf,
            c.fraction_above(0.0),
            c.failed
        );
    }
    eprintln!("{} replications per cell in {:.1?}", replications, start.elapsed());
    Ok(())
}
