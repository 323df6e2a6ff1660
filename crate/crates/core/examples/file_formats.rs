//! Round trip through the on-disk formats: model JSON, dataset CSV,
//! hyperparameter JSON and the benchmark tables.
//!
//! ```bash
//! cargo run --release --example file_formats -- /tmp/dsid-demo
//! ```

use std::path::PathBuf;

use decision_sysid::cli::{cmd_benchmark, cmd_report, cmd_simulate, InputKind, SimulateArgs};
use decision_sysid::experiment::BenchmarkConfig;
use decision_sysid::io;
use decision_sysid::kernel::DcHyperParams;
use decision_sysid::lti::RationalModel;

fn main() -> decision_sysid::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dsid-demo".into()));

    let system = RationalModel::new(vec![0.72], vec![-1.28, 0.64], 1)?;
    io::write_json(dir.join("system.json"), &system)?;
    io::write_json(dir.join("eta.json"), &DcHyperParams::new(100.0, 0.8, 0.7, 1.0)?)?;

    let args = SimulateArgs {
        system: dir.join("system.json"),
        n_samples: 8,
        input: InputKind::Impulse,
        input_variance: 1.0,
        noise_variance: 0.0,
        seed: 0,
        out: dir.join("data.csv"),
    };
    cmd_simulate(&args)?;
    print!("{}", io::read_to_string(dir.join("data.csv"))?);

    let mut bench = BenchmarkConfig::vary_n();
    bench.base.replications = 4;
    let out = dir.join("bench");
    cmd_benchmark(&bench, &out)?;
    let cells = cmd_report(&out.join("replications.csv"), &dir.join("report.csv"))?;
    print!("{}", io::read_to_string(dir.join("report.csv"))?);
    println!("{} cells; artifacts in {}", cells.len(), dir.display());
    Ok(())
}
