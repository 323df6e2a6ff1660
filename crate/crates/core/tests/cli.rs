//! End-to-end runs of the `dsid` binary and its file formats.

use std::path::Path;
use std::process::{Command, Output};

use decision_sysid::cli::IdentifyReport;
use decision_sysid::experiment::{parse_replications_csv, BenchmarkConfig};
use decision_sysid::io;
use decision_sysid::lti::{impulse_response, RationalModel};

fn dsid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsid"))
        .args(args)
        .output()
        .expect("run dsid")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_second_order(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("system.json");
    std::fs::write(&path, r#"{ "b": [0.72], "f": [-1.28, 0.64], "nk": 1 }"#).unwrap();
    path
}

#[test]
fn simulate_impulse_reproduces_impulse_response() {
    let dir = tempfile::tempdir().unwrap();
    let system = write_second_order(dir.path());
    let data = dir.path().join("data.csv");
    let out = dsid(&[
        "simulate", "--system", path_str(&system), "-N", "30", "--input", "impulse",
        "--out", path_str(&data),
    ]);
    ok(&out);
    let dataset = io::read_dataset_csv(&data).unwrap();
    let model: RationalModel = io::read_json(&system).unwrap();
    assert_eq!(dataset.y, impulse_response(&model, 30).unwrap().into_vec());
    assert!(dir.path().join("data.csv.config.json").exists());
}

#[test]
fn simulate_white_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let system = write_second_order(dir.path());
    let run = |name: &str| {
        let p = dir.path().join(name);
        ok(&dsid(&[
            "simulate", "--system", path_str(&system), "-N", "60", "--input-variance", "1",
            "--noise-variance", "1", "--seed", "4", "--out", path_str(&p),
        ]));
        std::fs::read_to_string(p).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert_eq!(a.lines().count(), 61);
    assert_eq!(a.lines().next(), Some("t,u,y"));
}

#[test]
fn identify_pem_on_noise_free_data_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let system = write_second_order(dir.path());
    let data = dir.path().join("data.csv");
    ok(&dsid(&[
        "simulate", "--system", path_str(&system), "-N", "40", "--seed", "2",
        "--out", path_str(&data),
    ]));
    let decision = dir.path().join("decision.json");
    ok(&dsid(&[
        "identify", "--data", path_str(&data), "--orders", "0,2,1", "--method", "pem",
        "--out", path_str(&decision),
    ]));
    let report: IdentifyReport = io::read_json(&decision).unwrap();
    assert!(report.decision.objective <= 1e-8, "{}", report.decision.objective);
    assert!(report.marginal_likelihood.is_none());
    assert!(dir.path().join("decision.json.config.json").exists());
}

#[test]
fn identify_brm_reports_tuned_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let system = write_second_order(dir.path());
    let data = dir.path().join("data.csv");
    ok(&dsid(&[
        "simulate", "--system", path_str(&system), "-N", "50", "--noise-variance", "1",
        "--seed", "3", "--out", path_str(&data),
    ]));
    let decision = dir.path().join("brm.json");
    ok(&dsid(&[
        "identify", "--data", path_str(&data), "--orders", "0,4,1", "--method", "brm",
        "--kernel-init", "100,0.8,0.7", "--seed", "1", "--out", path_str(&decision),
    ]));
    let report: IdentifyReport = io::read_json(&decision).unwrap();
    let ml = report.marginal_likelihood.expect("likelihood report");
    assert!(ml.tuned >= ml.init);
    let eta = report.hyperparams.expect("hyperparameters");
    assert!(eta.alpha > 0.0 && eta.alpha < 1.0);
    assert_eq!(report.posterior.mean.len(), 50);
    assert_eq!(report.posterior.band.as_ref().map(Vec::len), Some(50));
    assert_eq!(report.decision.model.f.len(), 4);
}

#[test]
fn tune_writes_hyperparameter_json() {
    let dir = tempfile::tempdir().unwrap();
    let system = write_second_order(dir.path());
    let data = dir.path().join("data.csv");
    ok(&dsid(&[
        "simulate", "--system", path_str(&system), "-N", "50", "--noise-variance", "1",
        "--out", path_str(&data),
    ]));
    let eta = dir.path().join("eta.json");
    ok(&dsid(&["tune", "--data", path_str(&data), "--out", path_str(&eta)]));
    let v: serde_json::Value = io::read_json(&eta).unwrap();
    for key in ["c", "alpha", "rho", "lambda"] {
        assert!(v[key].is_f64(), "{key} missing in {v}");
    }
}

#[test]
fn missing_input_fails_with_path() {
    let out = dsid(&[
        "identify", "--data", "/no/such/dir/data.csv", "--orders", "0,2,1", "--out", "/tmp/x.json",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/dir/data.csv"));
}

#[test]
fn bad_orders_are_rejected() {
    let out = dsid(&["identify", "--data", "d.csv", "--orders", "1,2", "--out", "o.json"]);
    assert!(!out.status.success());
}

#[test]
fn benchmark_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        "kind = \"vary_n\"\nn_values = [30, 60, 120]\n\n[base]\nreplications = 3\nseed = 5\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        ok(&dsid(&["benchmark", "--config", path_str(&config), "--out", path_str(&out_dir)]));
        out_dir
    };
    let a = run("a");
    let b = run("b");
    let csv_a = std::fs::read(a.join("replications.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("replications.csv")).unwrap());
    assert_eq!(parse_replications_csv(&csv_a[..]).unwrap().len(), 18);

    let summary: serde_json::Value = io::read_json(a.join("summary.json")).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 6);
    let plot = std::fs::read_to_string(a.join("plot_data.csv")).unwrap();
    assert_eq!(plot.lines().count(), 7);
    assert!(plot.starts_with("method,N,nf,count,failed,min,q1,median,q3,max,mean\n"));

    let resolved: BenchmarkConfig = io::read_json(a.join("config.json")).unwrap();
    assert_eq!(resolved.base.replications, 3);
    assert_eq!(resolved.base.seed, 5);

    // The echoed config reproduces the run on its own.
    let c = dir.path().join("c");
    ok(&dsid(&["benchmark", "--config", path_str(&a.join("config.json")), "--out", path_str(&c)]));
    assert_eq!(csv_a, std::fs::read(c.join("replications.csv")).unwrap());

    let report = dir.path().join("report.csv");
    ok(&dsid(&[
        "report", "--replications", path_str(&a.join("replications.csv")), "--out", path_str(&report),
    ]));
    assert_eq!(std::fs::read_to_string(report).unwrap(), plot);
}

#[test]
fn vary_nf_preset_covers_three_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("nf");
    ok(&dsid(&[
        "benchmark", "--preset", "vary-nf", "--replications", "2", "--out", path_str(&out_dir),
    ]));
    let plot = std::fs::read_to_string(out_dir.join("plot_data.csv")).unwrap();
    let cells: Vec<(String, String)> = plot
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    for nf in ["2", "4", "8"] {
        assert_eq!(cells.iter().filter(|(n, f)| n == "60" && f == nf).count(), 2);
    }
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "kind = \"vary_n\"\n\n[base]\nreplicatons = 3\n").unwrap();
    let out = dsid(&["benchmark", "--config", path_str(&config), "--out", path_str(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains("line 4"), "{err}");
}
