//! End-to-end checks of the `gradrate` binary.

use std::f64::consts::LOG2_E;
use std::path::Path;
use std::process::{Command, Output};

use gradrate::cli::{
    BoundaryResults, CeoResults, CornerResults, OutputEnvelope, PlanResults, SampleSummary, SgdResults, SignsgdRow,
    SumrateResults, SweepResults, TraceSummary, Units,
};
use serde::de::DeserializeOwned;
use serde_json::Value;

fn gradrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradrate"))
        .args(args)
        .env_remove("GRADRATE_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = gradrate(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn envelope<T: DeserializeOwned>(args: &[&str]) -> OutputEnvelope<T> {
    serde_json::from_str(&stdout(args)).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SUMRATE: [&str; 9] = [
    "sumrate",
    "--sigma-x2",
    "1",
    "--sigma-n2",
    "1",
    "--workers",
    "10",
    "--distortion",
    "0.2",
];

#[test]
fn sumrate_reports_bits_by_default() {
    let env: OutputEnvelope<SumrateResults> = envelope(&SUMRATE);
    assert_eq!(env.command, "sumrate");
    assert_eq!(env.units, Units::Bits);
    assert_eq!(env.seed, None);
    assert!((env.results.sum_rate - 6.292_481_25).abs() < 1e-8);
    assert!((env.results.sum_rate - 6.2928).abs() < 5e-4);
    assert_eq!(env.parameters["workers"], 10);
}

#[test]
fn infeasible_distortion_exits_2_and_names_the_bound() {
    let mut args = SUMRATE.to_vec();
    args[8] = "0.05";
    let out = gradrate(&args);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("minimum feasible distortion 0.1"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(gradrate(&["sumrate", "--sigma-x2", "1"]).status.code(), Some(1));
    assert_eq!(gradrate(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        gradrate(&[
            "sumrate",
            "--sigma-x2",
            "x",
            "--sigma-n2",
            "1",
            "--workers",
            "2",
            "--distortion",
            "1"
        ])
        .status
        .code(),
        Some(1)
    );
    let help = gradrate(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("sweep-rho"));
    // Invalid but parseable parameters are usage errors too.
    assert_eq!(
        gradrate(&[
            "sumrate",
            "--sigma-x2",
            "-1",
            "--sigma-n2",
            "1",
            "--workers",
            "2",
            "--distortion",
            "1"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn solver_cap_exits_3() {
    let out = gradrate(&[
        "boundary",
        "--sigma-x2",
        "1",
        "--noise-var",
        "1,2,3",
        "--weights",
        "1,2,3",
        "--distortion",
        "0.6",
        "--max-steps",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
}

/// Numbers under a path containing one of `rate_keys` differ by log2(e)
/// between `bits` and `nats`; all other values are equal.
fn assert_scaled(bits: &Value, nats: &Value, rate_keys: &[&str], key: &str) {
    match (bits, nats) {
        (Value::Object(b), Value::Object(n)) => {
            for (k, v) in b {
                assert_scaled(v, &n[k], rate_keys, &format!("{key}.{k}"));
            }
        }
        (Value::Array(b), Value::Array(n)) => b.iter().zip(n).for_each(|(b, n)| assert_scaled(b, n, rate_keys, key)),
        (Value::Number(b), Value::Number(n)) => {
            let (b, n) = (b.as_f64().unwrap(), n.as_f64().unwrap());
            if key.split('.').any(|c| rate_keys.contains(&c)) {
                assert!((b - n * LOG2_E).abs() <= 1e-15 * b.abs(), "{key}: {b} vs {n}");
            } else {
                assert_eq!(b, n, "{key}");
            }
        }
        (b, n) => assert_eq!(b, n, "{key}"),
    }
}

fn results(args: &[&str], units: &str) -> Value {
    let mut full = vec!["--units", units];
    full.extend_from_slice(args);
    let v: Value = serde_json::from_str(&stdout(&full)).unwrap();
    assert_eq!(v["units"], units);
    v["results"].clone()
}

#[test]
fn units_differ_by_log2e() {
    let cases: [(&[&str], &[&str]); 4] = [
        (&SUMRATE, &["sum_rate", "independent_sum_rate", "correlation_gain"]),
        (
            &["corner", "--sigma-x2", "1", "--noise-var", "1,2", "--rates", "0.5,0.7"],
            &["rates", "sum_rate"],
        ),
        (
            &[
                "plan",
                "--workers",
                "10",
                "--sigma-x2",
                "1",
                "--sigma-n2",
                "1",
                "--distortion",
                "0.5",
                "--model-dim",
                "100",
            ],
            &["per_iteration_cost", "total_cost"],
        ),
        (
            &["signsgd", "--workers", "10", "--sigma-x2", "1", "--sigma-n2", "1"],
            &["signsgd_rate", "ideal_quant_rate", "r_sum", "r_in"],
        ),
    ];
    for (args, keys) in cases {
        assert_scaled(&results(args, "bits"), &results(args, "nats"), keys, "");
    }
    let boundary = [
        "boundary",
        "--sigma-x2",
        "1",
        "--noise-var",
        "1,2",
        "--weights",
        "1,2",
        "--distortion",
        "0.8",
    ];
    assert_scaled(
        &results(&boundary, "bits"),
        &results(&boundary, "nats"),
        &["noise_rates", "rates", "rates_per_layer", "objective"],
        "",
    );
}

#[test]
fn every_command_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write(
        dir.path(),
        "trace.csv",
        "iteration,sigma_x2,sigma_n2\n0,1.0,2.0\n1,0.8,1.5\n2,0.5,1.0\n",
    );
    let mut global = String::new();
    let mut local = [String::new(), String::new()];
    for i in 0..40 {
        let x: Vec<f64> = (0..4).map(|j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0).collect();
        global.push_str(&x.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        global.push('\n');
        for (k, l) in local.iter_mut().enumerate() {
            let y: Vec<String> = x
                .iter()
                .enumerate()
                .map(|(j, v)| (v + (((i + j + k) * 5) % 7) as f64 / 7.0 - 0.4).to_string())
                .collect();
            l.push_str(&y.join(","));
            l.push('\n');
        }
    }
    write(dir.path(), "g.csv", &global);
    write(dir.path(), "w0.csv", &local[0]);
    write(dir.path(), "w1.csv", &local[1]);
    let header = write(
        dir.path(),
        "samples.toml",
        "iteration = 7\nglobal = \"g.csv\"\nlayer_sizes = [3, 1]\n\n[[worker]]\nindex = 0\npath = \"w0.csv\"\n\n[[worker]]\nindex = 1\npath = \"w1.csv\"\n",
    );

    let s: OutputEnvelope<SumrateResults> = envelope(&[
        "sumrate",
        "--sigma-x2",
        "1",
        "--noise-var",
        "1,2,4",
        "--distortion",
        "0.7",
    ]);
    assert_eq!(s.results.z.unwrap().len(), 3);
    let c: OutputEnvelope<CornerResults> = envelope(&[
        "corner",
        "--sigma-x2",
        "1",
        "--noise-var",
        "1,2",
        "--rates",
        "0.5,0.7",
        "--weights",
        "1,3",
    ]);
    assert_eq!(c.results.order, vec![1, 0]);
    let b: OutputEnvelope<BoundaryResults> = envelope(&[
        "boundary",
        "--sigma-x2",
        "1,2",
        "--noise-var",
        "1,2;1,3",
        "--distortion",
        "2.0",
    ]);
    assert!(b.results.kkt_residual <= 1e-6);
    assert_eq!(b.results.layer_distortions.len(), 2);
    let a: OutputEnvelope<BoundaryResults> = envelope(&[
        "allocate",
        "--sigma-x2",
        "1",
        "--noise-var",
        "1,2",
        "--costs",
        "1,2",
        "--distortion",
        "0.8",
    ]);
    assert_eq!(a.command, "allocate");
    let p: OutputEnvelope<PlanResults> = envelope(&[
        "plan",
        "--workers",
        "10",
        "--sigma-x2",
        "1",
        "--sigma-n2",
        "1",
        "--grid",
        "0.11,100,20",
    ]);
    assert!(p.results.optimal_distortion.is_some());
    let t: OutputEnvelope<PlanResults> = envelope(&["plan", "--workers", "4", "--trace", &trace, "--rho", "1"]);
    assert_eq!(t.results.iterations, 3);
    let z: OutputEnvelope<PlanResults> = envelope(&["plan", "--workers", "4", "--trace", &trace, "--rho", "0"]);
    assert!(z.results.unbounded && z.results.total_cost.is_none());
    let g: OutputEnvelope<SignsgdRow> = envelope(&["signsgd", "--workers", "10", "--sigma-x2", "1", "--sigma-n2", "1"]);
    assert!((g.results.signsgd_distortion - 0.172_676).abs() < 1e-6);
    let gt: OutputEnvelope<Vec<SignsgdRow>> = envelope(&["signsgd", "--workers", "10", "--trace", &trace]);
    assert_eq!(gt.results.len(), 3);
    let ceo: OutputEnvelope<CeoResults> = envelope(&[
        "simulate-ceo",
        "--sigma-x2",
        "1",
        "--noise-var",
        "1,2",
        "--rates",
        "0.5,0.7",
        "--samples",
        "10000",
        "--seed",
        "3",
    ]);
    assert_eq!(ceo.seed, Some(3));
    assert_eq!(ceo.results.report.samples, 10_000);
    let sgd: OutputEnvelope<SgdResults> =
        envelope(&["simulate-sgd", "--rho", "1", "--max-iters", "200", "--seed", "4"]);
    assert_eq!(sgd.seed, Some(4));
    assert!(sgd.results.loss_history.is_some());
    let sweep: OutputEnvelope<SweepResults> = envelope(&[
        "sweep-rho",
        "--rho",
        "0,1",
        "--replicates",
        "2",
        "--max-iters",
        "300",
        "--seed",
        "5",
    ]);
    assert_eq!(sweep.results.rows.len(), 2);
    assert!(sweep.results.rows[0].mean_rate_bits.is_none());
    let st: OutputEnvelope<TraceSummary> = envelope(&["stats", "--trace", &trace]);
    assert_eq!(st.results.entries, 3);
    let ss: OutputEnvelope<SampleSummary> = envelope(&["stats", "--samples", &header, "--bins", "5"]);
    assert_eq!(ss.results.stats.iteration, 7);
    assert_eq!(ss.results.noise_correlation.len(), 2);
}

#[test]
fn sweep_is_deterministic_for_a_seed() {
    let args = ["sweep-rho", "--rho", "0,1,10,100", "--seed", "7", "--max-iters", "3000"];
    let a = gradrate(&args);
    let b = gradrate(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stderr).contains("seed: 7"));
}

#[test]
fn generated_seed_is_printed() {
    let out = gradrate(&[
        "simulate-ceo",
        "--sigma-x2",
        "1",
        "--noise-var",
        "1",
        "--rates",
        "1",
        "--samples",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    let seed: u64 = err
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .unwrap()
        .parse()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], seed);
}

#[test]
fn csv_output_and_output_directory() {
    let csv = stdout(&[
        "--format",
        "csv",
        "sweep-rho",
        "--rho",
        "0,1",
        "--replicates",
        "1",
        "--max-iters",
        "100",
        "--seed",
        "1",
    ]);
    assert!(csv.starts_with("rho,median_iterations,mean_rate_bits,converged_fraction\n"));
    assert!(csv.lines().nth(1).unwrap().starts_with("0,") && csv.lines().nth(1).unwrap().contains(",inf,"));
    let kv = stdout(&[
        "--format",
        "csv",
        "sumrate",
        "--sigma-x2",
        "1",
        "--sigma-n2",
        "1",
        "--workers",
        "10",
        "--distortion",
        "0.2",
    ]);
    assert!(kv.starts_with("key,value\n") && kv.contains("sum_rate,6.29248"));

    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gradrate"))
        .args(["--output", "sum.json"])
        .args(SUMRATE)
        .env("GRADRATE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("sum.json")).unwrap();
    let env: OutputEnvelope<SumrateResults> = serde_json::from_str(&text).unwrap();
    assert_eq!(env.command, "sumrate");
}

#[test]
fn library_entry_point_matches_binary() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let args: Vec<&str> = std::iter::once("gradrate").chain(SUMRATE).collect();
    assert_eq!(gradrate::cli::run(args, &mut out, &mut err), 0);
    assert_eq!(String::from_utf8(out).unwrap(), stdout(&SUMRATE));
}
