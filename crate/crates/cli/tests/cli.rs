use std::path::Path;
use std::process::{Command, Output};

use effdiff::{benchmarks, simulate_ensemble, DiffusivityEstimate, EnsembleConfig, SchemeConfig, SchemeKind};
use serde_json::Value;

fn effdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effdiff")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_SIMULATE: &str = r#"
problem = "benchmark-2d-variable"

[ensemble]
particles = 400
horizon = 0.5
h = 0.01
scheme = "modified-milstein"
seed = 11
histogram_bins = 8
"#;

#[test]
fn reference_on_free_brownian_gives_identity() {
    let out = effdiff(&["reference", "--problem", "free-brownian", "--grid", "32"]);
    let json = stdout_json(&out);
    let a = &json["result"]["a_eff"];
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((a[i][j].as_f64().unwrap() - want).abs() < 1e-12);
        }
    }
}

#[test]
fn simulate_is_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SIMULATE);
    let a = effdiff(&["simulate", "-c", &cfg, "--threads", "1"]);
    let b = effdiff(&["simulate", "-c", &cfg, "--threads", "1"]);
    let c = effdiff(&["simulate", "-c", &cfg, "--threads", "4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let strip_threads =
        |o: &Output| String::from_utf8(o.stdout.clone()).unwrap().replace("\"threads\": 4", "\"threads\": 1");
    assert_eq!(strip_threads(&a), strip_threads(&c));
}

#[test]
fn simulate_summary_round_trips_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SIMULATE);
    let json = stdout_json(&effdiff(&["simulate", "-c", &cfg]));
    let parsed: DiffusivityEstimate = serde_json::from_value(json["result"]["diffusivity"].clone()).unwrap();

    let mut ens = EnsembleConfig::new(400, 0.5, SchemeConfig::new(SchemeKind::ModifiedMilstein, 0.01), 11);
    ens.histogram_bins = 8;
    let direct = simulate_ensemble(&benchmarks::anisotropic_2d(), &ens).unwrap();
    assert_eq!(parsed, direct.diffusivity);
}

#[test]
fn simulate_embeds_resolved_config_and_adjusted_horizon() {
    let out = effdiff(&[
        "simulate",
        "--problem",
        "free-brownian",
        "--particles",
        "50",
        "--horizon",
        "0.104",
        "--step",
        "0.01",
        "--scheme",
        "em",
    ]);
    let json = stdout_json(&out);
    assert_eq!(json["command"], "simulate");
    assert_eq!(json["config"]["problem"], "free-brownian");
    assert_eq!(json["config"]["ensemble"]["particles"], 50);
    assert_eq!(json["config"]["ensemble"]["scheme"], "euler-maruyama");
    assert_eq!(json["resolved"]["steps"], 10);
    assert!((json["resolved"]["effective_horizon"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"horizon\": 1.0400000000000000e-1"), "floats use 17 significant digits");
}

#[test]
fn output_directory_receives_json_and_histogram_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SIMULATE);
    let outdir = dir.path().join("out");
    let out = effdiff(&["simulate", "-c", &cfg, "-o", outdir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(outdir.join("simulate.json")).unwrap(), out.stdout);
    let csv = std::fs::read_to_string(outdir.join("histogram.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y1,y2,density"));
    assert_eq!(lines.count(), 64);
}

#[test]
fn reference_writes_density_and_corrector_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = effdiff(&[
        "reference",
        "--problem",
        "benchmark-2d-variable",
        "--grid",
        "16",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    let json = stdout_json(&out);
    assert_eq!(json["resolved"]["grid_n"], 16);
    let density = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert_eq!(density.lines().next(), Some("y1,y2,r"));
    assert_eq!(density.lines().count(), 1 + 256);
    let chi = std::fs::read_to_string(dir.path().join("corrector.csv")).unwrap();
    assert_eq!(chi.lines().next(), Some("y1,y2,chi1,chi2"));
    let mut rdr = csv::Reader::from_reader(density.as_bytes());
    let mean: f64 = rdr.records().map(|r| r.unwrap()[2].parse::<f64>().unwrap()).sum::<f64>() / 256.0;
    assert!((mean - 1.0).abs() < 1e-12);
}

#[test]
fn converge_writes_golden_header_and_one_slope_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = effdiff(&[
        "converge",
        "--problem",
        "benchmark-2d-constant",
        "--particles",
        "200",
        "--horizon",
        "0.4",
        "--h-list",
        "0.04,0.02,0.01",
        "--schemes",
        "euler-maruyama,modified-milstein",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    let json = stdout_json(&out);
    let studies = json["result"]["studies"].as_array().unwrap();
    assert_eq!(studies.len(), 2);
    assert_eq!(studies[0]["scheme"], "euler-maruyama");
    assert_eq!(json["result"]["reference"]["kind"], "fine-step");
    let csv = std::fs::read_to_string(dir.path().join("converge.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("h,scheme,err_frobenius,err_11,err_12,err_21,err_22,stderr,wallclock"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("4.0000000000000001e-2,euler-maruyama,"));
}

#[test]
fn compare_reports_entrywise_verdict() {
    let out = effdiff(&[
        "compare",
        "--problem",
        "free-brownian",
        "--particles",
        "2000",
        "--horizon",
        "2",
        "--step",
        "0.01",
        "--grid",
        "32",
    ]);
    let json = stdout_json(&out);
    let entries = json["result"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    assert_eq!(json["result"]["pass"], entries.iter().all(|e| e["pass"] == true));
    assert_eq!(json["result"]["pass"], true);
}

#[test]
fn inline_problem_from_expressions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "inline.toml",
        r#"
[problem]
name = "sheared"
drift = ["sin(2*pi*y2)", "0"]
sigma = [["1.0", "0"], ["0", "1.0"]]

[eulerian]
n = 32
"#,
    );
    let json = stdout_json(&effdiff(&["reference", "-c", &cfg]));
    assert_eq!(json["config"]["problem"]["name"], "sheared");
    // A shear along y₁ leaves the transverse entry at A₂₂ = ½.
    let a22 = json["result"]["a_eff"][1][1].as_f64().unwrap();
    assert!((a22 - 0.5).abs() < 1e-9);
}

#[test]
fn config_errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.toml", "problem = \"free-brownian\"\n[ensemble]\nparticels = 10\n");
    let out = effdiff(&["simulate", "-c", &typo]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("particels"), "{err}");
    assert!(err.contains("line 3"), "{err}");

    let out = effdiff(&["converge", "--h-list", "0.01,0.02,0.04"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly decreasing"));

    let out = effdiff(&["simulate", "--problem", "no-such-problem"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "degenerate.toml",
        r#"
[problem]
drift = ["0", "0"]
sigma = [["1.0", "0"], ["0", "0"]]

[ensemble]
particles = 10
horizon = 0.1
"#,
    );
    let out = effdiff(&["simulate", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
