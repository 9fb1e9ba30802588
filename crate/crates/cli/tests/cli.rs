//! End-to-end runs of the `lrt` binary on small configurations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SYSTEM: &str = r#"
[system]
A0 = 3.91
A1 = 0.05
gamma = 0.5
observable = "mean_zero_quadratic"
M = 16
escape = "saturate"
"#;

/// A coarse table that builds in well under a second.
const SMALL_TABLE: &str = r#"
[table]
lags = 32
mc_runs = 1
mc_steps = 4096
grid = { min = 3.7, max = 4.0, points = 301 }
"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let cache = dir.join("cache");
    let text = format!(
        "seed = 11\n{SYSTEM}\n{}\ncache_dir = {:?}\n{body}",
        SMALL_TABLE,
        cache.to_str().unwrap()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn lrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrt"))
        .args(args)
        .output()
        .expect("failed to launch lrt")
}

fn run_ok(args: &[&str]) {
    let out = lrt(args);
    assert!(
        out.status.success(),
        "lrt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn checksums(manifest: &Value) -> Vec<(String, String)> {
    manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            (
                o["file"].as_str().unwrap().to_string(),
                o["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

const DENSITY: &str = "[density]\nmodel = \"full\"\nN = 20000\nburn_in = 500\nbins = 50\n";

#[test]
fn density_runs_are_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DENSITY);
    let config = config.to_str().unwrap();
    let outs: Vec<_> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    run_ok(&[
        "density",
        "--config",
        config,
        "--out",
        outs[0].to_str().unwrap(),
        "--threads",
        "1",
    ]);
    run_ok(&[
        "density",
        "--config",
        config,
        "--out",
        outs[1].to_str().unwrap(),
        "--threads",
        "1",
    ]);
    run_ok(&[
        "density",
        "--config",
        config,
        "--out",
        outs[2].to_str().unwrap(),
        "--threads",
        "3",
    ]);
    let first = fs::read(outs[0].join("density.csv")).unwrap();
    for out in &outs[1..] {
        assert_eq!(fs::read(out.join("density.csv")).unwrap(), first);
        assert_eq!(checksums(&manifest(out)), checksums(&manifest(&outs[0])));
    }
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("bin_center,density\n"));
    assert_eq!(text.lines().count(), 51);
    let m = manifest(&outs[0]);
    assert_eq!(m["command"], "density");
    assert_eq!(m["config"]["seed"], 11);
    assert_eq!(m["threads"], 1);

    // A different seed changes the data.
    let other = dir.path().join("d");
    run_ok(&[
        "density",
        "--config",
        config,
        "--out",
        other.to_str().unwrap(),
        "--seed",
        "12",
    ]);
    assert_ne!(
        fs::read(other.join("density.csv")).unwrap(),
        fs::read(outs[0].join("density.csv")).unwrap()
    );
    assert_eq!(manifest(&other)["config"]["seed"], 12);
}

#[test]
fn reduction_table_is_cached_between_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[response]\nmax_lag = 32\nspectral_grid = 512\n",
    );
    let config = config.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["reduce", "--config", config, "--out", a.to_str().unwrap()]);
    run_ok(&["reduce", "--config", config, "--out", b.to_str().unwrap()]);
    assert_eq!(manifest(&a)["table"]["cache"], "miss");
    assert_eq!(manifest(&b)["table"]["cache"], "hit");
    assert_eq!(checksums(&manifest(&a)), checksums(&manifest(&b)));
    let cov = fs::read_to_string(a.join("covariance.csv")).unwrap();
    assert!(cov.starts_with("lag,covariance,beta\n"));
    assert_eq!(cov.lines().count(), 34);
    let summary: Value =
        serde_json::from_slice(&fs::read(a.join("reduction.json")).unwrap()).unwrap();
    assert_eq!(summary["alpha_points"], 301);
    assert!(summary["variance"].as_f64().unwrap() > 0.0);
}

#[test]
fn reduced_models_and_moments_produce_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[density]
model = "finite_size"
N = 20000
burn_in = 500
bins = 40

[moments]
sizes = [4, 16]
realizations = 200
unit_burn_in = 100

[response]
model = "stochastic_limit"
sizes = [16, 64]
N = 4000
burn_in = 200
realizations = 3
sigma = "pooled"
max_lag = 32
spectral_grid = 512
"#;
    let config = write_config(dir.path(), body);
    let config = config.to_str().unwrap();
    let out = |n: &str| dir.path().join(n).to_str().unwrap().to_string();

    run_ok(&["density", "--config", config, "--out", &out("density")]);
    assert_eq!(
        fs::read_to_string(dir.path().join("density/density.csv"))
            .unwrap()
            .lines()
            .count(),
        41
    );

    run_ok(&["moments", "--config", config, "--out", &out("moments")]);
    let moments = fs::read_to_string(dir.path().join("moments/moments.csv")).unwrap();
    let lines: Vec<&str> = moments.lines().collect();
    assert_eq!(lines[0], "M,mu1,mu2,mu3,mu4,ratio1,ratio2,ratio3,ratio4");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("inf,"));

    run_ok(&[
        "respond",
        "--config",
        config,
        "--out",
        &out("respond"),
        "--order",
        "3",
    ]);
    let response = fs::read_to_string(dir.path().join("respond/response.csv")).unwrap();
    assert!(response.starts_with("M,epsilon,mean,stderr,sigma_ref\n"));
    assert_eq!(response.lines().count(), 1 + 2 * 9);
    let test: Value =
        serde_json::from_slice(&fs::read(dir.path().join("respond/test.json")).unwrap()).unwrap();
    let results = test.as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["M"], 16);
    assert_eq!(results[1]["result"]["ell"], 3);
    assert_eq!(results[1]["result"]["dof"], 5);
    let p = results[0]["result"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn calibration_reports_the_null_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[calibrate]\ntrials = 300\n");
    let out = dir.path().join("cal");
    run_ok(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let test: Value = serde_json::from_slice(&fs::read(out.join("test.json")).unwrap()).unwrap();
    assert_eq!(test["dof"], 7);
    assert_eq!(test["chi2"].as_array().unwrap().len(), 300);
    assert!(test["ks_p_value"].as_f64().unwrap() > 0.01);
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for body in [
        "[density]\nmodel = \"full\"\nbinz = 3\n",
        "[density]\nmodel = \"exact\"\n",
        "unknown_top_level = 1\n",
    ] {
        // Top-level keys must precede the first table.
        let config = if body.starts_with('[') {
            write_config(dir.path(), body)
        } else {
            let path = dir.path().join("top.toml");
            fs::write(&path, format!("{body}{SYSTEM}")).unwrap();
            path
        };
        let result = lrt(&[
            "density",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out,
        ]);
        assert_eq!(result.status.code(), Some(2), "{body}");
        assert!(!Path::new(out).join("manifest.json").exists());
    }
    let missing = lrt(&[
        "density",
        "--config",
        "/nonexistent/config.toml",
        "--out",
        out,
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let zero_m = dir.path().join("m0.toml");
    fs::write(&zero_m, SYSTEM.replace("M = 16", "M = 0")).unwrap();
    let result = lrt(&[
        "density",
        "--config",
        zero_m.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn parameter_escape_exits_with_status_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("escape.toml");
    let system = SYSTEM
        .replace("A0 = 3.91", "A0 = 3.99")
        .replace("A1 = 0.05", "A1 = 0.5")
        .replace("escape = \"saturate\"", "escape = \"error\"");
    fs::write(&path, format!("{system}\n{DENSITY}")).unwrap();
    let out = dir.path().join("out");
    let result = lrt(&[
        "density",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        result.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(String::from_utf8_lossy(&result.stderr).contains("escaped"));
}

#[test]
fn unwritable_output_exits_with_status_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DENSITY);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("out");
    let result = lrt(&[
        "density",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(4));
}
