//! End-to-end tests of the `ntklab` binary and its exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ntklab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntklab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_validate() {
    let tmp = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let o = ntklab(&["validate-config", "--config", path.to_str().unwrap()], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), stderr(&o));
        assert!(stdout(&o).contains("config is valid"));
    }
    assert!(entries(tmp.path()).is_empty());
}

#[test]
fn violated_ode_precondition_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ntklab(
        &[
            "odebound",
            "--set",
            r#"params.check={"a":1,"b":1,"c":1,"d_coef":2,"rho":1,"x0":1,"y0":1,"t_end":5,"rel_tol":1e-10}"#,
            "--out",
            "out",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("precondition x0 >= (d/c)^(2/(2 rho - 1)) * y0 violated"), "{}", stderr(&o));
}

#[test]
fn eigendecay_assert_passes_on_the_shipped_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("eigendecay.json");
    let o = ntklab(
        &["eigendecay", "--config", cfg.to_str().unwrap(), "--out", "out", "--assert"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("out/slopes.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let slope = |act: &str| -> f64 {
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|r| r[col("activation")] == act && r[col("mode")] == "empirical")
            .map(|r| r[col("slope")].parse().unwrap())
            .unwrap()
    };
    let (relu, elu, gelu) = (slope("relu"), slope("elu"), slope("gelu"));
    assert!(gelu <= elu && elu <= relu && relu < -1.0, "{relu} {elu} {gelu}");
}

#[test]
fn failed_checks_exit_four_under_assert() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["noise", "--set", "params.m=32", "--set", "params.n=20", "--out", "out"];
    let plain = ntklab(&args, tmp.path());
    assert_eq!(plain.status.code(), Some(0), "{}", stderr(&plain));
    assert!(stdout(&plain).contains("FAIL spectral_in_band_relu"));
    let mut strict = args.to_vec();
    strict.push("--assert");
    let o = ntklab(&strict, tmp.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn unknown_inputs_are_rejected_before_computation() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown_cmd = ntklab(&["spectra"], tmp.path());
    assert_eq!(unknown_cmd.status.code(), Some(2));
    let unknown_key = ntklab(&["holder", "--set", "params.bogus=1", "--out", "out"], tmp.path());
    assert_eq!(unknown_key.status.code(), Some(2), "{}", stderr(&unknown_key));
    let unknown_top = ntklab(&["holder", "--set", "extra=1", "--out", "out"], tmp.path());
    assert_eq!(unknown_top.status.code(), Some(2));
    let wrong_version = ntklab(&["holder", "--set", "schema_version=2", "--out", "out"], tmp.path());
    assert_eq!(wrong_version.status.code(), Some(2));
    let missing = ntklab(&["holder", "--config", "missing.json", "--out", "out"], tmp.path());
    assert_eq!(missing.status.code(), Some(2));
    let mismatch = ntklab(
        &["holder", "--config", configs().join("noise.json").to_str().unwrap(), "--out", "out"],
        tmp.path(),
    );
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(entries(tmp.path()).is_empty(), "{:?}", entries(tmp.path()));
}

#[test]
fn reruns_overwrite_with_identical_files_inside_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["kernel-table", "--set", r#"params.activations=["relu","gelu"]"#, "--out", "results/k"];
    let read = |name: &str| fs::read(tmp.path().join("results/k").join(name)).unwrap();
    assert_eq!(ntklab(&args, tmp.path()).status.code(), Some(0));
    let first: Vec<Vec<u8>> = ["kernel.csv", "eigenvalues.csv", "summary.json"].iter().map(|n| read(n)).collect();
    assert_eq!(ntklab(&args, tmp.path()).status.code(), Some(0));
    let second: Vec<Vec<u8>> = ["kernel.csv", "eigenvalues.csv", "summary.json"].iter().map(|n| read(n)).collect();
    assert_eq!(first, second);
    assert_eq!(entries(tmp.path()), vec!["results"]);
    assert_eq!(
        entries(&tmp.path().join("results/k")),
        vec!["eigenvalues.csv", "kernel.csv", "provenance.json", "summary.json"]
    );
    let provenance: serde_json::Value = serde_json::from_slice(&read("provenance.json")).unwrap();
    for key in ["config_hash", "master_seed", "version", "started_at", "wall_seconds"] {
        assert!(provenance.get(key).is_some(), "{key}");
    }
}

#[test]
fn seed_flag_and_threads_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["odebound", "--set", "params.sweep_draws=6"];
    let run = |extra: &[&str], out: &str| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        a.extend_from_slice(&["--out", out]);
        let o = ntklab(&a, tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(tmp.path().join(out).join("sweep.csv")).unwrap()
    };
    let one = run(&["--seed", "4"], "a");
    let two = run(&["--seed", "4", "--threads", "2"], "b");
    let other = run(&["--seed", "5"], "c");
    assert_eq!(one, two);
    assert_ne!(one, other);
    let zero = ntklab(&["odebound", "--threads", "0", "--out", "d"], tmp.path());
    assert_eq!(zero.status.code(), Some(2));
}
