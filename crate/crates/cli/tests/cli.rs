use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
algorithms = ["raker", "adaraker", "single:2", "omkl-b:50"]
num_features = 20
seed = 4

[stream]
kind = "switching"
preset = "dataset2"
dim = 4
horizon = 300
"#;

fn raker(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raker"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_telemetry_into_a_new_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("nested/out");
    let out = raker(&[
        "run",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["raker", "adaraker", "single-2", "omkl-b-50", "summary"] {
        let text = fs::read_to_string(out_dir.join(format!("{name}.csv"))).unwrap();
        assert!(text.lines().count() > 1, "{name}.csv is empty");
    }
    let trace = fs::read_to_string(out_dir.join("raker.csv")).unwrap();
    assert_eq!(trace.lines().count(), 301);
    assert!(trace.starts_with("t,y,yhat,loss,cum_mse,w_1,w_2,w_3\n"));
}

#[test]
fn reruns_are_byte_identical_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let read = |sub: &str, seed: &str| {
        let out_dir = dir.path().join(sub);
        let out = raker(&[
            "run",
            "--config",
            &config,
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(out_dir.join("adaraker.csv")).unwrap()
    };
    let a = read("a", "4");
    let b = read("b", "4");
    let c = read("c", "5");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn synth_writes_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("s");
    let out = raker(&[
        "synth",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(out_dir.join("stream.csv")).unwrap();
    assert!(text.starts_with("t,x_1,x_2,x_3,x_4,y\n"));
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn regret_reports_against_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("r");
    let out = raker(&[
        "regret",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
        "--algorithm",
        "raker",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(out_dir.join("regret_raker.csv")).unwrap();
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let out = raker(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let bad_key = write_config(dir.path(), &format!("{CONFIG}\nbogus = 1\n"));
    let out = raker(&["run", "--config", &bad_key]);
    assert_eq!(out.status.code(), Some(1));

    let bad_alg = write_config(dir.path(), &CONFIG.replace("single:2", "single:9"));
    let out = raker(&["run", "--config", &bad_alg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("config error"));

    let out = raker(&["run"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn classification_regret_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    fs::write(&csv, "a,b,label\n0.1,0.2,1\n0.4,0.3,-1\n0.9,0.5,1\n").unwrap();
    let text = r#"
algorithms = ["raker"]
task = "binary_classification"

[stream]
kind = "csv"
path = "d.csv"
label = "label"
"#;
    let config = write_config(dir.path(), text);
    let out_dir = dir.path().join("o");
    let out = raker(&[
        "run",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = raker(&[
        "regret",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = raker(&[
        "run",
        "--config",
        &config,
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("runtime error"));
}
