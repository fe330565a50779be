use std::path::Path;
use std::process::{Command, Output};

use jmls::benchmarks::univariate_two_mode;
use jmls::io::{data_from_csv, params_to_json};

fn jmls(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jmls"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("truth.json"),
        params_to_json(&univariate_two_mode()),
    )
    .unwrap();
    dir
}

#[test]
fn simulate_is_reproducible() {
    let dir = setup();
    let p = dir.path();
    for out in ["a", "b"] {
        let o = jmls(
            &[
                "simulate",
                "--params",
                "truth.json",
                "--n",
                "50",
                "--seed",
                "4",
                "--out",
                out,
            ],
            p,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read_to_string(p.join("a/data.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(p.join("b/data.csv")).unwrap());
    assert_eq!(
        std::fs::read(p.join("a/trajectory.csv")).unwrap(),
        std::fs::read(p.join("b/trajectory.csv")).unwrap()
    );
    let data = data_from_csv(&a).unwrap();
    assert_eq!(data.len(), 50);
    assert!(a.starts_with("k,u_1,y_1\n"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = setup();
    let p = dir.path();

    let o = jmls(
        &[
            "simulate",
            "--params",
            "truth.json",
            "--n",
            "0",
            "--out",
            "x",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(2));

    let o = jmls(
        &[
            "simulate",
            "--params",
            "missing.json",
            "--n",
            "5",
            "--out",
            "x",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));

    std::fs::write(p.join("empty.jsonl"), "").unwrap();
    let o = jmls(&["summarize", "--chain", "empty.jsonl", "--out", "s"], p);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(p.join("bad.json"), r#"{"data": "d.csv", "output": "o", "n_x": 1, "m": 2, "iterations": 10, "max_components": 5, "seed": 1, "colour": 3}"#).unwrap();
    let o = jmls(&["identify", "--config", "bad.json"], p);
    assert_eq!(o.status.code(), Some(2));

    let o = jmls(&["frobnicate"], p);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_parameters_are_reported() {
    let dir = setup();
    let p = dir.path();
    let text = params_to_json(&univariate_two_mode()).replace("0.7", "0.6");
    std::fs::write(p.join("broken.json"), text).unwrap();
    let o = jmls(
        &[
            "simulate",
            "--params",
            "broken.json",
            "--n",
            "5",
            "--out",
            "x",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("column 1"), "{}", stderr(&o));
}

#[test]
fn identify_then_summarize() {
    let dir = setup();
    let p = dir.path();
    let o = jmls(
        &[
            "simulate",
            "--params",
            "truth.json",
            "--n",
            "60",
            "--seed",
            "2",
            "--out",
            "sim",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let config = r#"{"data": "sim/data.csv", "output": "run", "n_x": 1, "m": 2, "iterations": 40, "burn_in": 10, "thin": 3, "max_components": 4, "seed": 5, "init": "truth.json"}"#;
    std::fs::write(p.join("run.json"), config).unwrap();
    let o = jmls(&["identify", "--config", "run.json"], p);
    assert!(o.status.success(), "{}", stderr(&o));

    let chain = std::fs::read_to_string(p.join("run/chain.jsonl")).unwrap();
    assert_eq!(chain.lines().count(), 10);
    let loglik = std::fs::read_to_string(p.join("run/loglik.csv")).unwrap();
    assert_eq!(loglik.lines().count(), 41);
    assert!(p.join("run/last_trajectory.csv").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("run/run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["status"], "ok");

    let o = jmls(
        &[
            "summarize",
            "--chain",
            "run/chain.jsonl",
            "--truth",
            "truth.json",
            "--out",
            "summary",
            "--grid-points",
            "16",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for file in [
        "summary.csv",
        "transition_marginals.csv",
        "bode_envelope.csv",
        "coverage.json",
        "histograms/T_1_1.csv",
    ] {
        assert!(p.join("summary").join(file).exists(), "{file} missing");
    }
    let bode = std::fs::read_to_string(p.join("summary/bode_envelope.csv")).unwrap();
    assert_eq!(bode.lines().count(), 1 + 2 * 16);

    let mut lines: Vec<&str> = chain.lines().collect();
    lines[0] = "{not json";
    std::fs::write(p.join("corrupt.jsonl"), lines.join("\n")).unwrap();
    let o = jmls(&["summarize", "--chain", "corrupt.jsonl", "--out", "s2"], p);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn preset_writes_a_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = jmls(
        &["preset", "--name", "three-mode", "--out", "three.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("three.json")).unwrap();
    let params = jmls::io::params_from_json(&text).unwrap();
    assert_eq!(params.num_models(), 3);
}
