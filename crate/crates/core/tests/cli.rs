//! End-to-end checks of the command line through `main_with_args`.
//!
//! Golden files live in `tests/fixtures/`; regenerate them with
//! `BREAKEVEN_BLESS=1 cargo test --test cli`.

use breakeven::cli::main_with_args;
use serde_json::Value;
use std::path::{Path, PathBuf};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["breakeven", "--quiet"];
    v.extend_from_slice(args);
    main_with_args(v)
}

fn check_golden(name: &str, actual: &str) {
    let path = fixtures().join(name);
    if std::env::var_os("BREAKEVEN_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs");
}

const TINY_TRAIN: &str = r#"{
  "model": {"layer_sizes": [2, 8, 2], "activations": ["tanh"], "loss": "softmax_cross_entropy"},
  "dataset": {"source": {"kind": "gaussian_blobs", "n": 120, "classes": 2, "sigma": 0.5}},
  "eta": 0.1, "batch_size": 16, "epochs": 2, "eval_every": 3,
  "spectra": {"l": 6, "k": 3, "lanczos_iters": 10},
  "eval_subset_fraction": 0.2
}"#;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const RECORD_FIELDS: &[&str] = &[
    "step",
    "epoch",
    "train_loss",
    "train_acc",
    "val_acc",
    "delta_loss",
    "lambda_k1",
    "lambda_k_star",
    "cond_ratio",
    "trace_k",
    "lambda_h_top",
    "g_ratio",
    "bn_gamma_norms",
    "lr_current",
];

/// Independent schema check: every line is JSON, the first carries the
/// metadata keys, the rest every record field (null allowed), steps increase.
fn validate_jsonl(text: &str) {
    let mut lines = text.lines();
    let meta: Value = serde_json::from_str(lines.next().expect("metadata line")).unwrap();
    for key in [
        "schema_version",
        "config",
        "prng_algorithm",
        "artifact_version",
        "config_hash",
    ] {
        assert!(meta.get(key).is_some(), "metadata lacks {key}");
    }
    assert_eq!(meta["schema_version"], 1);
    let mut last = -1i64;
    for line in lines {
        let rec: Value = serde_json::from_str(line).unwrap();
        let obj = rec.as_object().unwrap();
        for f in RECORD_FIELDS {
            assert!(obj.contains_key(*f), "record lacks {f}");
        }
        for (k, v) in obj {
            if let Some(x) = v.as_f64() {
                assert!(x.is_finite(), "{k} not finite");
            }
        }
        let step = rec["step"].as_i64().unwrap();
        assert!(step > last);
        last = step;
    }
}

#[test]
fn simulate_breakeven_table_hits_two_over_eta() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--out", s(dir.path())]), 0);
    let csv = std::fs::read_to_string(dir.path().join("breakeven.csv")).unwrap();
    assert!(csv
        .lines()
        .next()
        .unwrap()
        .starts_with("# breakeven simulate config_hash="));
    let mut full_rows = 0;
    for line in csv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        if f[1] == f[2] {
            let eta: f64 = f[0].parse().unwrap();
            let lambda: f64 = f[5].parse().unwrap();
            assert!((lambda - 2.0 / eta).abs() < 1e-12);
            full_rows += 1;
        }
    }
    assert_eq!(full_rows, 3);
    assert!(dir.path().join("phase_diagram.csv").exists());
}

#[test]
fn simulate_no_flip_exits_one_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.json",
        r#"{"etas": [0.1], "batch_sizes": [10],
            "growth": {"direction": "increasing_from_stable", "lambda0": 0.1, "max_steps": 5}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&out)]), 1);
    let growth = std::fs::read_to_string(out.join("growth.csv")).unwrap();
    assert!(growth.trim_end().ends_with("no_flip"));
}

#[test]
fn negative_eta_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &TINY_TRAIN.replace("\"eta\": 0.1", "\"eta\": -0.1"),
    );
    assert_eq!(
        run(&["train", "--config", s(&cfg), "--out", s(dir.path())]),
        2
    );
    let cfg = write(dir.path(), "d.json", TINY_TRAIN);
    assert_eq!(
        run(&[
            "train",
            "--config",
            s(&cfg),
            "--out",
            s(dir.path()),
            "--eta=-0.1"
        ]),
        2
    );
    let cfg = write(
        dir.path(),
        "e.json",
        &TINY_TRAIN.replace("\"eval_every\"", "\"eval_evry\""),
    );
    assert_eq!(
        run(&["train", "--config", s(&cfg), "--out", s(dir.path())]),
        2
    );
}

#[test]
fn io_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["train", "--config", s(&dir.path().join("missing.json"))]),
        3
    );
    let blocker = write(dir.path(), "file", "x");
    let cfg = write(dir.path(), "c.json", TINY_TRAIN);
    assert_eq!(
        run(&[
            "train",
            "--config",
            s(&cfg),
            "--out",
            s(&blocker.join("sub"))
        ]),
        3
    );
}

#[test]
fn train_echoes_resolved_config_and_matches_golden_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY_TRAIN);
    let out = dir.path().join("out");
    assert_eq!(
        run(&["train", "--config", s(&cfg), "--out", s(&out), "--eta=0.2"]),
        0
    );
    let text = std::fs::read_to_string(out.join("run.jsonl")).unwrap();
    validate_jsonl(&text);
    let meta: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(meta["config"]["eta"], 0.2);
    // defaults are filled in and data-dependent ones resolved
    assert_eq!(meta["config"]["accuracy_threshold"], 0.6);
    assert_eq!(meta["config"]["spectra"]["m"], 8);
    assert_eq!(meta["config"]["spectra"]["hvp_method"], "pearlmutter");
    check_golden(
        "train_metadata.golden.json",
        &format!("{}\n", text.lines().next().unwrap()),
    );

    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"], meta["config_hash"]);
    assert!(summary["summary"]["max_lambda_k1"].as_f64().unwrap() > 0.0);
}

#[test]
fn repeated_train_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY_TRAIN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(
        run(&["train", "--config", s(&cfg), "--out", s(&a), "--snapshot"]),
        0
    );
    assert_eq!(
        run(&["train", "--config", s(&cfg), "--out", s(&b), "--snapshot"]),
        0
    );
    for f in ["run.jsonl", "summary.json", "theta.bklb"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let theta = breakeven::trainer::read_snapshot(&a.join("theta.bklb")).unwrap();
    assert_eq!(theta.len(), 2 * 8 + 8 + 8 * 2 + 2);
}

#[test]
fn sweep_isolates_a_diverging_cell() {
    let dir = tempfile::tempdir().unwrap();
    let base = TINY_TRAIN.replace("softmax_cross_entropy", "mse");
    let cfg = write(
        dir.path(),
        "sweep.json",
        &format!(r#"{{"base": {base}, "axis": {{"eta": [0.05, 10.0]}}, "seeds": [0, 1]}}"#),
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["sweep", "--config", s(&cfg), "--out", s(&out)]), 0);
    let doc: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep_report.json")).unwrap())
            .unwrap();
    let cells = doc["report"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    for c in cells {
        let expect_diverged = c["value"] == 10.0;
        assert_eq!(c["diverged"], expect_diverged);
        if !expect_diverged {
            assert!(c["summary"]["max_lambda_k1"].as_f64().is_some());
        }
    }
    for entry in std::fs::read_dir(out.join("cells")).unwrap() {
        validate_jsonl(&std::fs::read_to_string(entry.unwrap().path()).unwrap());
    }
    let single = write(
        dir.path(),
        "one.json",
        &format!(r#"{{"base": {base}, "axis": {{"eta": [0.05]}}}}"#),
    );
    assert_eq!(run(&["sweep", "--config", s(&single), "--out", s(&out)]), 2);
}

#[test]
fn report_matches_golden_svg() {
    let dir = tempfile::tempdir().unwrap();
    let a = fixtures().join("log_a.jsonl");
    let b = fixtures().join("log_b.jsonl");
    let code = run(&[
        "report",
        "--log",
        s(&a),
        "--log",
        s(&b),
        "--metric",
        "lambda_k1",
        "--x",
        "epoch",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, 0);
    let svg = std::fs::read_to_string(dir.path().join("panel_0_lambda_k1.svg")).unwrap();
    check_golden("lambda_k1.golden.svg", &svg);
    let md = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
    assert!(md.starts_with("<!-- breakeven report config_hash="));
    assert_eq!(md.matches("| log_").count(), 2);

    // same inputs from another directory give the same bytes
    let copy = tempfile::tempdir().unwrap();
    std::fs::copy(&a, copy.path().join("log_a.jsonl")).unwrap();
    std::fs::copy(&b, copy.path().join("log_b.jsonl")).unwrap();
    let out2 = dir.path().join("again");
    let code = run(&[
        "report",
        "--log",
        s(&copy.path().join("log_a.jsonl")),
        "--log",
        s(&copy.path().join("log_b.jsonl")),
        "--metric",
        "lambda_k1",
        "--x",
        "epoch",
        "--out",
        s(&out2),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read_to_string(out2.join("panel_0_lambda_k1.svg")).unwrap(),
        svg
    );
}

#[test]
fn report_errors_and_log_scale_footnote() {
    let dir = tempfile::tempdir().unwrap();
    let a = fixtures().join("log_a.jsonl");
    assert_eq!(run(&["report", "--log", s(&a), "--out", s(dir.path())]), 2);
    assert_eq!(
        run(&[
            "report",
            "--log",
            s(&a),
            "--metric",
            "nope",
            "--out",
            s(dir.path())
        ]),
        2
    );
    // the first checkpoint's bn-free run has lr > 0 but delta_loss can be anything; use
    // a synthetic log with a zero to exercise the clamp
    let text = std::fs::read_to_string(&a).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: Value = serde_json::from_str(&lines[1]).unwrap();
    rec["lambda_k1"] = Value::from(0.0);
    lines[1] = rec.to_string();
    let zero = write(dir.path(), "zero.jsonl", &(lines.join("\n") + "\n"));
    let out = dir.path().join("log");
    assert_eq!(
        run(&[
            "report",
            "--log",
            s(&zero),
            "--metric",
            "lambda_k1",
            "--log-y",
            "--out",
            s(&out)
        ]),
        0
    );
    let svg = std::fs::read_to_string(out.join("panel_0_lambda_k1.svg")).unwrap();
    assert!(svg.contains("value(s) &lt;= 0 clamped to"));
}

#[test]
fn help_documents_columns() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_breakeven"))
        .args(["simulate", "--help"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success());
    for col in [
        "phase_diagram.csv",
        "lambda_star",
        "growth_rate",
        "step_of_breakeven",
    ] {
        assert!(text.contains(col), "{col}");
    }
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_breakeven"))
        .args(["train", "--help"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for col in RECORD_FIELDS {
        assert!(text.contains(col), "{col}");
    }
}
