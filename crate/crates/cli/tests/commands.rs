use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
seed = 7
[trajectory]
duration_s = 0.8
[noise]
shot_std_um = 0.3
[ensemble]
n_runs = 12
bootstrap_resamples = 200
[track]
window_s = 0.2
stride_s = 0.1
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_squeezetrack"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn kv(path: PathBuf) -> std::collections::BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .take_while(|l| !l.starts_with('['))
        .filter_map(|l| {
            l.split_once(" = ")
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}

#[test]
fn simulate_writes_trajectory_and_records() {
    let dir = setup(&format!("{SMALL}[output]\nregimes = [\"coherent\"]\n"));
    let o = run(
        dir.path(),
        &["--config", "run.toml", "--out", "o", "simulate"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<_> = fs::read_dir(dir.path().join("o"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names, ["record_coherent.csv", "trajectory.csv"]);
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn out_of_range_alpha_is_a_config_error() {
    let dir = setup("[trajectory]\nalpha = 2.5\n");
    let o = run(dir.path(), &["--config", "run.toml", "simulate"]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("alpha") && stderr(&o).contains("(0, 2)"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let dir = setup("[noise]\nshot_std = 0.1\n");
    let o = run(dir.path(), &["--config", "run.toml", "simulate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("shot_std"), "{}", stderr(&o));
}

#[test]
fn io_failures_exit_3() {
    let dir = setup(SMALL);
    let o = run(dir.path(), &["--config", "missing.toml", "simulate"]);
    assert_eq!(code(&o), 3);
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = run(
        dir.path(),
        &["--config", "run.toml", "--out", "blocker/sub", "simulate"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn zero_jobs_is_a_config_error() {
    let dir = setup(SMALL);
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "--jobs", "0", "simulate"]
        )),
        2
    );
}

#[test]
fn outputs_are_reproducible_and_labelled() {
    let dir = setup(SMALL);
    for (out, jobs) in [("a", "1"), ("b", "3")] {
        let o = run(
            dir.path(),
            &[
                "--config", "run.toml", "--out", out, "--jobs", jobs, "simulate",
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for name in [
        "trajectory.csv",
        "record_coherent.csv",
        "record_squeezed.csv",
    ] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
        let head = String::from_utf8_lossy(&a[..400]).into_owned();
        assert!(
            head.contains("config_hash=") && head.contains("seed=7"),
            "{head}"
        );
    }
    let o = run(
        dir.path(),
        &[
            "--config", "run.toml", "--out", "c", "--seed", "8", "simulate",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_ne!(
        fs::read(dir.path().join("a/trajectory.csv")).unwrap(),
        fs::read(dir.path().join("c/trajectory.csv")).unwrap()
    );
}

#[test]
fn analyze_simulated_record() {
    let dir = setup(SMALL);
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "--out", "o", "simulate"]
        )),
        0
    );
    let o = run(
        dir.path(),
        &[
            "--config",
            "run.toml",
            "--out",
            "o",
            "analyze",
            "o/record_squeezed.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit = kv(dir.path().join("o/fit_summary.txt"));
    assert!(fit["alpha_hat"].parse::<f64>().unwrap().is_finite());
    assert!(fit.contains_key("config_hash") && fit["seed"] == "7");
    for name in ["msd.csv", "moduli.csv"] {
        let text = fs::read_to_string(dir.path().join("o").join(name)).unwrap();
        assert!(text.lines().count() > 5, "{name}");
        assert!(text.contains("config_hash="));
    }
}

#[test]
fn truncated_input_reports_the_line() {
    let dir = setup(SMALL);
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "--out", "o", "simulate"]
        )),
        0
    );
    let full = fs::read(dir.path().join("o/record_coherent.csv")).unwrap();
    fs::write(dir.path().join("cut.csv"), &full[..2_000]).unwrap();
    let o = run(dir.path(), &["--config", "run.toml", "analyze", "cut.csv"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("cut.csv:"), "{}", stderr(&o));

    let mut garbled = String::from_utf8(full).unwrap();
    garbled = garbled
        .replacen("\n", "\nnot-a-number\n", 8)
        .replacen("not-a-number\n", "", 7);
    fs::write(dir.path().join("bad.csv"), garbled).unwrap();
    let o = run(dir.path(), &["--config", "run.toml", "analyze", "bad.csv"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

fn drift_record(dt: f64, n: usize) -> String {
    let mut s = format!(
        "# squeezetrack-record v1\n# dt_out={dt:e} regime=coherent noise_std=0\n# t0=0 n={n}\n"
    );
    for i in 0..n {
        s.push_str(&format!("{:e}\n", 1.0 * i as f64 * dt));
    }
    s
}

#[test]
fn drift_is_ballistic() {
    let dir = setup(SMALL);
    fs::write(dir.path().join("drift.csv"), drift_record(1e-3, 2_000)).unwrap();
    let o = run(
        dir.path(),
        &["--config", "run.toml", "--out", "o", "analyze", "drift.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let alpha: f64 = kv(dir.path().join("o/fit_summary.txt"))["alpha_hat"]
        .parse()
        .unwrap();
    assert!((alpha - 2.0).abs() < 1e-6, "{alpha}");
}

#[test]
fn third_party_columns_with_units() {
    let dir = setup(SMALL);
    let mut text = String::from("time_s;x_nm;y_nm\n");
    for i in 0..2_000 {
        let t = i as f64 * 1e-3;
        text.push_str(&format!("{t};{};{}\n", 1e3 * t, 5.0));
    }
    fs::write(dir.path().join("ext.txt"), text).unwrap();
    let args = [
        "--config",
        "run.toml",
        "--out",
        "o",
        "analyze",
        "ext.txt",
        "--column",
        "x_nm",
        "--delimiter",
        ";",
        "--unit",
        "nm",
        "--dt",
        "1e-3",
        "--has-header",
    ];
    let o = run(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit = kv(dir.path().join("o/fit_summary.txt"));
    let alpha: f64 = fit["alpha_hat"].parse().unwrap();
    let d: f64 = fit["d_hat_um2_per_s_alpha"].parse().unwrap();
    // x = 1 μm/s · t  ->  msd = τ² = 2 D τ²
    assert!(
        (alpha - 2.0).abs() < 1e-6 && (d - 0.5).abs() < 1e-6,
        "{alpha} {d}"
    );

    let o = run(
        dir.path(),
        &["analyze", "ext.txt", "--column", "x_nm", "--has-header"],
    );
    assert_eq!(code(&o), 2, "--dt is required");
    let o = run(
        dir.path(),
        &[
            "analyze", "ext.txt", "--column", "x_nm", "--dt", "1e-3", "--unit", "furlong",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_fit_exits_5() {
    let dir = setup(SMALL);
    let mut s = String::from(
        "# squeezetrack-record v1\n# dt_out=1e-3 regime=coherent noise_std=0\n# t0=0 n=400\n",
    );
    s.push_str(&"0.5\n".repeat(400));
    fs::write(dir.path().join("flat.csv"), s).unwrap();
    let o = run(dir.path(), &["--config", "run.toml", "analyze", "flat.csv"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn compare_prints_gains_and_writes_report() {
    let dir = setup(SMALL);
    let o = run(
        dir.path(),
        &["--config", "run.toml", "--out", "o", "compare"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(
        out.contains("precision_gain = ") && out.contains("rate_gain = ") && out.contains("CI"),
        "{out}"
    );
    assert!(out.contains("sub_qnl = 42.5%"), "{out}");
    let report = kv(dir.path().join("o/report.txt"));
    let p: f64 = report["precision_gain"].parse().unwrap();
    let r: f64 = report["rate_gain"].parse().unwrap();
    assert!((r - (1.0 / (1.0 - p).powi(2) - 1.0)).abs() < 1e-12);
    let text = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert_eq!(text.lines().skip_while(|l| *l != "[runs]").count(), 2 + 12);
}

#[test]
fn compare_rejects_single_run() {
    let dir = setup("[ensemble]\nn_runs = 1\n");
    let o = run(dir.path(), &["--config", "run.toml", "compare"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("n_runs"));
}

#[test]
fn track_writes_series_and_plot() {
    let dir = setup(SMALL);
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "--out", "o", "simulate"]
        )),
        0
    );
    let o = run(
        dir.path(),
        &[
            "--config",
            "run.toml",
            "--out",
            "o",
            "track",
            "o/record_squeezed.csv",
            "--plot",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("o/alpha_t.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "t,alpha,stderr"));
    let rows = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .count();
    let spec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/alpha_t.vl.json")).unwrap())
            .unwrap();
    assert_eq!(spec["data"]["values"].as_array().unwrap().len(), rows);
    assert_eq!(spec["usermeta"]["seed"], "7");
    assert!(spec["$schema"].as_str().unwrap().contains("vega-lite"));
}

#[test]
fn track_argument_errors() {
    let dir = setup(SMALL);
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "--out", "o", "simulate"]
        )),
        0
    );
    let rec = "o/record_coherent.csv";
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "track", rec, "--stride", "0"]
        )),
        2
    );
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "track", rec, "--window", "0.0005"]
        )),
        2
    );
    // 12-sample windows leave two lags
    assert_eq!(
        code(&run(
            dir.path(),
            &["--config", "run.toml", "track", rec, "--window", "0.0012"]
        )),
        5
    );
}
