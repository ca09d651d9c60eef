//! The `ujmmd` binary end to end: configs, output formats and the bundled
//! experiment settings.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ujmmd");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn ujmmd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = ujmmd(args);
    assert!(
        out.status.success(),
        "ujmmd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_err(args: &[&str]) -> String {
    let out = ujmmd(args);
    assert!(!out.status.success(), "ujmmd {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

/// `(preset, accuracy, feature_distance, hsi)` from the `seed=aggregate` or
/// `seed=aggregate_std` rows of CSV output.
fn aggregates(csv: &str, which: &str) -> Vec<(String, f64, f64, f64)> {
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("task,preset,seed,final_accuracy,feature_distance,hsi")
    );
    lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|c| c[2] == which)
        .map(|c| {
            (
                c[1].to_string(),
                c[3].parse().unwrap(),
                c[4].parse().unwrap(),
                c[5].parse().unwrap(),
            )
        })
        .collect()
}

fn find<'a>(rows: &'a [(String, f64, f64, f64)], preset: &str) -> &'a (String, f64, f64, f64) {
    rows.iter()
        .find(|r| r.0 == preset)
        .unwrap_or_else(|| panic!("no {preset} row"))
}

fn small_synthetic(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        r#"
[experiment]
presets = ["WC", "PCA"]

[method]
dim = 4
iters = 2

[synthetic]
classes = 3
per_class_source = [8, 10, 12]
per_class_target = 10
dim = 6
class_separation = 4.0
domain_shift = 1.0
"#,
    )
    .unwrap();
    path
}

#[test]
fn run_reports_each_preset_and_starred_weighting_keeps_accuracy() {
    let config = configs().join("shifted.toml");
    let csv = stdout_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--preset",
        "WC*,KNN-baseline,WC",
        "--format",
        "csv",
    ]);
    let rows = aggregates(&csv, "aggregate");
    let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(names, ["KNN-baseline", "WC", "WC*"]);
    assert_eq!(csv.lines().filter(|l| l.starts_with("synthetic,WC,")).count(), 12);
    let (wc, wc_star) = (find(&rows, "WC").1, find(&rows, "WC*").1);
    assert!(wc_star >= wc, "WC* mean accuracy {wc_star} below WC {wc}");
}

#[test]
fn json_output_is_a_list_of_run_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_synthetic(dir.path());
    let out = dir.path().join("results.json");
    stdout_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--repeats",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let records: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 4);
    for rec in records {
        let mut keys: Vec<&str> = rec.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "feature_distance",
                "final_accuracy",
                "hsi",
                "per_iteration_accuracy",
                "preset",
                "seed",
                "task"
            ]
        );
        assert_eq!(rec["per_iteration_accuracy"].as_array().unwrap().len(), 2);
    }
    assert_eq!(records[0]["preset"], "PCA");
    assert_eq!(records[1]["seed"], 1);
}

#[test]
fn unknown_preset_names_the_valid_set() {
    let err = stderr_err(&["run", "--preset", "XYZ"]);
    assert!(err.contains("\"XYZ\""), "{err}");
    assert!(
        err.contains("KNN-baseline, PCA, M, M*, C, C*, WC, WC*, WWC, WWC*"),
        "{err}"
    );
}

#[test]
fn unknown_preset_in_config_points_at_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[experiment]\n\npresets = [\"WC\", \"XYZ\"]\n").unwrap();
    let err = stderr_err(&["run", "--config", path.to_str().unwrap()]);
    assert!(err.contains(&format!("{}:3:", path.display())), "{err}");
    assert!(err.contains("valid presets"), "{err}");
}

#[test]
fn config_errors_are_line_numbered() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[method]\nlambda = 0.1\ndim = \"twenty\"\n").unwrap();
    let err = stderr_err(&["run", "--config", path.to_str().unwrap()]);
    assert!(err.contains(&format!("{}:3:7:", path.display())), "{err}");

    fs::write(&path, "[method]\nlamda = 0.1\n").unwrap();
    let err = stderr_err(&["run", "--config", path.to_str().unwrap()]);
    assert!(
        err.contains(&format!("{}:2:", path.display())) && err.contains("lamda"),
        "{err}"
    );

    let missing = dir.path().join("missing.toml");
    let err = stderr_err(&["run", "--config", missing.to_str().unwrap()]);
    assert!(err.contains("missing.toml"), "{err}");
}

#[test]
fn config_needs_exactly_one_data_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("none.toml");
    fs::write(&path, "[method]\ndim = 3\n").unwrap();
    assert!(stderr_err(&["run", "--config", path.to_str().unwrap()]).contains("no data"));

    let both = fs::read_to_string(small_synthetic(dir.path())).unwrap()
        + "\n[[task]]\nname = \"t\"\nsource = \"a\"\nsource_labels = \"b\"\ntarget = \"c\"\nclasses = 2\n";
    fs::write(&path, both).unwrap();
    assert!(stderr_err(&["run", "--config", path.to_str().unwrap()]).contains("not both"));
}

#[test]
fn shift_std_is_zero_for_a_single_repeat() {
    let config = configs().join("imbalanced.toml");
    let csv = stdout_ok(&[
        "shift",
        "--config",
        config.to_str().unwrap(),
        "--preset",
        "WC",
        "--repeats",
        "1",
        "--format",
        "csv",
    ]);
    let std = aggregates(&csv, "aggregate_std");
    assert_eq!(std.len(), 1);
    assert_eq!((std[0].1, std[0].2, std[0].3), (0.0, 0.0, 0.0));
}

#[test]
fn shift_corrected_starred_beats_weighted_on_imbalanced_config() {
    let config = configs().join("imbalanced.toml");
    let csv = stdout_ok(&["shift", "--config", config.to_str().unwrap(), "--format", "csv"]);
    // Ten repeats by default, each with its own seed.
    assert_eq!(csv.lines().filter(|l| l.starts_with("synthetic,WWC*,")).count(), 12);
    let rows = aggregates(&csv, "aggregate");
    let (wc, wwc_star) = (find(&rows, "WC").1, find(&rows, "WWC*").1);
    assert!(wwc_star > wc, "WWC* mean {wwc_star} not above WC mean {wc}");
}

#[test]
fn ablation_trends_on_shifted_config() {
    let config = configs().join("shifted.toml");
    let csv = stdout_ok(&[
        "ablate",
        "--config",
        config.to_str().unwrap(),
        "--preset",
        "PCA,WC,WC*,WWC",
        "--format",
        "csv",
    ]);
    let rows = aggregates(&csv, "aggregate");
    let pca = find(&rows, "PCA").2;
    for p in ["WC", "WWC"] {
        let d = find(&rows, p).2;
        assert!(d < pca, "{p} feature distance {d:e} not below PCA {pca:e}");
    }
    let (wc, wc_star) = (find(&rows, "WC").3, find(&rows, "WC*").3);
    assert!(wc_star > wc, "WC* hsi {wc_star:e} not above WC {wc:e}");
}

/// Writes one domain as a features file and a labels file.
fn write_domain(dir: &Path, name: &str, rows: &[[f64; 3]], labels: &[usize]) {
    let features: String = rows.iter().map(|r| format!("{},{},{}\n", r[0], r[1], r[2])).collect();
    fs::write(dir.join(format!("{name}.csv")), features).unwrap();
    let labels: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(dir.join(format!("{name}_labels.csv")), labels).unwrap();
}

fn blob_domain() -> (Vec<[f64; 3]>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        for i in 0..6 {
            let mut r = [0.1 * i as f64, 0.05 * (i * i % 5) as f64, -0.07 * i as f64];
            r[class] += 5.0;
            rows.push(r);
            labels.push(class);
        }
    }
    (rows, labels)
}

#[test]
fn identical_domains_have_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, labels) = blob_domain();
    write_domain(dir.path(), "same", &rows, &labels);
    let config = dir.path().join("identical.toml");
    fs::write(
        &config,
        r#"
[experiment]
presets = ["KNN-baseline", "PCA", "WC", "WWC*"]

[method]
dim = 2

[[task]]
name = "same->same"
source = "same.csv"
source_labels = "same_labels.csv"
target = "same.csv"
target_labels = "same_labels.csv"
classes = 3
"#,
    )
    .unwrap();
    let csv = stdout_ok(&["ablate", "--config", config.to_str().unwrap(), "--format", "csv"]);
    let rows = aggregates(&csv, "aggregate");
    assert_eq!(rows.len(), 4);
    for (preset, accuracy, distance, _) in &rows {
        assert_eq!(*accuracy, 1.0, "{preset}");
        assert!(distance.abs() <= 1e-12, "{preset}: distance {distance:e}");
    }
    assert!(csv.lines().nth(1).unwrap().starts_with("same->same,KNN-baseline,0,"));
}

#[test]
fn ablate_requires_target_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, labels) = blob_domain();
    write_domain(dir.path(), "d", &rows, &labels);
    let config = dir.path().join("blind.toml");
    fs::write(
        &config,
        "[[task]]\nname = \"blind\"\nsource = \"d.csv\"\nsource_labels = \"d_labels.csv\"\ntarget = \"d.csv\"\nclasses = 3\n\n[method]\ndim = 2\n",
    )
    .unwrap();
    let err = stderr_err(&["ablate", "--config", config.to_str().unwrap()]);
    assert!(err.contains("target labels") && err.contains("blind"), "{err}");
    // Without truth a run still produces pseudo-labels, just no scores.
    let csv = stdout_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--preset",
        "WC",
        "--format",
        "csv",
    ]);
    assert!(csv.contains("blind,WC,0,,,"), "{csv}");
}

#[test]
fn malformed_data_file_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, labels) = blob_domain();
    write_domain(dir.path(), "d", &rows, &labels);
    fs::write(dir.path().join("bad.csv"), "1,2,3\n4,oops,6\n").unwrap();
    let config = dir.path().join("bad_data.toml");
    fs::write(
        &config,
        "[[task]]\nname = \"t\"\nsource = \"d.csv\"\nsource_labels = \"d_labels.csv\"\ntarget = \"bad.csv\"\nclasses = 3\n",
    )
    .unwrap();
    let err = stderr_err(&["run", "--config", config.to_str().unwrap()]);
    assert!(err.contains("bad.csv:2:"), "{err}");
}

#[test]
fn runs_are_deterministic_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_synthetic(dir.path());
    let args = [
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "5",
        "--format",
        "csv",
    ];
    let first = stdout_ok(&args);
    assert_eq!(first, stdout_ok(&args));
    assert!(first.contains("synthetic,PCA,5,"));

    let mut single = args.to_vec();
    single.extend(["--preset", "WC"]);
    let single = stdout_ok(&single);
    assert!(!single.contains(",PCA,"));
    let wc_line = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("synthetic,WC,5,"))
            .unwrap()
            .to_string()
    };
    assert_eq!(wc_line(&first), wc_line(&single));
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_synthetic(dir.path());
    let run = |threads: &str| {
        let out = Command::new(BIN)
            .args([
                "run",
                "--config",
                config.to_str().unwrap(),
                "--repeats",
                "3",
                "--format",
                "csv",
            ])
            .env("UJMMD_THREADS", threads)
            .output()
            .unwrap();
        (out.status.success(), String::from_utf8(out.stdout).unwrap())
    };
    let (ok1, one) = run("1");
    let (ok2, two) = run("2");
    assert!(ok1 && ok2);
    assert_eq!(one, two);
    assert!(!run("zero").0);
}

#[test]
fn table_is_printed_when_writing_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_synthetic(dir.path());
    let out = dir.path().join("r.csv");
    let table = stdout_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(table.starts_with("task "));
    assert_eq!(table.lines().count(), 3);
    assert!(fs::read_to_string(&out).unwrap().starts_with("task,preset,seed,"));
}

#[test]
fn check_passes_and_is_repeatable() {
    let first = stdout_ok(&["check"]);
    assert!(first.contains("8/8 properties passed"), "{first}");
    assert!(!first.contains("FAIL"));
    assert_eq!(first, stdout_ok(&["check"]));
}

#[test]
fn injected_sign_error_fails_the_identity_checks() {
    let out = ujmmd(&["check", "--inject-sign-error"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let failed = |name: &str| text.lines().any(|l| l.starts_with("FAIL") && l.contains(name));
    assert!(
        failed("label kernels reproduce marginal/class-wise/weighted MMD"),
        "{text}"
    );
    assert!(failed("explicit-embedding oracle equals trace form"), "{text}");
}
