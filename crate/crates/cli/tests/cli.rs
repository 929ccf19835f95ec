use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn elbowsig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elbowsig"))
        .args(args)
        .output()
        .unwrap()
}

fn iris() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn k_max_below_two_is_a_flag_error() {
    let out = elbowsig(&["analyze", "--data", iris().to_str().unwrap(), "--k-max", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("k_max"));
}

#[test]
fn flags_are_checked_before_the_data_is_read() {
    let out = elbowsig(&["analyze", "--data", "/nonexistent/x.csv", "--n-ref", "3"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let out = elbowsig(&["analyze", "--data", iris().to_str().unwrap(), "--method", "dbscan"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_names_the_path() {
    let out = elbowsig(&["analyze", "--data", "/nonexistent/input.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let msg = stderr(&out);
    assert!(msg.contains("/nonexistent/input.csv"), "{msg}");
    assert!(msg.contains("loading data"), "{msg}");
}

#[test]
fn non_numeric_cell_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b\n1,2\n3,oops\n5,6\n").unwrap();
    let out = elbowsig(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--k-max",
        "2",
        "--n-ref",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn too_few_rows_for_k_max() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.csv");
    fs::write(&path, "x\n1\n2\n3\n4\n").unwrap();
    let out = elbowsig(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--k-max",
        "5",
        "--n-ref",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn theory_prints_the_prediction_table() {
    let out = elbowsig(&["theory", "--k-max", "3", "--d", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,D,m,large_n,fcm,gmm");
    assert!(lines[1].starts_with("2,2,2.0,1.0,"), "{}", lines[1]);
    assert!(lines[2].starts_with("3,2,2.0,0.6666666666666666,"), "{}", lines[2]);
}

#[test]
fn simulate_dry_run_reports_the_plan() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/blobs_d5_m3.toml");
    let out = elbowsig(&["simulate", "--config", config.to_str().unwrap(), "--dry-run"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("100 replicates"), "{text}");
}

#[test]
fn simulate_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    fs::write(
        &path,
        "replicates = 2\ngenerator = \"uniform\"\nn = 20\nd = 2\nk_maxx = 4\n",
    )
    .unwrap();
    let out = elbowsig(&["simulate", "--config", path.to_str().unwrap(), "--dry-run"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn analyze_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let data = iris();
    let base = [
        "analyze",
        "--data",
        data.to_str().unwrap(),
        "--k-max",
        "5",
        "--n-ref",
        "20",
        "--seed",
        "3",
    ];
    let out = elbowsig(&[&base[..], &["--out", json.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("per-k (*)"), "{summary}");

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["schema_version"], "elbowsig.report/1");
    assert_eq!(report["n_ref"], 20);
    assert_eq!(report["p_values"]["k_values"].as_array().unwrap().len(), 4);

    let out = elbowsig(&[&base[..], &["--out", csv.to_str().unwrap(), "--format", "csv"]].concat());
    assert!(out.status.success());
    let table = fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("k,H,delta,p,significant_per_k,significant_fdr\n"));
    assert_eq!(table.lines().count(), 1 + 6);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let path = dir.path().join(format!("t{threads}.json"));
        let out = elbowsig(&[
            "--threads",
            threads,
            "analyze",
            "--data",
            iris().to_str().unwrap(),
            "--method",
            "kmeans",
            "--k-max",
            "5",
            "--n-ref",
            "30",
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        reports.push(fs::read(&path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn baselines_report_gap_and_indices() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let out = elbowsig(&[
        "baselines",
        "--data",
        iris().to_str().unwrap(),
        "--k-max",
        "5",
        "--n-ref",
        "20",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["schema_version"], "elbowsig.baselines/1");
    assert!(report["gap"]["k_hat_i"].as_u64().is_some());
}
