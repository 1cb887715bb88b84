use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn nmflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmflab"))
        .args(args)
        .env_remove("NMFLAB_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nmflab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Asserts a one-line `error[CODE]: ...` on stderr and a nonzero exit.
fn fails_with(args: &[&str], code: &str) {
    let out = nmflab(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    let line = err.lines().last().unwrap_or_default();
    assert!(line.starts_with(&format!("error[{code}]: ")), "{args:?}: {err}");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn train_orthodont(dir: &Path) -> PathBuf {
    let model = dir.join("ortho.json");
    ok(&[
        "train", "--data", s(&data("orthodont.csv")), "--no-scale", "--id-column", "subject",
        "--label-column", "sex", "--beta", "0.0079", "-o", s(&model),
    ]);
    model
}

#[test]
fn orthodont_kernel_training_and_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_orthodont(dir.path());
    let text = ok(&["predict", "--model", s(&model), "--data", s(&data("orthodont.csv")), "--id-column", "subject"]);
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["sample_id", "Male", "Female", "predicted"]);
    assert_eq!(rows.len(), 27);
    let m01 = rows.iter().find(|r| r[0] == "M01").unwrap();
    let p: f64 = m01[1].parse().unwrap();
    assert!((p - 0.94).abs() <= 0.05, "{p}");
    assert_eq!(m01[3], "Male");
    for r in &rows {
        let sum: f64 = r[1].parse::<f64>().unwrap() + r[2].parse::<f64>().unwrap();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["format"], "nmflab-model");
    assert_eq!(json["version"], 1);
    assert_eq!(json["mode"], "label");
}

#[test]
fn prediction_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_orthodont(dir.path());
    let first = std::fs::read(&a).unwrap();
    let b = train_orthodont(dir.path());
    assert_eq!(first, std::fs::read(&b).unwrap());
}

#[test]
fn forward_mode_fits_group_means() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("fwd.json");
    let summary = ok(&[
        "train", "--mode", "forward", "--data", s(&data("orthodont.csv")), "--id-column", "subject",
        "--label-column", "sex", "-o", s(&model),
    ]);
    assert!(summary.contains("Male: 22.8750 23.8125 25.7187 27.4687"), "{summary}");
    let text = ok(&["predict", "--model", s(&model), "--data", s(&data("orthodont.csv")), "--id-column", "subject"]);
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["sample_id", "age8", "age10", "age12", "age14"]);
    let f01 = rows.iter().find(|r| r[0] == "F01").unwrap();
    let age8: f64 = f01[1].parse().unwrap();
    assert!((age8 - 21.181818).abs() < 1e-4);
}

#[test]
fn empty_input_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_orthodont(dir.path());
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "subject,age8,age10,age12,age14\n").unwrap();
    let text = ok(&["predict", "--model", s(&model), "--data", s(&empty), "--id-column", "subject"]);
    assert_eq!(text, "sample_id,Male,Female,predicted\n");
}

#[test]
fn scaling_is_reapplied_at_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("iris.json");
    ok(&["train", "--data", s(&data("iris.csv")), "--label-column", "species", "-o", s(&model)]);
    let direct = ok(&["predict", "--model", s(&model), "--data", s(&data("iris.csv"))]);

    // Same samples with columns reordered and an extra column; selection is by name.
    let src = std::fs::read_to_string(data("iris.csv")).unwrap();
    let mut lines = src.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mut shuffled = format!("extra,{}\n", header.iter().rev().cloned().collect::<Vec<_>>().join(","));
    for l in lines {
        let cells: Vec<&str> = l.split(',').rev().collect();
        shuffled.push_str(&format!("7,{}\n", cells.join(",")));
    }
    let path = dir.path().join("shuffled.csv");
    std::fs::write(&path, shuffled).unwrap();
    assert_eq!(ok(&["predict", "--model", s(&model), "--data", s(&path)]), direct);

    let (_, rows) = parse_csv(&direct);
    let hits = rows
        .iter()
        .zip(src.lines().skip(1))
        .filter(|(r, l)| l.ends_with(r.last().unwrap().as_str()))
        .count();
    assert!(hits as f64 / rows.len() as f64 > 0.9, "{hits}");
}

#[test]
fn singleton_grid_gives_one_row() {
    let text = ok(&["cv", "--data", s(&data("iris.csv")), "--label-column", "species", "--beta-grid", "1.5"]);
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["kind", "beta", "landmarks", "mean_loss", "mean_accuracy", "chosen"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][5], "true");
}

#[test]
fn cv_is_deterministic_for_both_criteria() {
    let iris = data("iris.csv");
    for crit in ["loss", "accuracy"] {
        let args = ["cv", "--data", s(&iris), "--label-column", "species", "--criterion", crit];
        let a = ok(&args);
        assert_eq!(a, ok(&args));
        assert_eq!(parse_csv(&a).1.len(), 4);
    }
}

#[test]
fn data_dir_resolves_relative_paths() {
    let out = Command::new(env!("CARGO_BIN_EXE_nmflab"))
        .args(["cv", "--data", "iris.csv", "--label-column", "species", "--beta-grid", "2"])
        .env("NMFLAB_DATA_DIR", data(""))
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn errors_are_single_coded_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path()).to_string() + "/m.json";
    let iris = data("iris.csv");
    fails_with(&["train", "--data", "/no/such/file.csv", "--label-column", "x", "-o", &out], "E_DATA");
    fails_with(&["train", "--data", s(&iris), "-o", &out], "E_DATA");
    fails_with(&["train", "--data", s(&iris), "--label-column", "species", "--beta=-1", "-o", &out], "E_CONFIG");
    fails_with(
        &["train", "--data", s(&iris), "--label-column", "species", "--beta", "2", "--beta-grid", "1,2", "-o", &out],
        "E_CONFIG",
    );
    fails_with(
        &["train", "--data", s(&iris), "--label-column", "species", "--landmarks", "5", "-o", &out],
        "E_CONFIG",
    );
    fails_with(
        &["train", "--mode", "forward", "--data", s(&iris), "--label-column", "species", "--soft-r", "0.8", "-o", &out],
        "E_CONFIG",
    );
    fails_with(&["train", "--data", s(&iris), "--label-column", "species", "--soft-r", "1.5", "-o", &out], "E_CONFIG");
    fails_with(&["frobnicate"], "E_USAGE");
    fails_with(&["train", "--data", s(&iris), "--design", "bogus", "-o", &out], "E_USAGE");
}

#[test]
fn model_version_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_orthodont(dir.path());
    let text = std::fs::read_to_string(&model).unwrap().replacen("\"version\": 1", "\"version\": 99", 1);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text).unwrap();
    fails_with(&["predict", "--model", s(&bad), "--data", s(&data("orthodont.csv"))], "E_VERSION");
}

#[test]
fn missing_feature_column_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_orthodont(dir.path());
    let other = dir.path().join("other.csv");
    std::fs::write(&other, "subject,age8,age10\nM01,1,2\n").unwrap();
    fails_with(&["predict", "--model", s(&model), "--data", s(&other), "--id-column", "subject"], "E_DATA");
}
