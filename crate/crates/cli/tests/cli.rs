use std::process::{Command, Output};

fn run(args: &[&str], config: &str) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_jscc-bounds"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap()
}

fn config(source: &str, distortion: &str, thresholds: &str) -> String {
    format!(
        r#"{{
            "source": {source},
            "channel": {{"kernel": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]], "first": 2, "second": 2}},
            "distortion": {distortion},
            "thresholds": {thresholds}
        }}"#
    )
}

const COPY_SOURCE: &str = r#"{"joint": [[0.5, 0.0], [0.0, 0.5]]}"#;

fn h2(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

#[test]
fn rd_reports_binary_rate_in_bits() {
    let out = run(&["rd"], &config(COPY_SOURCE, "{}", r#"{"D_s": 1.0, "D_x": 0.11}"#));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    assert_eq!(&header[2], "rate_bits");
    let row = rows.records().next().unwrap().unwrap();
    let rate: f64 = row[2].parse().unwrap();
    assert!((rate - (1.0 - h2(0.11))).abs() < 1e-6, "{rate}");
}

#[test]
fn natural_log_base_changes_the_header() {
    let out = run(&["rd", "--log-base", "e"], &config(COPY_SOURCE, "{}", r#"{"D_s": 1.0, "D_x": 0.11}"#));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().contains("rate_nats"));
}

#[test]
fn malformed_json_exits_with_config_error() {
    let out = run(&["rd"], "{\n  \"source\": [1, 2,\n}");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn empty_threshold_grid_exits_with_config_error() {
    let out = run(&["rd"], &config(COPY_SOURCE, "{}", r#"{"D_s": [], "D_x": 0.1}"#));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_target_exits_with_numerical_error() {
    let distortion = r#"{"d_s": [[0.5, 1.0], [1.0, 0.5]], "d_x": "hamming"}"#;
    let out = run(&["rd"], &config(COPY_SOURCE, distortion, r#"{"D_s": 0.2, "D_x": 0.5}"#));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
