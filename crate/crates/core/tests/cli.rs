use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netmimo"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn missing_required_field_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"M": 2, "K": 2, "K_served": 2, "seed": 1, "targets": [1, 1], "snr_db": [10],
            "strategies": [{"allocation": "equal-power"}]}"#,
    );
    let out = run(&["outage"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('B'));
}

#[test]
fn more_served_users_than_antennas_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"B": 2, "M": 2, "K": 3, "K_served": 3, "seed": 1, "targets": [1, 1, 1], "snr_db": [10],
            "strategies": [{"allocation": "equal-power"}]}"#,
    );
    assert_eq!(run(&["outage"], &cfg, dir.path()).status.code(), Some(2));
}

#[test]
fn unknown_suite_exits_2() {
    let out = bin().args(["validate", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_suites_pass() {
    for suite in ["kkt", "eq22", "oracle", "dds"] {
        let out = bin().args(["validate", suite, "--seed", "3"]).output().unwrap();
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "{suite}: {text}");
        assert!(text.contains(&format!("suite={suite} result=pass")), "{text}");
    }
}

#[test]
fn outage_csv_has_one_row_per_strategy_and_snr() {
    let dir = TempDir::new().unwrap();
    let out = run(&["outage", "--trials", "500", "--snr", "10:20:5"], &scenario("fig3.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("outage.csv")).unwrap();
    assert!(csv.starts_with("# schema=netmimo-csv/1 kind=outage"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("snr_db,strategy,pout_joint,pout_user_1,pout_user_2"));
    assert_eq!(data_rows(&csv).len(), 4 * 3);
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let out = bin()
        .args(["outage", "--trials", "200", "--snr", "10:10:1", "--config"])
        .arg(scenario("fig4.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(data_rows(&String::from_utf8_lossy(&out.stdout)).len(), 2);
}

#[test]
fn position_outside_range_warns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"B": 2, "M": 4, "K": 2, "K_served": 2, "seed": 5, "targets": [1, 1], "snr_db": [10],
            "strategies": [{"allocation": "equal-power"}], "trials": 200,
            "topology": {"bs_positions": [1, 3], "ut_positions": [0, 3], "cross_offset": 1, "pathloss_exponent": 3},
            "positions": [0.5, 2.5]}"#,
    );
    let out = run(&["position-sweep"], &cfg, dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
    let csv = std::fs::read_to_string(dir.path().join("position.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 2);
    assert!(csv.lines().any(|l| l.starts_with("# warning:")));

    let strict = bin()
        .args(["position-sweep", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn dds_trace_has_b_plus_one_records_per_round() {
    let dir = TempDir::new().unwrap();
    let out = run(&["dds", "-vv", "--trials", "300", "--snr", "5:5:1"], &scenario("fig6.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("dds_trace.log")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 4 * 3);
    for round in 0..4 {
        let tag = format!("round={round} ");
        assert_eq!(lines.iter().filter(|l| l.starts_with(&tag)).count(), 3, "{trace}");
    }
    assert!(dir.path().join("dds.csv").exists());
}

#[test]
fn dds_without_dds_strategy_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["dds", "--trials", "10"], &scenario("fig4.json"), dir.path()).status.code(), Some(2));
}

#[test]
fn seed_override_changes_output_and_repeats() {
    let read = |seed: &str| {
        let dir = TempDir::new().unwrap();
        let out = run(&["outage", "--trials", "400", "--snr", "10:10:1", "--seed", seed], &scenario("fig4.json"), dir.path());
        assert!(out.status.success());
        std::fs::read_to_string(dir.path().join("outage.csv")).unwrap()
    };
    assert_eq!(read("9"), read("9"));
    assert_ne!(read("9"), read("10"));
}
