use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mrp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrp"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) {
    fs::write(
        dir.join("cfg.toml"),
        format!("sample_sizes = [400]\nreplicates = 1\n{extra}"),
    )
    .unwrap();
}

#[test]
fn default_config_is_valid_toml_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mrp(tmp.path(), &["print-default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    fs::write(tmp.path().join("cfg.toml"), &text).unwrap();
    assert!(text.contains("t_max = 0.9"));
    assert!(text.contains("alpha = 0.25"));
    let cfg = mrp_core::experiment::ExperimentConfig::load(&tmp.path().join("cfg.toml")).unwrap();
    assert_eq!(cfg, mrp_core::experiment::ExperimentConfig::default());
}

#[test]
fn simulate_writes_row_per_mark_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "");
    for out_dir in ["a", "b"] {
        let out = mrp(tmp.path(), &["--config", "cfg.toml", "--output", out_dir, "--seed", "5", "simulate"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read_to_string(tmp.path().join("a/trajectories/traj_n400_r0.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("b/trajectories/traj_n400_r0.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 402);
}

#[test]
fn simulate_zero_jumps_gives_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.toml"), "sample_sizes = [0]\nreplicates = 1\n").unwrap();
    let out = mrp(tmp.path(), &["--config", "cfg.toml", "--output", "o", "simulate"]);
    assert!(out.status.success());
    let text = fs::read_to_string(tmp.path().join("o/trajectories/traj_n0_r0.csv")).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["index,mark,sojourn,censored", "0,3.0000000000000000e1,,"]);
}

#[test]
fn estimate_writes_curves() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "");
    assert!(mrp(tmp.path(), &["--config", "cfg.toml", "--output", "o", "simulate"]).status.success());
    let out = mrp(
        tmp.path(),
        &["--config", "cfg.toml", "--output", "e", "estimate", "o/trajectories/traj_n400_r0.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cum = fs::read_to_string(tmp.path().join("e/cumulative.csv")).unwrap();
    assert!(cum.lines().nth(1).unwrap() == "time,estimate,variance,ci_low,ci_high");
    assert_eq!(cum.lines().count(), 2 + 512);
    // Λ̂(20, t) should follow 4t
    let row = cum
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|r| r[0] >= 0.8)
        .unwrap();
    assert!((row[1] - 3.2).abs() < 1.0, "estimate {}", row[1]);
    assert!(row[3] <= row[1] && row[1] <= row[4]);
    let rate = fs::read_to_string(tmp.path().join("e/rate.csv")).unwrap();
    assert!(rate.starts_with("time,rate,flag_edge\n"));
}

#[test]
fn estimate_warns_on_unvisited_cell() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "");
    let mut text = String::from("index,mark,sojourn,censored\n0,30,,\n");
    for i in 1..=100 {
        text.push_str(&format!("{i},30,0.25,0\n"));
    }
    fs::write(tmp.path().join("t.csv"), text).unwrap();
    let out = mrp(tmp.path(), &["--config", "cfg.toml", "--output", "e", "estimate", "t.csv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("estimates set to zero"));
    let cum = fs::read_to_string(tmp.path().join("e/cumulative.csv")).unwrap();
    assert!(cum.lines().skip(2).all(|l| l.split(',').skip(1).all(|v| v == "0")));
}

#[test]
fn estimate_reports_parse_line() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "");
    fs::write(tmp.path().join("bad.csv"), "index,mark,sojourn,censored\n0,30,,\n1,20,x,0\n").unwrap();
    let out = mrp(tmp.path(), &["--config", "cfg.toml", "estimate", "bad.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn estimate_refuses_window_beyond_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "t_max = 1.0\n");
    fs::write(tmp.path().join("t.csv"), "index,mark,sojourn,censored\n0,20,,\n1,20,0.3,0\n").unwrap();
    let out = mrp(tmp.path(), &["--config", "cfg.toml", "estimate", "t.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain error"));
}

#[test]
fn experiment_ise_csv_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.toml"), "sample_sizes = [200, 400]\nreplicates = 10\n").unwrap();
    for (dir, jobs) in [("a", "1"), ("b", "3")] {
        let out = mrp(tmp.path(), &["--config", "cfg.toml", "--output", dir, "--jobs", jobs, "experiment"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(tmp.path().join("a/ise.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/ise.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("sample_size,replicate,ise_lambda_cum,ise_lambda\n"));
    assert_eq!(text.lines().count(), 21);
    let report = fs::read_to_string(tmp.path().join("a/report.json")).unwrap();
    assert_eq!(report.matches("\"metric\"").count(), 4);
}
