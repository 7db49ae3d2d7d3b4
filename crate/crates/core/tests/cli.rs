use std::fs;
use std::process::Command;

use fieldcalc::simulator::CSV_HEADER;

fn fieldsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fieldsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn default_run_writes_one_row_per_second() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.csv");
    let run = fieldsim(&["--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 500);
}

#[test]
fn negative_duration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.csv");
    let run = fieldsim(&["--duration", "-5", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("Usage"));
    assert!(!out.exists());
}

#[test]
fn unknown_flags_are_rejected() {
    let run = fieldsim(&["--warp-speed", "9"]);
    assert!(!run.status.success());
}

#[test]
fn same_seed_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let paths = ["a.csv", "b.csv"].map(|n| dir.path().join(n));
    for p in &paths {
        let run = fieldsim(&[
            "--scenario", "spawn-demo", "--seed", "9", "--duration", "90",
            "--out", p.to_str().unwrap(),
        ]);
        assert!(run.status.success());
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    let out = dir.path().join("m.csv");
    fs::write(&config, "# short run\nscenario = gradient-demo\nduration = 40\nseed = 4\n").unwrap();
    let run = fieldsim(&[
        "--config", config.to_str().unwrap(), "--duration", "25",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 26);
}
