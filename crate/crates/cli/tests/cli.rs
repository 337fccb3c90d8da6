use std::process::{Command, Output};

fn spqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spqkd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_kind(o: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).expect("stderr is one JSON object");
    assert!(v["message"].is_string());
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn unknown_scenario_exits_nonzero_with_json_error() {
    let o = spqkd(&["analyze", "-s", "no-such-scenario"]);
    assert!(!o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(error_kind(&o), "io");
}

#[test]
fn incomplete_scenario_reports_missing_keys() {
    let path = std::env::temp_dir().join(format!("spqkd-cli-{}.scenario", std::process::id()));
    std::fs::write(&path, "label = partial\nclock_hz = 1e6\n").unwrap();
    let o = spqkd(&["analyze", "-s", path.to_str().unwrap()]);
    std::fs::remove_file(&path).ok();
    assert!(!o.status.success());
    assert_eq!(error_kind(&o), "missing-keys");
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(v["message"].as_str().unwrap().contains("source.g2"));
}

#[test]
fn zero_pulses_is_an_invalid_parameter() {
    let o = spqkd(&["simulate", "-s", "paper-0km-5uW", "--pulses", "0"]);
    assert!(!o.status.success());
    assert_eq!(error_kind(&o), "invalid-parameter");
}

#[test]
fn analyze_equals_single_point_sweep() {
    let a = stdout(&spqkd(&["analyze", "-s", "paper-2km-5uW"]));
    let s = stdout(&spqkd(&[
        "sweep", "-s", "paper-2km-5uW", "--param", "channel.length_km", "--from", "2", "--to", "2", "--steps", "1",
    ]));
    let (ha, ra) = a.split_once('\n').unwrap();
    let (hs, rs) = s.split_once('\n').unwrap();
    assert_eq!(ha, hs);
    let fa: Vec<&str> = ra.trim_end().split(',').collect();
    let fs: Vec<&str> = rs.trim_end().split(',').collect();
    assert_eq!(fa.len(), fs.len());
    for (i, (x, y)) in fa.iter().zip(&fs).enumerate() {
        if i != 1 {
            assert_eq!(x, y, "column {i}");
        }
    }
    assert_eq!(fs[1], "2");
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let args = ["simulate", "-s", "strauf-82MHz-3dB", "--pulses", "2000000", "--seed", "11"];
    let a = spqkd(&args);
    let b = spqkd(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = spqkd(&["simulate", "-s", "strauf-82MHz-3dB", "--pulses", "2000000", "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
    let out = stdout(&a);
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), row.len());
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("seed"), "11");
    assert_eq!(col("pulses"), "2000000");
}

#[test]
fn bundled_scenario_names_resolve_for_every_command() {
    for name in ["paper-0km-0.25uW", "paper-0km-1uW", "paper-2km-1uW", "strauf-82MHz-10.6dB"] {
        assert!(spqkd(&["analyze", "-s", name]).status.success(), "{name}");
    }
}

#[test]
fn max_distance_without_reference_fails_cleanly() {
    let o = spqkd(&["max-distance", "-s", "strauf-82MHz-10.6dB", "--method", "equivalent-flux"]);
    assert!(!o.status.success());
    error_kind(&o);
}

#[test]
fn hbt_output_has_one_row() {
    let o = spqkd(&["hbt", "--pulses", "100000"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn counts_accept_scientific_notation() {
    let a = spqkd(&["hbt", "--pulses", "2e5", "--seed", "9"]);
    let b = spqkd(&["hbt", "--pulses", "200000", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(!spqkd(&["hbt", "--pulses", "1.5"]).status.success());
}
