use quayfleet::cli::{run_cli, EXIT_INVALID, EXIT_USAGE};
use quayfleet::sim::Metrics;

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/demo.json");

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(std::iter::once("quayfleet").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn size_prints_every_class() {
    let (code, out, _) = cli(&["size"]);
    assert_eq!(code, 0);
    for needle in ["699.75", "29.16", "229.18", "458.4"] {
        assert!(out.contains(needle), "missing {needle} in\n{out}");
    }
    let (code, csv, _) = cli(&["--format", "csv", "size"]);
    assert_eq!(code, 0);
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn battery_sizing() {
    let (code, out, _) = cli(&["battery", "LiFePO4", "640", "200000"]);
    assert_eq!((code, out.trim()), (0, "200S9P, 216.0 kWh, 640.0 V"));
    let (code, _, err) = cli(&["battery", "unobtainium", "640", "200000"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.starts_with("error:"));
    assert_eq!(cli(&["battery", "LiFePO4", "-5", "1"]).0, EXIT_USAGE);
}

#[test]
fn usage_errors() {
    assert_eq!(cli(&[]).0, EXIT_USAGE);
    assert_eq!(cli(&["fly"]).0, EXIT_USAGE);
    assert_eq!(cli(&["simulate", DEMO, "--dump-frames"]).0, EXIT_USAGE);
    assert_eq!(cli(&["simulate", "/nonexistent/scenario.json"]).0, EXIT_USAGE);
    assert_eq!(cli(&["--help"]).0, 0);
}

#[test]
fn invalid_scenario_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version": 1, "map": {"layout": ["Q>S"], "strongly_connected": false}, "fleet": []}"#).unwrap();
    let (code, _, err) = cli(&["simulate", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("fleet is empty"), "{err}");
}

#[test]
fn simulate_then_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let (code, out, err) = cli(&["simulate", DEMO, "--out", d, "--dump-frames"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("jobs completed   10"));
    let written: Metrics = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let frames = std::fs::read_to_string(dir.path().join("frames.hex")).unwrap();
    assert!(frames.lines().count() > 100);
    let trace = dir.path().join("trace.csv");
    let (code, json, _) = cli(&["--format", "json", "report", trace.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(serde_json::from_str::<Metrics>(&json).unwrap(), written);
}

#[test]
fn replay_check_reports_identical() {
    let (code, out, _) = cli(&["replay-check", DEMO, "--seed", "4"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("IDENTICAL "));
}
