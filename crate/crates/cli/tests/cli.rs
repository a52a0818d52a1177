use std::process::{Command, Output};

fn zaloha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zaloha"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn team_sweep_prints_csv() {
    let o = zaloha(&["team", "--pa", "0.1:0.9:0.1", "--qr", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "pa");
    let z = header
        .iter()
        .position(|c| *c == "throughput_zigzag")
        .unwrap();
    let c = header
        .iter()
        .position(|c| *c == "throughput_classic")
        .unwrap();
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[z] >= r[c]));
}

#[test]
fn analytic_output_is_byte_stable() {
    let args = [
        "game",
        "--m",
        "4",
        "--qr-tagged",
        "0.1:1:0.1",
        "--channel",
        "zigzag",
    ];
    assert_eq!(zaloha(&args).stdout, zaloha(&args).stdout);
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        vec!["team", "--pa", "0.1:0.9:0.1", "--qr", "0.1:0.5:0.1"],
        vec!["team", "--pa", "0.5:0.1:0.1"],
        vec!["team", "--pa", "1.5"],
        vec!["team", "--channel", "wifi"],
        vec!["figure", "fig42"],
        vec!["nonsense"],
    ] {
        let o = zaloha(&args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn failed_points_are_marked_and_reported() {
    // Without arrivals there is nothing to optimize.
    let o = zaloha(&["optimize", "--pa", "0", "--channel", "classic"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o)
        .lines()
        .nth(1)
        .unwrap()
        .ends_with("error,error,error,error"));
}

#[test]
fn out_writes_table_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig10.json");
    let o = zaloha(&[
        "figure",
        "fig10",
        "--qr",
        "0.2:0.8:0.2",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 4);
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("fig10.json.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["defaults"]["pa"], "0.3");
    assert!(meta["version"].is_string());
    assert!(meta["elapsed_ms"].is_u64());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "m = 3\npa = \"0.2:0.4:0.1\"\nchannel = \"zigzag\"\n").unwrap();
    let o = zaloha(&["team", "--config", cfg.to_str().unwrap(), "--pa", "0.25"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0.25,"));
    assert!(!text.contains("classic"));
}

#[test]
fn simulate_reports_standard_errors() {
    let o = zaloha(&[
        "simulate",
        "--m",
        "3",
        "--pa",
        "0.2",
        "--qr",
        "0.5",
        "--frames",
        "20000",
        "--seed",
        "4",
        "--channel",
        "zigzag",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("pa,throughput_zigzag,throughput_se_zigzag,"));
    let again = zaloha(&[
        "simulate",
        "--m",
        "3",
        "--pa",
        "0.2",
        "--qr",
        "0.5",
        "--frames",
        "20000",
        "--seed",
        "4",
        "--channel",
        "zigzag",
    ]);
    assert_eq!(text, stdout(&again));
}

#[test]
fn validate_prints_table_and_known_discrepancies() {
    let o = zaloha(&[
        "validate", "--m", "3", "--pa", "0.4", "--qr", "0.5", "--frames", "50000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("known discrepancies"));
    assert!(text.contains("fails as expected"));
    assert!(text.trim_end().ends_with("overall: PASS"));
}

#[test]
fn help_exits_cleanly() {
    let o = zaloha(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("best-response"));
}
