//! Black-box tests of the `spinsim` binary: exit codes, artifact layout,
//! and the rate-table CSV round trip.

use std::path::Path;
use std::process::{Command, Output};

fn spinsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn models_emits_rate_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinsim(&["models", "--out", "tables"], dir.path());
    assert!(out.status.success());
    for name in ["contact", "voter", "glauber_ising", "pure_death"] {
        let csv =
            std::fs::read_to_string(dir.path().join("tables").join(format!("model_{name}.csv")))
                .unwrap();
        assert!(csv.starts_with("pattern,rate\n"), "{name}: {csv}");
    }
    let contact = std::fs::read_to_string(dir.path().join("tables/model_contact.csv")).unwrap();
    assert!(contact.contains("010,1\n"), "lone particle dies at rate delta: {contact}");
    assert!(contact.contains("100,2\n"), "one occupied neighbor births at lambda: {contact}");
}

#[test]
fn rate_table_csv_round_trips_through_custom_model() {
    let dir = tempfile::tempdir().unwrap();
    assert!(spinsim(&["models", "--out", "tables"], dir.path()).status.success());
    let config = write_config(
        dir.path(),
        "custom.json",
        r#"{"model": {"name": "custom", "radius": 1, "table_csv": "tables/model_contact.csv"}}"#,
    );
    let out = spinsim(&["check", "--config", &config, "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("run/check.json")).unwrap();
    assert!(report.contains("\"attractive\": true"));
    assert!(report.contains("\"coupling_monotone\": true"));
}

#[test]
fn check_flags_non_attractive_table_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.json",
        r#"{"model": {"name": "custom", "radius": 1, "rates": {
            "000": 0.5, "001": 0.5, "010": 0.5, "011": 0.5,
            "100": 0.2, "101": 0.5, "110": 0.5, "111": 0.5
        }}}"#,
    );
    let out = spinsim(&["check", "--config", &config, "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("c(000) = 0.5 vs c(100) = 0.2"), "{stdout}");
}

#[test]
fn malformed_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"model": {"name": "contact", "lambda": 2.0, "delta": 1.0}, "bogus_field": 1}"#,
        r#"{"model": {"name": "contact", "lambda": 2.0, "delta": 1.0}, "t": -1.0}"#,
        r#"{"model": {"name": "contact", "lambda": 2.0, "delta": 1.0}, "m": 0}"#,
        r#"{"model": {"name": "no_such_model"}}"#,
        r#"not json"#,
    ];
    for (i, body) in cases.iter().enumerate() {
        let config = write_config(dir.path(), &format!("bad{i}.json"), body);
        let out = spinsim(&["verify", "--config", &config, "--out", "run"], dir.path());
        assert_eq!(out.status.code(), Some(2), "case {i}: {body}");
        assert!(!out.stderr.is_empty(), "case {i} should explain the problem");
    }
    let out = spinsim(&["verify", "--config", "missing.json", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_writes_manifest_and_margins_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "verify.json",
        r#"{
            "model": {"name": "contact", "lambda": 2.0, "delta": 1.0},
            "t": 0.25, "z_range": [0, 2], "m": 2,
            "replicas": 500, "seed": 7, "mode": "coupled"
        }"#,
    );
    let out = spinsim(&["verify", "--config", &config, "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/verify_margins.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("z,mode,verdict,witness,margin"));
    assert_eq!(lines.clone().count(), 3, "one row per z in [0, 2]");
    assert!(lines.all(|l| l.contains(",coupled,pass,")));

    let manifest = std::fs::read_to_string(dir.path().join("run/run_manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"verify\""));
    assert!(manifest.contains("\"seed\": 7"));
}

#[test]
fn verify_exact_mode_and_remark2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "exact.json",
        r#"{
            "model": {"name": "contact", "lambda": 2.0, "delta": 1.0},
            "t": 0.25, "z_range": [0, 3], "m": 2,
            "mode": "exact", "exact_window": [-4, 6],
            "init": {"kind": "interval", "n": 2}, "n_sweep": [0, 2, 6]
        }"#,
    );
    let out = spinsim(&["verify-remark2", "--config", &config, "--out", "r2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("smallest tested N that passes:"), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("r2/verify_remark2_margins.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 4, "header plus 4 z-rows per N");
}

#[test]
fn mode_override_flag_wins_over_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "cfg.json",
        r#"{
            "model": {"name": "contact", "lambda": 2.0, "delta": 1.0},
            "t": 0.25, "z_range": [0, 2], "m": 2, "mode": "coupled",
            "exact_window": [-4, 5]
        }"#,
    );
    let out = spinsim(
        &["verify", "--config", &config, "--out", "run", "--mode", "exact"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/verify_margins.csv")).unwrap();
    assert!(csv.contains(",exact,"), "{csv}");

    let out = spinsim(
        &["verify", "--config", &config, "--out", "run", "--mode", "sideways"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_emits_full_window_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sim.json",
        r#"{
            "model": {"name": "pure_death"},
            "t": 0.0, "z_range": [0, 3], "seed": 1, "backend": "gillespie"
        }"#,
    );
    let out = spinsim(&["simulate", "--config", &config, "--out", "sim"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sim/configuration.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,spin"));
    // t = 0: the step initial condition comes back unchanged.
    for line in lines {
        let (x, spin) = line.split_once(',').unwrap();
        let x: i64 = x.parse().unwrap();
        assert_eq!(spin, if x <= 0 { "1" } else { "0" }, "site {x}");
    }
}

#[test]
fn profile_csv_has_contract_header_and_valid_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "prof.json",
        r#"{
            "model": {"name": "contact", "lambda": 2.0, "delta": 1.0},
            "t": 0.5, "z_range": [-2, 2], "replicas": 2000, "seed": 3
        }"#,
    );
    let out = spinsim(&["profile", "--config", &config, "--out", "prof"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("prof/profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("z,p_hat,ci_low,ci_high,n"));
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let p: f64 = cells[1].parse().unwrap();
        let lo: f64 = cells[2].parse().unwrap();
        let hi: f64 = cells[3].parse().unwrap();
        let n: u64 = cells[4].parse().unwrap();
        assert!(lo <= p && p <= hi && (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        assert_eq!(n, 2000);
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn self_check_passes_on_a_short_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sc.json",
        r#"{
            "model": {"name": "contact", "lambda": 2.0, "delta": 1.0},
            "t": 0.25, "z_range": [0, 2], "replicas": 4000, "seed": 11
        }"#,
    );
    let out = spinsim(&["self-check", "--config", &config, "--out", "sc"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sc/self_check.csv")).unwrap();
    assert!(csv.starts_with("z,p_default,p_doubled,abs_diff,combined_se\n"));
}
