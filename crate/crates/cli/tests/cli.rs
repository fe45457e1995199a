//! End-to-end checks of the command-line interface.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn manetsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manetsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("manetsim-cli-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn run_selective_preset_reports_the_black_hole() {
    let dir = temp_dir("selective");
    let out = manetsim(&[
        "run",
        "--preset",
        "paper-blackhole-selective",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = read(&dir.join("summary.txt"));
    let alarms: Vec<&str> = summary
        .lines()
        .filter(|l| l.starts_with("Alarm!"))
        .collect();
    assert_eq!(alarms.len(), 1);
    assert!(alarms[0].starts_with("Alarm! node 3 not forward more than 20% packets"));
    let metrics = read(&dir.join("metrics.csv"));
    assert!(metrics.starts_with("scheme,n,l,seed,sent,delivered,pdr,listen_events,detection_time\n"));
    assert!(!read(&dir.join("trace.txt")).is_empty());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_ideal_baseline_config_delivers_everything() {
    let dir = temp_dir("ideal");
    let mut spec = manetsim::scenario::preset("paper-baseline").unwrap();
    spec.medium.baseline_loss = 0.0;
    let config = dir.join("ideal.toml");
    std::fs::write(&config, spec.to_toml().unwrap()).unwrap();
    let out = manetsim(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("pdr: 100.00"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_noids_preset_shows_devastation() {
    let dir = temp_dir("noids");
    let out = manetsim(&[
        "run",
        "--preset",
        "paper-blackhole-noids",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = read(&dir.join("metrics.csv"));
    let row = metrics.lines().nth(1).unwrap();
    let pdr: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
    assert!(pdr <= 1.0, "pdr {pdr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_invocations_reproduce_identical_files() {
    let dir_a = temp_dir("repro-a");
    let dir_b = temp_dir("repro-b");
    for dir in [&dir_a, &dir_b] {
        let out = manetsim(&[
            "run",
            "--preset",
            "paper-blackhole-watchdog",
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for file in ["trace.txt", "metrics.csv", "summary.txt"] {
        assert_eq!(
            std::fs::read(dir_a.join(file)).unwrap(),
            std::fs::read(dir_b.join(file)).unwrap(),
            "{file}"
        );
    }
    std::fs::remove_dir_all(&dir_a).ok();
    std::fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn validate_accepts_presets_and_names_violations() {
    let out = manetsim(&["validate", "--preset", "paper-baseline"]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());

    let dir = temp_dir("validate");
    let mut spec = manetsim::scenario::preset("paper-blackhole-noids").unwrap();
    spec.adversary.nodes = vec![spec.traffic.source];
    spec.ids.cluster_size = 2;
    let config = dir.join("bad.toml");
    std::fs::write(&config, spec.to_toml().unwrap()).unwrap();
    let out = manetsim(&["validate", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let text = stdout(&out);
    assert!(text.contains("adversary.nodes"), "{text}");
    assert!(text.contains("trusted"), "{text}");
    assert!(text.contains("ids.cluster_size"), "{text}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_keys_fail_with_a_named_diagnostic() {
    let dir = temp_dir("unknown-key");
    let mut text = manetsim::scenario::preset("paper-baseline")
        .unwrap()
        .to_toml()
        .unwrap();
    text.push_str("\ntypo_knob = 1\n");
    let config = dir.join("typo.toml");
    std::fs::write(&config, text).unwrap();
    let out = manetsim(&["run", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("typo_knob"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn analytic_prints_tables_and_flags_mismatches() {
    let out = manetsim(&["analytic"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("12  3   8"));
    assert!(text.contains("MISMATCH"));
    assert!(!text.contains("expands to"), "derivation only with --explain");

    let out = manetsim(&["analytic", "--explain"]);
    assert!(stdout(&out).contains("n - 4"));
}

#[test]
fn single_cell_sweep_writes_csv() {
    let dir = temp_dir("sweep");
    let csv_path = dir.join("sweep.csv");
    let out = manetsim(&[
        "sweep",
        "--n",
        "12",
        "--l",
        "3",
        "--seeds",
        "1",
        "--schemes",
        "watchdog,selective",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = read(&csv_path);
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(lines[0], "scheme,n,l,seed,sent,delivered,pdr,listen_events,detection_time");
    // Two runs plus two mean rows.
    assert_eq!(lines.len(), 5);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_analytic_mode_prints_the_closed_forms() {
    let out = manetsim(&["sweep", "--analytic"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("promiscuous listening cost model"));
}
