use std::path::Path;
use std::process::{Command, Output};

use mci_core::engine::{events_from_ndjson, events_to_ndjson};
use mci_core::metrics::OutcomeReport;
use mci_core::policy::{read_policy, write_policy};
use mci_core::validate::validate_scenario;
use mci_core::Scenario;
use serde_json::Value;

fn mci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mci")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mci(args);
    assert!(out.status.success(), "mci {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn gen_scenario_sixty_patients_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("complex.json");
    ok(&["gen-scenario", "--patients", "60", "--seed", "7", "--out", p(&out)]);
    let scenario = Scenario::from_json(&read(&out)).unwrap();
    assert_eq!(scenario.patients.len(), 60);
    assert_eq!(scenario.seed, 7);
    assert!(validate_scenario(&scenario).is_empty());

    let manifest: Value = serde_json::from_str(&read(&dir.path().join("complex.json.manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "gen-scenario");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["patients"], 60);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));

    // Same seed, same bytes.
    let again = dir.path().join("again.json");
    ok(&["gen-scenario", "--patients", "60", "--seed", "7", "--out", p(&again)]);
    assert_eq!(read(&out), read(&again));
}

#[test]
fn replay_of_a_run_log_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    let log = dir.path().join("run.ndjson");
    let report = dir.path().join("report.json");
    let replayed = dir.path().join("replayed.json");
    ok(&["gen-scenario", "--preset", "standard", "--seed", "3", "--out", p(&scenario)]);
    for policy in ["random", "greedy"] {
        ok(&["run", "--scenario", p(&scenario), "--policy", policy, "--act", "sample", "--rng-seed", "5", "--out", p(&log), "--report", p(&report)]);
        ok(&["replay", "--scenario", p(&scenario), "--log", p(&log), "--out", p(&replayed)]);
        assert_eq!(read(&report), read(&replayed), "{policy}");
    }
    assert!(dir.path().join("run.ndjson.manifest.json").exists());
    assert!(dir.path().join("report.json.manifest.json").exists());

    let csv = ok(&["replay", "--scenario", p(&scenario), "--log", p(&log), "--format", "csv"]);
    assert!(csv.starts_with("completion_time,completion_basis,mortality_rate"));
}

#[test]
fn eval_greedy_mortality_is_not_worse_than_random() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval.json");
    let table = ok(&["eval", "--policies", "random,greedy", "--seeds", "100", "--act", "sample", "--out", p(&out)]);
    assert!(table.lines().next().unwrap().contains("mortality %"));
    assert_eq!(table.lines().count(), 3);
    let rows: Value = serde_json::from_str(&read(&out)).unwrap();
    let mortality = |i: usize| rows[i]["mortality_pct"].as_f64().unwrap();
    assert_eq!(rows[0]["policy"], "random");
    assert_eq!(rows[1]["policy"], "greedy");
    assert_eq!(rows[1]["episodes"], 100);
    assert!(mortality(1) <= mortality(0), "greedy {} vs random {}", mortality(1), mortality(0));
}

#[test]
fn artifacts_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    let log = dir.path().join("run.ndjson");
    let report = dir.path().join("report.json");
    let policy = dir.path().join("policy.bin");
    ok(&["gen-scenario", "--preset", "desk", "--seed", "11", "--out", p(&scenario)]);
    ok(&["train", "--steps", "1024", "--width", "8", "--seed", "2", "--out", p(&policy)]);
    ok(&["run", "--scenario", p(&scenario), "--policy", "learned", "--policy-file", p(&policy), "--out", p(&log), "--report", p(&report)]);

    let text = read(&scenario);
    assert_eq!(Scenario::from_json(&text).unwrap().to_json(), text);

    let text = read(&log);
    assert_eq!(events_to_ndjson(&events_from_ndjson(&text).unwrap()), text);

    let text = read(&report);
    let parsed: OutcomeReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", text);

    let bytes = std::fs::read(&policy).unwrap();
    assert_eq!(write_policy(&read_policy(&bytes).unwrap()).unwrap(), bytes);

    let manifest: Value = serde_json::from_str(&read(&dir.path().join("policy.bin.manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["ppo"]["total_steps"], 1024);
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gen.toml");
    let out = dir.path().join("s.json");
    std::fs::write(&config, format!("patients = 30\nhospitals = 5\nseed = 9\nout = \"{}\"\n", p(&out))).unwrap();
    ok(&["gen-scenario", "--config", p(&config), "--patients", "12"]);
    let scenario = Scenario::from_json(&read(&out)).unwrap();
    assert_eq!((scenario.patients.len(), scenario.hospitals.len(), scenario.seed), (12, 5, 9));
}

#[test]
fn exit_codes_separate_validation_from_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| mci(args).status.code().unwrap();

    assert_eq!(code(&["gen-scenario", "--patients", "60", "--seed", "7", "--out", p(&dir.path().join("ok.json"))]), 0);
    assert_eq!(code(&["gen-scenario", "--patients", "0", "--out", p(&dir.path().join("x.json"))]), 1);
    assert_eq!(code(&["run", "--scenario", p(&dir.path().join("missing.json")), "--out", "x"]), 1);
    assert_eq!(code(&["eval", "--policies", "oracle"]), 1);
    assert_eq!(code(&["run", "--preset", "desk", "--policy", "learned", "--out", "x"]), 1);
    assert_eq!(code(&["serve", "--addr", "not-an-address"]), 1);
    assert_eq!(code(&["gen-scenario", "--unknown-flag"]), 1);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = mci(&["gen-scenario", "--seed", "1", "--out", p(&blocker.join("s.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}
