use std::process::Command;

use qotlab::core::protocol::Variant;
use qotlab::core::vault::BcMode;
use qotlab::report::{sig9, CSV_HEADER};
use qotlab::runner::WORKERS_ENV;
use qotlab::{render_report, run_scenario, Format, HarnessError, Scenario, ScenarioKind};

fn small(kind: ScenarioKind, trials: u64) -> Scenario {
    Scenario::new(kind).with_trials(trials)
}

#[test]
fn scenario_names_round_trip() {
    for kind in ScenarioKind::ALL {
        assert_eq!(kind.name().parse::<ScenarioKind>().unwrap(), kind);
        assert_eq!(kind.to_string(), kind.name());
    }
    assert!(matches!("nope".parse::<ScenarioKind>(), Err(HarnessError::UnknownScenario(_))));
}

#[test]
fn invalid_scenarios_are_rejected() {
    assert!(run_scenario(&small(ScenarioKind::HonestAon, 0), 1).is_err());
    assert!(run_scenario(&small(ScenarioKind::HonestAon, 5).with_n(4), 1).is_err());
    let bad = small(ScenarioKind::Cheat12otT1, 5).with_variant(Variant::AllOrNothing);
    assert!(matches!(run_scenario(&bad, 1), Err(HarnessError::InvalidScenario(_))));
}

#[test]
fn csv_header_is_fixed() {
    let s = run_scenario(&small(ScenarioKind::HonestAon, 20), 3).unwrap();
    let text = render_report(&[s], Format::Csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.next().unwrap().split(',').count(), 7);
    assert!(lines.next().is_none());
    assert!(text.ends_with('\n'));
}

#[test]
fn reports_are_byte_identical_for_identical_input() {
    for kind in [ScenarioKind::CheatAon, ScenarioKind::LyingUnveiler, ScenarioKind::LoBcqot] {
        let a = run_scenario(&small(kind, 12), 77).unwrap();
        let b = run_scenario(&small(kind, 12), 77).unwrap();
        assert_eq!(a, b);
        for f in [Format::Json, Format::Csv] {
            assert_eq!(
                render_report(std::slice::from_ref(&a), f).unwrap(),
                render_report(std::slice::from_ref(&b), f).unwrap()
            );
        }
        let c = run_scenario(&small(kind, 12), 78).unwrap();
        assert_ne!(a.digest, c.digest);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let sc = small(ScenarioKind::Cheat12otT0, 16);
    std::env::set_var(WORKERS_ENV, "1");
    let one = run_scenario(&sc, 9).unwrap();
    std::env::set_var(WORKERS_ENV, "4");
    let four = run_scenario(&sc, 9).unwrap();
    std::env::remove_var(WORKERS_ENV);
    assert_eq!(one, four);
}

#[test]
fn json_report_shape() {
    let s = run_scenario(&small(ScenarioKind::LoIdeal, 3), 1).unwrap();
    let one = render_report(std::slice::from_ref(&s), Format::Json).unwrap();
    let v: serde_json::Value = serde_json::from_str(&one).unwrap();
    assert_eq!(v["scenario"], "lo-ideal");
    assert_eq!(v["trials"], 3);
    assert_eq!(v["match_rate"].as_f64(), Some(1.0));
    assert!(v["extras"]["switch_max_trace_distance"].as_f64().unwrap() < 1e-9);
    let many = render_report(&[s.clone(), s], Format::Json).unwrap();
    let v: serde_json::Value = serde_json::from_str(&many).unwrap();
    assert_eq!(v.as_array().map(Vec::len), Some(2));
    assert!(matches!(render_report(&[], Format::Csv), Err(HarnessError::EmptyReport)));
}

#[test]
fn analytic_references() {
    let povm = (2.0 + 3f64.sqrt()) / 4.0;
    assert_eq!(Scenario::new(ScenarioKind::HonestAon).analytic_reference(), Some(0.75));
    assert_eq!(Scenario::new(ScenarioKind::Honest12ot).analytic_reference(), Some(1.0));
    let cheat = Scenario::new(ScenarioKind::CheatAon).analytic_reference().unwrap();
    assert!((cheat - povm).abs() < 1e-12);
    let bccc = Scenario::new(ScenarioKind::CheatAon).with_bc_mode(BcMode::Bccc);
    assert_eq!(bccc.analytic_reference(), Some(0.75));
    assert_eq!(sig9(povm), "0.933012702");
}

#[test]
fn honest_twelve_ot_always_delivers_the_chosen_bit() {
    let s = run_scenario(&small(ScenarioKind::Honest12ot, 50), 5).unwrap();
    assert_eq!(s.hits, s.scored);
    assert_eq!(s.aborts, 0);
}

#[test]
fn cli_run_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_qotlab"))
            .args(["run", "--scenario", "cheat-aon", "--n", "25", "--trials", "30", "--seed", "11"])
            .args(["--bc-mode", "bccc", "--variant", "aon", "--format", "csv", "--out"])
            .arg(&out)
            .env(WORKERS_ENV, "2")
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("scenario,trials,match_rate,wilson_lo,wilson_hi,abort_rate,analytic_reference\n"));
    assert!(text.contains("cheat-aon,30,"));
}

#[test]
fn cli_rejects_bad_arguments() {
    let bin = env!("CARGO_BIN_EXE_qotlab");
    let unknown = Command::new(bin).args(["run", "--scenario", "bogus"]).output().unwrap();
    assert!(!unknown.status.success());
    let mode = Command::new(bin).args(["run", "--scenario", "honest-aon", "--bc-mode", "maybe"]).output().unwrap();
    assert!(!mode.status.success());
}

#[test]
fn cli_verify_single_criterion() {
    let out = Command::new(env!("CARGO_BIN_EXE_qotlab")).args(["verify", "--only", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("[PASS] criterion  3"));
}
