use std::path::PathBuf;
use std::process::{Command, Output};

use freqsec::dispatch::Schedule;
use freqsec::io::SystemFile;
use freqsec::SecurityReport;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqsec"))
        .args(args)
        .env("FREQSEC_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_system(dir: &tempfile::TempDir, edit: impl FnOnce(&mut SystemFile)) -> PathBuf {
    let mut file = SystemFile::load(data("validation.json")).unwrap();
    edit(&mut file);
    let p = dir.path().join("system.json");
    std::fs::write(&p, file.to_json()).unwrap();
    p
}

#[test]
fn check_validation_system_is_secure() {
    let o = run(&["check", path(&data("validation.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: SecurityReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report.is_secure());
    let ratio = report.soc_slack_ratio.unwrap();
    assert!((ratio - 0.0018).abs() < 0.0002, "{ratio}");
    assert!(stderr(&o).contains("0.18%"), "{}", stderr(&o));
}

#[test]
fn check_short_response_names_steady_state() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_system(&dir, |f| f.snapshot.p_loss = 1800.0 + 600.0);
    let o = run(&["check", path(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("steady-state"), "{}", stderr(&o));
    let report: SecurityReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(!report.steady_state_ok);
}

#[test]
fn check_missing_field_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    let text = std::fs::read_to_string(data("validation.json")).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["snapshot"].as_object_mut().unwrap().remove("h_gen");
    std::fs::write(&p, value.to_string()).unwrap();
    assert_eq!(run(&["check", path(&p)]).status.code(), Some(2));
    assert_eq!(run(&["check", "/nonexistent/system.json"]).status.code(), Some(2));
}

#[test]
fn nadir_reports_instant_and_interval() {
    let o = run(&["nadir", path(&data("validation.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // the response covering the loss completes between 5.5 and 9 s
    let t = v["t_nadir"].as_f64().unwrap();
    assert!(t > 5.5 && t < 9.0, "{t}");
    assert!((v["depth"].as_f64().unwrap() - 0.8).abs() < 0.002);
    assert!(v["interval"].as_u64().is_some());
}

fn footer_value(csv: &str, key: &str) -> f64 {
    csv.lines()
        .filter(|l| l.starts_with('#'))
        .flat_map(|l| l.split_whitespace())
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

#[test]
fn simulate_droop_reproduces_validation_nadir() {
    let o = run(&["simulate", path(&data("validation.json")), "droop", "--damping", "150"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("t,delta_f,fr_total,fr_"));
    let depth = footer_value(&csv, "nadir_depth");
    assert!((depth - 0.72).abs() <= 0.02, "{depth}");
    let margin = footer_value(&csv, "margin");
    assert!((margin - 0.08).abs() <= 0.02, "{margin}");
}

#[test]
fn simulate_ramps_match_closed_form() {
    let o = run(&["simulate", path(&data("validation.json")), "ramp", "--t-end", "15"]);
    assert_eq!(o.status.code(), Some(0));
    let margin = footer_value(&stdout(&o), "margin");
    assert!(margin.abs() < 1e-6, "{margin}");
}

#[test]
fn simulate_provider_file_and_coarse_step() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("providers.json");
    std::fs::write(
        &p,
        r#"[{"kind": "droop_lag", "id": "gov", "gain": 3000, "tau": 0.5,
             "saturation": 2500, "deadband": 0}]"#,
    )
    .unwrap();
    let sys = data("validation.json");
    let ok = run(&["simulate", path(&sys), path(&p), "--t-end", "10"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).lines().next().unwrap().ends_with("fr_gov"));
    let coarse = run(&["simulate", path(&sys), path(&p), "--dt", "0.1"]);
    assert_eq!(coarse.status.code(), Some(2));
    assert!(stderr(&coarse).contains("time step"));
}

#[test]
fn optimize_writes_secure_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("schedule.json");
    let o = run(&["optimize", path(&data("gb_case.json")), "-o", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let schedule = Schedule::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(schedule.is_secure());
    assert!(schedule.total_cost >= schedule.bound - 1e-6 * schedule.total_cost);
}

#[test]
fn optimize_methods_agree_within_gap() {
    let cost = |method: &str| {
        let o = run(&["optimize", path(&data("gb_case.json")), "--method", method]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        Schedule::from_json(&stdout(&o)).unwrap().total_cost
    };
    let (mi, en) = (cost("mi"), cost("enum"));
    assert!((mi - en).abs() <= 0.005 * mi.max(en), "{mi} vs {en}");
}

#[test]
fn optimize_rejects_bad_options_and_reports_infeasible() {
    let case = data("gb_case.json");
    assert_eq!(run(&["optimize", path(&case), "--gap", "0"]).status.code(), Some(2));
    assert_eq!(run(&["optimize", path(&case), "--gap", "0.6"]).status.code(), Some(2));
    assert_eq!(run(&["optimize", path(&case), "--method", "x"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&case).unwrap()).unwrap();
    value["demand"] = serde_json::json!([500000.0]);
    let p = dir.path().join("case.json");
    std::fs::write(&p, value.to_string()).unwrap();
    let o = run(&["optimize", path(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("power balance"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let o = run(&["sweep", path(&data("gb_case.json")), "--axis", "delay:EFR", "--values", "0,0.1,0.2,0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("value,status,cost,bound"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            vec![f[0].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap()]
        })
        .collect();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        // a later cost may not undercut an earlier proven bound
        assert!(w[1][1] >= w[0][2] - 1e-6 * w[0][2]);
    }
    assert_eq!(
        run(&["sweep", path(&data("gb_case.json")), "--axis", "bogus", "--values", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn verify_passes_and_is_deterministic() {
    let a = run(&["verify", "--seed", "7", "--cases", "20"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = run(&["verify", "--seed", "7", "--cases", "20"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    for args in [
        vec!["optimize", "GB"],
        vec!["simulate", "VAL", "droop"],
        vec!["export-program", "GB"],
        vec!["sweep", "GB", "--axis", "wind_scale", "--values", "0.5,1"],
    ] {
        let args: Vec<String> = args
            .iter()
            .map(|a| match *a {
                "GB" => path(&data("gb_case.json")).to_string(),
                "VAL" => path(&data("validation.json")).to_string(),
                other => other.to_string(),
            })
            .collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let (a, b) = (run(&refs), run(&refs));
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", stderr(&a));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn export_program_accepts_both_inputs() {
    let o = run(&["export-program", path(&data("gb_case.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    freqsec::conic::import_program(&text).unwrap();
    assert!(text.contains("t0_balance"));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("problem.json");
    std::fs::write(
        &p,
        r#"{"services": [{"id": "a", "capacity_max": 2000, "ramp_duration": 2,
                          "activation_delay": 0.5, "headroom_cost": 3}],
            "spec": {"f0": 50, "delta_f_max": 0.8, "rocof_max": 0.5, "p_loss_max": 1800},
            "inertia": [150000, 150000], "p_loss": [1200, 1200]}"#,
    )
    .unwrap();
    let o = run(&["export-program", path(&p)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    freqsec::conic::import_program(&stdout(&o)).unwrap();
}
