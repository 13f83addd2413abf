//! Every published JSON document and every JSON the tools emit validates
//! against the schemas under `docs/schemas`.

use std::path::PathBuf;

use serde_json::Value;

use freqsec::dispatch::solve_dispatch;
use freqsec::io::SystemFile;
use freqsec::simulate::tune_droop;
use freqsec::{dynamics, reference, security};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn validator(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(root().join("docs/schemas").join(name)).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(schema: &str, doc: &Value) {
    let v = validator(schema);
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}");
}

fn file(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(root().join("data").join(name)).unwrap()).unwrap()
}

#[test]
fn data_files_validate() {
    assert_valid("system.schema.json", &file("validation.json"));
    assert_valid("case.schema.json", &file("gb_case.json"));
}

#[test]
fn system_round_trip_validates() {
    let input = SystemFile::load(root().join("data/validation.json")).unwrap().into_input().unwrap();
    let doc: Value = serde_json::from_str(&SystemFile::from_input(&input).to_json()).unwrap();
    assert_valid("system.schema.json", &doc);
}

#[test]
fn schema_rejects_unknown_and_missing_fields() {
    let mut doc = file("validation.json");
    doc["snapshot"]["inertia"] = Value::from(1.0);
    assert!(!validator("system.schema.json").is_valid(&doc));
    let mut doc = file("gb_case.json");
    doc.as_object_mut().unwrap().remove("periods");
    assert!(!validator("case.schema.json").is_valid(&doc));
}

#[test]
fn report_and_nadir_outputs_validate() {
    let s = reference::validation_snapshot();
    let spec = reference::validation_spec();
    let report = security::assess(&s, &spec, None).unwrap();
    assert_valid("report.schema.json", &serde_json::to_value(&report).unwrap());

    // an insecure report carries nulls for the nadir fields
    let short = freqsec::SystemSnapshot::new(
        s.h_gen,
        0.0,
        1790.0,
        s.portfolio.with_allocations(vec![100.0; 4]).unwrap(),
    )
    .unwrap();
    let insecure = security::assess(&short, &spec, None).unwrap();
    assert!(insecure.nadir_depth.is_none());
    assert_valid("report.schema.json", &serde_json::to_value(&insecure).unwrap());

    let n = dynamics::nadir(&s, &spec).unwrap();
    let doc = serde_json::json!({"t_nadir": n.time, "depth": n.depth, "interval": n.interval});
    assert_valid("nadir.schema.json", &doc);
}

#[test]
fn schedule_output_validates() {
    let case = reference::gb_dispatch_case(25_000.0, 6_000.0);
    let schedule = solve_dispatch(&case, 0.005).unwrap();
    let doc: Value = serde_json::from_str(&schedule.to_json()).unwrap();
    assert_valid("schedule.schema.json", &doc);
}

#[test]
fn providers_validate() {
    let s = reference::validation_snapshot();
    let mut providers = tune_droop(&s, &reference::validation_spec()).unwrap();
    providers.extend(freqsec::simulate::ramp_providers(&s));
    assert_valid("providers.schema.json", &serde_json::to_value(&providers).unwrap());
}
