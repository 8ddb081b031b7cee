//! Validates a freshly generated estimate report against the published
//! schema file, using a small structural checker covering the keywords the
//! schema uses: `type`, `required`, `properties`, `additionalProperties`,
//! `items`, `enum`, and `minimum`.

use std::collections::HashMap;
use std::path::Path;

use serde_json::Value;
use tim_cli::config::RunConfig;
use tim_cli::csvout::write_dataset_csv;
use tim_core::dataset::ColumnRole;
use tim_core::simulate::{generate, ScenarioSpec};
use tim_core::CovariateKind;

fn type_matches(expected: &str, value: &Value) -> bool {
    match expected {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "number" => value.is_number(),
        "integer" => {
            value.is_i64()
                || value.is_u64()
                || value.as_f64().is_some_and(|v| v.fract() == 0.0 && v.is_finite())
        }
        "null" => value.is_null(),
        other => panic!("schema uses unsupported type '{other}'"),
    }
}

fn validate(schema: &Value, value: &Value, path: &str, errors: &mut Vec<String>) {
    if let Some(expected) = schema.get("type").and_then(Value::as_str) {
        if !type_matches(expected, value) {
            errors.push(format!("{path}: expected {expected}, got {value}"));
            return;
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: {value} not in enum {allowed:?}"));
        }
    }
    if let Some(minimum) = schema.get("minimum").and_then(Value::as_f64) {
        if let Some(v) = value.as_f64() {
            if v < minimum {
                errors.push(format!("{path}: {v} below minimum {minimum}"));
            }
        }
    }
    if let Some(object) = value.as_object() {
        let empty = serde_json::Map::new();
        let properties = schema
            .get("properties")
            .and_then(Value::as_object)
            .unwrap_or(&empty);
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !object.contains_key(key) {
                    errors.push(format!("{path}: missing required key '{key}'"));
                }
            }
        }
        if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
            for key in object.keys() {
                if !properties.contains_key(key) {
                    errors.push(format!("{path}: unexpected key '{key}'"));
                }
            }
        }
        for (key, subschema) in properties {
            if let Some(subvalue) = object.get(key) {
                validate(subschema, subvalue, &format!("{path}/{key}"), errors);
            }
        }
    }
    if let Some(array) = value.as_array() {
        if let Some(items) = schema.get("items") {
            for (i, item) in array.iter().enumerate() {
                validate(items, item, &format!("{path}[{i}]"), errors);
            }
        }
    }
}

fn scenario_config(dir: &Path) -> RunConfig {
    let spec = ScenarioSpec::preset("1A").unwrap();
    let (ds, _) = generate(&spec, 21, 0).unwrap();
    let input = dir.join("data.csv");
    write_dataset_csv(&ds, &input).unwrap();
    let mut schema = HashMap::new();
    for j in 0..ds.k() {
        let role = match ds.kind(j) {
            CovariateKind::Continuous => ColumnRole::CovariateContinuous,
            CovariateKind::Discrete => ColumnRole::CovariateDiscrete,
        };
        schema.insert(ds.name(j).to_string(), role);
    }
    schema.insert("treated".to_string(), ColumnRole::Treatment);
    schema.insert("outcome".to_string(), ColumnRole::Outcome);
    RunConfig { input: Some(input), schema, ..RunConfig::default() }
        .resolve(Some(21), Some(dir.join("out")))
}

#[test]
fn estimate_report_validates_against_published_schema() {
    let schema_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/estimate_report.schema.json");
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(&schema_path).unwrap()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let config = scenario_config(dir.path());
    tim_cli::commands::estimate_command(&config, Some(2)).unwrap();

    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/estimate_report.json")).unwrap(),
    )
    .unwrap();

    let mut errors = Vec::new();
    validate(&schema, &report, "#", &mut errors);
    assert!(errors.is_empty(), "schema violations:\n{}", errors.join("\n"));
}

#[test]
fn validator_rejects_a_mangled_report() {
    let schema_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/estimate_report.schema.json");
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(&schema_path).unwrap()).unwrap();

    // Missing `provenance`, wrong type for t_fraction, unknown key.
    let mangled = serde_json::json!({
        "results": {
            "config": {},
            "dataset": { "n": 1, "k": 1, "n_treated": 1, "n_control": 0, "columns": [] },
            "importance": [],
            "matching": {
                "n_strata": 0, "t_fraction": "high", "matched_treated": 0,
                "matched_controls": 0, "unmatched_treated": [], "unmatched_controls": 0
            },
            "effects": { "overall_cate": 0.0, "weighted_by_treated_count": false, "naive_dim": 0.0 },
            "imbalance": {
                "l1_pre": 1.0, "l1_post": 0.5, "post_mode": "stratum_resolution",
                "cells_occupied": 1, "binning": { "columns": [] }
            },
            "strata": [],
            "warnings": [],
            "surprise": true
        }
    });
    let mut errors = Vec::new();
    validate(&schema, &mangled, "#", &mut errors);
    assert!(errors.iter().any(|e| e.contains("missing required key 'provenance'")));
    assert!(errors.iter().any(|e| e.contains("t_fraction")));
    assert!(errors.iter().any(|e| e.contains("unexpected key 'surprise'")));
}
