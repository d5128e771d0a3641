use dsgd_harness::config::{apply_override, from_value, Format, ValidationError};
use dsgd_harness::experiment::run_experiment;
use dsgd_harness::report::{read_csv, read_json, REPORT_SCHEMA};
use serde_json::{json, Value};

fn run_section() -> Value {
    json!({
        "loss": { "family": "logistic" },
        "m": 4, "n": 8, "dim": 3,
        "feature_bound": 1.0, "domain_radius": 10.0,
        "topology": { "kind": "ring" },
        "schedule": { "kind": "constant", "eta": 0.1 },
        "iterations": 50,
        "seed": 3
    })
}

fn corollary_bounds() -> Value {
    json!({
        "kind": "bound-eval",
        "bounds": {
            "theorems": ["convex", "average-weight", "strongly-convex", "nonconvex", "optimization", "generalization"],
            "rms": 0.01,
            "params": {
                "lipschitz": 1.0, "smoothness": 1.0, "mu": 0.1, "gamma": 0.05, "loss_bound": 1.0, "sigma": 0.5,
                "m": 4, "n": 25, "iterations": 100, "lambda": 0.3333333333333333,
                "schedule": { "kind": "constant", "eta": 0.1 }
            }
        }
    })
}

fn schema() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn bound_eval_reports_corollary_value() {
    let cfg = from_value(corollary_bounds()).unwrap();
    let out = run_experiment(&cfg, 1).unwrap();
    assert_eq!(out.reports.len(), 1);
    let table = &out.reports[0].table;
    let closed = table.rows.iter().find(|r| r[0] == "convex").unwrap()[2].parse::<f64>().unwrap();
    assert!((closed - 6.2).abs() <= 1e-12);
    assert_eq!(table.rows.len(), 6);
}

#[test]
fn reports_validate_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let validator = schema();
    let configs = [
        corollary_bounds(),
        json!({ "kind": "single-run", "run": run_section() }),
        json!({ "kind": "twin", "twin": "full-sweep", "run": run_section() }),
        json!({ "kind": "twin", "twin": { "position": { "r": 1, "k": 2 } }, "run": run_section() }),
        json!({ "kind": "sweep", "seeds": 2, "run": run_section(), "sweep": { "m": [2, 4], "eta": [0.1, 0.2] } }),
        json!({ "kind": "verify-suite", "criteria": [1, 3] }),
    ];
    for raw in configs {
        let cfg = from_value(raw).unwrap();
        let out = run_experiment(&cfg, 2).unwrap();
        for report in &out.reports {
            let paths = report.write(dir.path(), &[Format::Json, Format::Csv]).unwrap();
            let doc: Value = serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
            let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
            assert!(errors.is_empty(), "{}: {errors:?}", report.kind);
            assert_eq!(&read_json(&paths[0]).unwrap(), report);
            let (kind, table) = read_csv(&paths[1]).unwrap();
            assert_eq!(kind, report.kind);
            assert_eq!(table, report.table);
        }
    }
}

#[test]
fn sweep_yields_one_report_per_cell() {
    let cfg = from_value(json!({
        "kind": "sweep", "seeds": [5, 6, 7], "run": run_section(),
        "sweep": { "m": [2, 4], "topology": [{ "kind": "ring" }, { "kind": "complete" }, { "kind": "path" }] }
    }))
    .unwrap();
    let out = run_experiment(&cfg, 4).unwrap();
    assert_eq!(out.reports.len(), 6);
    assert!(out.reports.iter().all(|r| r.table.rows.len() == 3));
    let labels: std::collections::BTreeSet<_> = out.reports.iter().map(|r| r.label.clone()).collect();
    assert_eq!(labels.len(), 6);
}

#[test]
fn twin_sweep_aggregates() {
    let cfg = from_value(json!({ "kind": "twin", "twin": "full-sweep", "run": run_section() })).unwrap();
    let report = &run_experiment(&cfg, 2).unwrap().reports[0];
    assert_eq!(report.table.rows.len(), 32);
    let rec = &report.records[0];
    assert!(rec["rms"].as_f64().unwrap() >= rec["delta_mean"].as_f64().unwrap());
    assert!(rec["eps_uniform"].as_f64().unwrap() >= rec["rms"].as_f64().unwrap());
    let ratios = report.table.column_f64("max_divergence_over_envelope").unwrap();
    assert!(ratios.iter().all(|r| *r <= 1.0 + 1e-9));
    assert_eq!(report.preconditions["coupling_verified"], json!(true));
}

#[test]
fn metric_payload_is_reproducible_across_thread_counts() {
    let raw = json!({ "kind": "sweep", "seeds": 3, "run": run_section(), "sweep": { "n": [4, 8] } });
    let a = run_experiment(&from_value(raw.clone()).unwrap(), 1).unwrap();
    let b = run_experiment(&from_value(raw).unwrap(), 8).unwrap();
    let pa: Vec<String> = a.reports.iter().map(|r| r.metric_payload()).collect();
    let pb: Vec<String> = b.reports.iter().map(|r| r.metric_payload()).collect();
    assert_eq!(pa, pb);
}

#[test]
fn overrides_change_the_hash() {
    let mut raw = json!({ "kind": "single-run", "run": run_section() });
    let a = from_value(raw.clone()).unwrap();
    apply_override(&mut raw, "run.m", "2").unwrap();
    let b = from_value(raw).unwrap();
    assert_ne!(a.hash(), b.hash());
    assert_eq!(b.config.run.unwrap().m, 2);
}

fn rejected(raw: Value) -> ValidationError {
    from_value(raw).expect_err("config should be rejected")
}

#[test]
fn invalid_configs_are_rejected() {
    let mut strongly = run_section();
    strongly["loss"] = json!({ "family": "ridge-logistic", "mu": 0.1 });
    strongly["cap"] = json!("strongly-convex");
    let e = rejected(json!({ "kind": "single-run", "profile": "acceptance", "run": strongly.clone() }));
    assert!(e.0.contains("projected"), "{e}");
    strongly["projected"] = json!(true);
    assert!(from_value(json!({ "kind": "single-run", "profile": "acceptance", "run": strongly.clone() })).is_ok());
    assert!(from_value(json!({ "kind": "single-run", "run": { "projected": false } })).is_err());

    let mut nonconvex = run_section();
    nonconvex["loss"] = json!({ "family": "saturating-nonconvex" });
    nonconvex["cap"] = json!("convex");
    assert!(rejected(json!({ "kind": "single-run", "profile": "acceptance", "run": nonconvex })).0.contains("not convex"));

    let mut big_step = run_section();
    big_step["schedule"] = json!({ "kind": "constant", "eta": 100.0 });
    big_step["cap"] = json!("convex");
    assert!(rejected(json!({ "kind": "single-run", "profile": "acceptance", "run": big_step.clone() })).0.contains("cap"));
    assert!(from_value(json!({ "kind": "single-run", "run": big_step })).is_ok());

    rejected(json!({ "kind": "twin", "run": run_section() }));
    rejected(json!({ "kind": "twin", "twin": { "position": { "r": 9, "k": 0 } }, "run": run_section() }));
    rejected(json!({ "kind": "bound-eval" }));
    rejected(json!({ "kind": "verify-suite", "criteria": [16] }));
    rejected(json!({ "kind": "sweep", "run": run_section() }));
    rejected(json!({ "kind": "single-run", "run": run_section(), "typo": 1 }));
}
