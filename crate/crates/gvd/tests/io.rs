use gvd::io::{parse_instance, parse_result, to_csv, to_geojson, to_json, FormatError, Membership, UnitId};
use gvd::run::{self, RunOptions};
use gvd_core::diagram::verify;
use gvd_core::model::{check_balance, Tolerances};
use gvd_core::pipeline::Approach;

const GOLDEN: &str = include_str!("fixtures/golden.json");
const TWO_LOBE: &str = include_str!("fixtures/two_lobe.json");

fn problems(e: FormatError) -> Vec<String> {
    match e {
        FormatError::Invalid { problems, .. } => problems,
        other => panic!("expected validation problems, got {other}"),
    }
}

#[test]
fn golden_file_loads() {
    let loaded = parse_instance(GOLDEN, "golden").unwrap();
    assert_eq!(loaded.instance.m(), 4);
    assert_eq!(loaded.instance.k(), 2);
    assert_eq!(loaded.instance.capacities(), &[2.0, 2.0]);
    assert_eq!(loaded.instance.graph().unwrap().edges().len(), 3);
    assert_eq!(loaded.unit_index(&UnitId::from("x4")), Some(3));
    assert!(loaded.reference.is_none());
}

#[test]
fn epsilon_target_means_uniform_capacities() {
    let text = r#"{"units": [
        {"id": 1, "x": 0, "y": 0, "weight": 1},
        {"id": 2, "x": 1, "y": 0, "weight": 2},
        {"id": 3, "x": 2, "y": 0, "weight": 3}
    ], "k": 2, "epsilon-target": 0.25}"#;
    let loaded = parse_instance(text, "t").unwrap();
    assert_eq!(loaded.instance.capacities(), &[3.0, 3.0]);
    assert_eq!(loaded.epsilon_target, Some(0.25));
    assert_eq!(loaded.resolve_unit("2"), Some(1));
}

#[test]
fn negative_weight_is_rejected_with_the_unit_id() {
    let text = GOLDEN.replacen("\"weight\": 1.0", "\"weight\": -1", 1);
    let p = problems(parse_instance(&text, "t").unwrap_err());
    assert_eq!(p.len(), 1);
    assert!(p[0].contains("x1") && p[0].contains("-1"), "{p:?}");
}

#[test]
fn type_errors_name_the_field() {
    let text = GOLDEN.replacen("\"weight\": 1.0", "\"weight\": \"-1\"", 1);
    match parse_instance(&text, "t").unwrap_err() {
        FormatError::Parse { field, line, .. } => {
            assert_eq!(field, "units[0].weight");
            assert!(line > 1);
        }
        other => panic!("{other}"),
    }
    match parse_instance(r#"{"units": [], "k": 1, "colour": 3}"#, "t").unwrap_err() {
        FormatError::Parse { message, .. } => assert!(message.contains("colour")),
        other => panic!("{other}"),
    }
}

#[test]
fn all_problems_are_reported_together() {
    let text = r#"{"units": [
        {"id": "a", "x": 0, "y": 0, "weight": 1},
        {"id": "a", "x": 1, "y": 0, "weight": 0}
    ], "edges": [{"a": "a", "b": "zz", "length": 1}],
    "k": 2, "capacities": [1, 1], "epsilon-target": 0.1}"#;
    let p = problems(parse_instance(text, "t").unwrap_err());
    assert!(p.iter().any(|s| s.contains("not both")), "{p:?}");
    assert!(p.iter().any(|s| s.contains("zz")), "{p:?}");
    assert!(p.iter().any(|s| s.contains("duplicate")), "{p:?}");
    assert!(p.iter().any(|s| s.contains("weight must be positive")), "{p:?}");
}

#[test]
fn reference_must_cover_every_unit_once() {
    let mut file: serde_json::Value = serde_json::from_str(GOLDEN).unwrap();
    file["reference"] = serde_json::json!([
        {"unit": "x1", "cluster": 0}, {"unit": "x2", "cluster": 0}, {"unit": "x3", "cluster": 1}
    ]);
    let p = problems(parse_instance(&file.to_string(), "t").unwrap_err());
    assert!(p.iter().any(|s| s.contains("x4")), "{p:?}");
    file["reference"][2]["cluster"] = serde_json::json!(5);
    let p = problems(parse_instance(&file.to_string(), "t").unwrap_err());
    assert!(p.iter().any(|s| s.contains("out of range")), "{p:?}");
    file["reference"] = serde_json::json!([
        {"unit": "x1", "cluster": 0}, {"unit": "x2", "cluster": 0},
        {"unit": "x3", "cluster": 1}, {"unit": "x4", "cluster": 1}
    ]);
    let loaded = parse_instance(&file.to_string(), "t").unwrap();
    assert_eq!(loaded.reference.unwrap().assignment(), Some(vec![0, 0, 1, 1]));
}

#[test]
fn result_json_round_trips_exactly() {
    let loaded = parse_instance(TWO_LOBE, "two-lobe").unwrap();
    for approach in [Approach::Power, Approach::ShortestPath, Approach::AdditivelyWeighted] {
        let result = run::run_pipeline(&loaded, approach, &RunOptions::default()).unwrap();
        let text = to_json(&result);
        let back = parse_result(&text, "r").unwrap();
        assert_eq!(back, result);
        assert_eq!(to_json(&back), text);
        assert_eq!(back.clustering(&loaded).unwrap().assignment().unwrap().len(), 30);
    }
}

#[test]
fn reconstructed_model_supports_the_fractional_solution() {
    let loaded = parse_instance(TWO_LOBE, "two-lobe").unwrap();
    for approach in [Approach::Power, Approach::ShortestPath, Approach::AdditivelyWeighted] {
        let result = run::run_solve(&loaded, approach, &RunOptions::default()).unwrap();
        let back = parse_result(&to_json(&result), "r").unwrap();
        let model = back.model(&loaded).unwrap();
        let clustering = back.clustering(&loaded).unwrap();
        let report = verify(&loaded.instance, &model, &clustering).unwrap();
        assert!(report.feasible, "{approach}");
        assert!(back.summary.strongly_balanced);
    }
}

#[test]
fn exported_assignments_pass_the_balance_check_at_the_reported_epsilon() {
    let tol = Tolerances::default();
    for (text, approaches) in [
        (GOLDEN, vec![Approach::ShortestPath, Approach::Power, Approach::AdditivelyWeighted]),
        (TWO_LOBE, Approach::ALL.iter().copied().filter(|&a| a != Approach::Anisotropic).collect()),
    ] {
        let loaded = parse_instance(text, "t").unwrap();
        for approach in approaches {
            let result = run::run_pipeline(&loaded, approach, &RunOptions::default()).unwrap();
            let clustering = result.clustering(&loaded).unwrap();
            let check = check_balance(&clustering, &loaded.instance, result.summary.epsilon, &tol).unwrap();
            assert!(check.epsilon_balanced && check.integer, "{approach}");
            assert!(result.summary.epsilon_balanced);
        }
    }
}

#[test]
fn anisotropic_runs_with_a_reference() {
    let mut file: serde_json::Value = serde_json::from_str(TWO_LOBE).unwrap();
    let units = file["units"].as_array().unwrap().clone();
    file["reference"] = units
        .iter()
        .map(|u| serde_json::json!({"unit": u["id"], "cluster": usize::from(u["x"].as_f64().unwrap() > 2.5)}))
        .collect();
    let loaded = parse_instance(&file.to_string(), "t").unwrap();
    let result = run::run_pipeline(&loaded, Approach::Anisotropic, &RunOptions::default()).unwrap();
    assert_eq!(result.parameters.norms.as_ref().map(Vec::len), Some(2));
    assert!(result.summary.strongly_balanced);
    assert!(result.summary.changed_pairs_ratio.is_some());
    let back = parse_result(&to_json(&result), "r").unwrap();
    assert_eq!(back.model(&loaded).unwrap().metrics.len(), 2);
}

#[test]
fn csv_has_one_row_per_assignment() {
    let loaded = parse_instance(TWO_LOBE, "t").unwrap();
    let result = run::run_solve(&loaded, Approach::AdditivelyWeighted, &RunOptions::default()).unwrap();
    let csv = to_csv(&result).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("unit,cluster,fraction"));
    assert_eq!(lines.count(), result.assignments.len());
}

#[test]
fn geojson_has_k_polygons_for_power_and_refuses_graphs() {
    let loaded = parse_instance(TWO_LOBE, "t").unwrap();
    let result = run::run_pipeline(&loaded, Approach::Power, &RunOptions::default()).unwrap();
    let g = to_geojson(&loaded, &result).unwrap();
    let features = g["features"].as_array().unwrap();
    let kind = |t: &str| features.iter().filter(|f| f["geometry"]["type"] == t).count();
    assert_eq!(kind("Polygon"), 2);
    assert_eq!(kind("Point"), 30);
    let awvd = run::run_pipeline(&loaded, Approach::AdditivelyWeighted, &RunOptions::default()).unwrap();
    assert_eq!(to_geojson(&loaded, &awvd).unwrap()["features"].as_array().unwrap().len(), 30);
    let sp = run::run_pipeline(&loaded, Approach::ShortestPath, &RunOptions::default()).unwrap();
    assert!(matches!(to_geojson(&loaded, &sp), Err(FormatError::Export(_))));
}

#[test]
fn constraints_are_resolved_by_id_and_checked() {
    let loaded = parse_instance(TWO_LOBE, "t").unwrap();
    let m = |unit: i64, cluster| Membership {
        unit: UnitId::Number(unit),
        cluster,
    };
    let options = RunOptions {
        pins: vec![m(42, 0), m(42, 0)],
        exclusions: vec![m(0, 0)],
        ..RunOptions::default()
    };
    let (pins, excl) = run::resolve_constraints(&loaded, &options).unwrap();
    assert_eq!(pins, vec![(0, 26)]);
    assert_eq!(excl, vec![(0, 0)]);
    let twice = RunOptions {
        pins: vec![m(42, 0), m(42, 1)],
        ..RunOptions::default()
    };
    assert!(matches!(run::resolve_constraints(&loaded, &twice), Err(run::RunError::Conflict(_))));
    let unknown = RunOptions {
        exclusions: vec![m(99, 0)],
        ..RunOptions::default()
    };
    assert_eq!(run::resolve_constraints(&loaded, &unknown).unwrap_err().exit_code(), 1);
}

#[test]
fn power_splits_the_two_lobe_fixture_until_the_bridge_unit_is_excluded() {
    let loaded = parse_instance(TWO_LOBE, "t").unwrap();
    let before = run::run_pipeline(&loaded, Approach::Power, &RunOptions::default()).unwrap();
    assert_eq!(before.summary.connectivity, Some(vec![true, false]));
    let diag = run::diagnostics(&loaded, &before).unwrap();
    assert_eq!(diag.detached.len(), 1);
    assert_eq!(diag.detached[0].units, vec![UnitId::Number(42)]);
    let options = RunOptions {
        exclusions: vec![Membership {
            unit: UnitId::Number(42),
            cluster: 1,
        }],
        ..RunOptions::default()
    };
    let after = run::run_pipeline(&loaded, Approach::Power, &options).unwrap();
    assert_eq!(after.summary.connectivity, Some(vec![true, true]));
    assert!(after.summary.epsilon_achieved <= after.summary.epsilon_bound);
}
