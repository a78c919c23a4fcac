use std::fs;
use std::path::Path;

use cdl_core::data::{
    export_report, generate_planted, load_dataset, load_model, read_matrix, save_dataset,
    save_model, MatrixFormat, PlantedConfig, REPORT_FILE, TRACE_FILE,
};
use cdl_core::evaluation::{evaluate, EvalReport, Mode};
use cdl_core::model::fit;
use cdl_core::recognition::SpaceSelection;
use cdl_core::{AblationVariant, CdlError, Hyperparams};

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn minimal(dir: &Path, labels: &str) {
    write(dir, "features.txt", "3 4\n1 0 1 0\n0 1 0 1\n1 1 0 0\n");
    write(dir, "labels.txt", labels);
    write(dir, "cs.txt", "2 2\n1 0\n0 1\n");
    write(dir, "cu.txt", "2 1\n0.5\n0.5\n");
    write(dir, "seen.txt", "cat\ndog\n");
    write(dir, "unseen.txt", "zebra\n");
    write(
        dir,
        "data.manifest",
        "features = features.txt\nlabels = labels.txt\nsemantics_seen = cs.txt\n\
         semantics_unseen = cu.txt\nseen_classes = seen.txt\nunseen_classes = unseen.txt\n",
    );
}

#[test]
fn minimal_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    minimal(dir.path(), "cat\ndog\ncat\ndog\n");
    let ds = load_dataset(&dir.path().join("data.manifest")).unwrap();
    assert_eq!(ds.num_seen(), 2);
    assert_eq!(ds.num_unseen(), 1);
    assert_eq!(ds.labels, vec![0, 1, 0, 1]);
    assert_eq!(ds.features.shape(), (3, 4));
}

#[test]
fn unknown_label_is_named() {
    let dir = tempfile::tempdir().unwrap();
    minimal(dir.path(), "cat\ndog\ncow\ndog\n");
    let err = load_dataset(&dir.path().join("data.manifest")).unwrap_err();
    assert!(matches!(err, CdlError::UnknownLabel { .. }), "{err}");
    let msg = err.to_string();
    assert!(msg.contains("cow") && msg.contains("labels.txt"), "{msg}");
}

#[test]
fn bad_matrix_entry_names_file_and_location() {
    let dir = tempfile::tempdir().unwrap();
    minimal(dir.path(), "cat\ndog\ncat\ndog\n");
    write(dir.path(), "features.txt", "3 4\n1 0 1 0\n0 1 x 1\n1 1 0 0\n");
    let msg = load_dataset(&dir.path().join("data.manifest")).unwrap_err().to_string();
    assert!(msg.contains("features.txt") && msg.contains("line 3"), "{msg}");

    write(dir.path(), "features.txt", "3 4\n1 0 1 0\n0 1 NaN 1\n1 1 0 0\n");
    let msg = load_dataset(&dir.path().join("data.manifest")).unwrap_err().to_string();
    assert!(msg.contains("features.txt"), "{msg}");
}

#[test]
fn dimension_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    minimal(dir.path(), "cat\ndog\ncat\ndog\n");
    write(dir.path(), "cu.txt", "3 1\n0.5\n0.5\n0.1\n");
    assert!(load_dataset(&dir.path().join("data.manifest")).is_err());
}

#[test]
fn missing_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    minimal(dir.path(), "cat\ndog\ncat\ndog\n");
    fs::remove_file(dir.path().join("cs.txt")).unwrap();
    let msg = load_dataset(&dir.path().join("data.manifest")).unwrap_err().to_string();
    assert!(msg.contains("cs.txt"), "{msg}");
}

#[test]
fn dataset_round_trips_bit_for_bit() {
    let inst = generate_planted(&PlantedConfig { noise: 0.1, validation_classes: 2, ..Default::default() })
        .unwrap();
    for format in [MatrixFormat::Text, MatrixFormat::Binary] {
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(&inst.dataset, dir.path(), format).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back, inst.dataset);
    }
}

#[test]
fn model_round_trips_bit_for_bit() {
    let inst = generate_planted(&PlantedConfig { noise: 0.05, ..Default::default() }).unwrap();
    let ds = &inst.dataset;
    let model = fit(ds, &Hyperparams::default(), AblationVariant::CdlPr, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &ds.seen_classes, &ds.unseen_classes, &path).unwrap();
    let (back, seen, unseen) = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(seen, ds.seen_classes);
    assert_eq!(unseen, ds.unseen_classes);
}

#[test]
fn report_fields_reparse() {
    let inst = generate_planted(&PlantedConfig { noise: 0.1, ..Default::default() }).unwrap();
    let model = fit(&inst.dataset, &Hyperparams::default(), AblationVariant::Cdl, 0).unwrap();
    let report = evaluate(&model, &inst.dataset, &SpaceSelection::all_subsets(), Mode::Zsl).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let matrix = &model.visual_unseen;
    export_report(&report, &model.trace, dir.path(), &[("visual_unseen", matrix)]).unwrap();
    let text = fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    let back: EvalReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.zsl.len(), 7);
    assert_eq!(read_matrix(&dir.path().join("matrices/visual_unseen.txt")).unwrap(), *matrix);

    let trace = fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    let rows: Vec<&str> = trace.lines().collect();
    assert_eq!(rows.len(), 2 + model.trace.iterations.len());
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(last[1].parse::<f64>().unwrap(), model.trace.final_loss().total);
}

#[test]
fn na_report_has_no_iterations() {
    let inst = generate_planted(&PlantedConfig::default()).unwrap();
    let model = fit(&inst.dataset, &Hyperparams::default(), AblationVariant::Na, 0).unwrap();
    let report = evaluate(&model, &inst.dataset, &[SpaceSelection::single(cdl_core::recognition::Space::Visual)], Mode::Zsl)
        .unwrap();
    assert_eq!(report.iterations, 0);
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, &model.trace, dir.path(), &[]).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["iterations"], 0);
    assert_eq!(json["variant"], "NA");
    let trace = fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn gzsl_report_has_ts_tr_h_per_combination() {
    let inst = generate_planted(&PlantedConfig { noise: 0.05, ..Default::default() }).unwrap();
    let model = fit(&inst.dataset, &Hyperparams::default(), AblationVariant::Cdl, 0).unwrap();
    let report = evaluate(&model, &inst.dataset, &SpaceSelection::all_subsets(), Mode::Gzsl).unwrap();
    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    assert!(json.get("zsl").is_none());
    let rows = json["gzsl"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for row in rows {
        let mut keys: Vec<&str> = row.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, vec!["h", "spaces", "tr", "ts"]);
        let (ts, tr, h) = (row["ts"].as_f64().unwrap(), row["tr"].as_f64().unwrap(), row["h"].as_f64().unwrap());
        let expected = if ts + tr > 0.0 { 2.0 * ts * tr / (ts + tr) } else { 0.0 };
        assert!((h - expected).abs() < 1e-15);
    }
}

#[test]
fn planted_generation_is_deterministic() {
    let cfg = PlantedConfig { noise: 0.1, semantic_noise: 0.2, seed: 9, ..Default::default() };
    assert_eq!(generate_planted(&cfg).unwrap(), generate_planted(&cfg).unwrap());
}
