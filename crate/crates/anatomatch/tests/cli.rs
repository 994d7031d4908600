//! End-to-end CLI behavior: artifacts on disk, exit codes, cross-file
//! consistency, and schema checks.

use std::path::Path;
use std::process::Command;

use anatomatch::geom::VoxelPoint;
use anatomatch::io;
use anatomatch::testkit::random_unit_volume;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_anatomatch")
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(binary()).args(args).output().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(binary())
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn phantom_pair_manifest_matches_truth_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pair");
    let result = run(&[
        "phantom", "pair",
        "--seed", "5",
        "--dims", "32,32,32",
        "--structures", "6",
        "--classes", "4",
        "--correspondences", "8",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let corr: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("correspondences.json")).unwrap()).unwrap();
    assert_eq!(manifest["transform"], corr["transform"]);
    assert_eq!(corr["pairs"].as_array().unwrap().len(), 8);
    // stdout manifest line echoes the same translation
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("translation"));
    // the pair volumes exist and parse
    let a = io::read_embedding(out.join("a_intensity.aev")).unwrap();
    assert_eq!(a.dims(), [32, 32, 32]);
    let lb = io::read_label(out.join("b_labels.alv")).unwrap();
    assert_eq!(lb.dims(), [32, 32, 32]);
}

#[test]
fn missing_output_parent_is_io_error_exit_4() {
    let result = run(&[
        "phantom", "gen",
        "--seed", "1",
        "--dims", "8,8,8",
        "--structures", "0",
        "--out", "/nonexistent-root/phantom-out",
    ]);
    assert_eq!(result.status.code(), Some(4));
}

#[test]
fn malformed_point_is_usage_error_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let vol = random_unit_volume(3, [6, 6, 6], 4);
    let path = tmp.path().join("v.aev");
    io::write_embedding(&vol, &path).unwrap();
    let result = run(&[
        "match",
        "--template", path.to_str().unwrap(),
        "--query", path.to_str().unwrap(),
        "--point", "banana",
    ]);
    assert_eq!(result.status.code(), Some(2));
    // and distinct from a missing-file I/O failure
    let result = run(&[
        "match",
        "--template", "/nope/missing.aev",
        "--query", path.to_str().unwrap(),
        "--point", "1,2,3",
    ]);
    assert_eq!(result.status.code(), Some(4));
    // unknown mode is also usage
    let result = run(&[
        "match",
        "--template", path.to_str().unwrap(),
        "--query", path.to_str().unwrap(),
        "--point", "1,2,3",
        "--mode", "telepathy",
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn self_match_returns_input_point() {
    let tmp = tempfile::tempdir().unwrap();
    let vol = random_unit_volume(11, [8, 8, 8], 8);
    let path = tmp.path().join("v.aev");
    io::write_embedding(&vol, &path).unwrap();
    for mode in ["fixedpoint", "nn"] {
        let result = run(&[
            "match",
            "--template", path.to_str().unwrap(),
            "--query", path.to_str().unwrap(),
            "--point", "3,4,5",
            "--mode", mode,
        ]);
        assert!(result.status.success());
        let json: serde_json::Value = serde_json::from_slice(&result.stdout).unwrap();
        assert_eq!(json["voxel"], serde_json::json!([3, 4, 5]), "mode {mode}");
        assert_eq!(json["mm"], serde_json::json!([6.0, 8.0, 10.0]));
    }
}

#[test]
fn eval_perfect_predictions_and_id_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let pair_dir = tmp.path().join("pair");
    let result = run(&[
        "phantom", "pair",
        "--seed", "9",
        "--dims", "32,32,32",
        "--correspondences", "6",
        "--out", pair_dir.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let corr: serde_json::Value =
        serde_json::from_slice(&std::fs::read(pair_dir.join("correspondences.json")).unwrap())
            .unwrap();
    // predictions copied from the truth
    let preds: Vec<serde_json::Value> = corr["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            serde_json::json!({"index": i, "predicted_mm": p["truth_query"], "method": "copy"})
        })
        .collect();
    let pred_path = tmp.path().join("preds.json");
    std::fs::write(
        &pred_path,
        serde_json::to_vec(&serde_json::json!({"predictions": preds})).unwrap(),
    )
    .unwrap();
    let summary_path = tmp.path().join("summary.json");
    let result = run(&[
        "eval",
        "--pred", pred_path.to_str().unwrap(),
        "--truth", pair_dir.join("correspondences.json").to_str().unwrap(),
        "--out", summary_path.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&summary_path).unwrap()).unwrap();
    assert_eq!(summary["cpm_at_10mm"], 100.0);
    assert_eq!(summary["cpm_at_radius"], 100.0);
    assert_eq!(summary["med"]["mean"], 0.0);
    assert_eq!(summary["med"]["std"], 0.0);
    assert_eq!(summary["n"], 6);

    // duplicated index -> validation error (exit 3)
    let mut bad: Vec<serde_json::Value> = corr["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| serde_json::json!({"index": 0, "predicted_mm": p["truth_query"]}))
        .collect();
    bad[0]["index"] = serde_json::json!(0);
    std::fs::write(
        &pred_path,
        serde_json::to_vec(&serde_json::json!({"predictions": bad})).unwrap(),
    )
    .unwrap();
    let result = run(&[
        "eval",
        "--pred", pred_path.to_str().unwrap(),
        "--truth", pair_dir.join("correspondences.json").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
}

/// The CLI eval summary must equal a direct metrics computation on the same
/// records.
#[test]
fn eval_matches_library_metrics() {
    use anatomatch::metrics::{summarize, EvalRecord};
    use anatomatch::geom::PhysPoint;
    let tmp = tempfile::tempdir().unwrap();
    // hand-written truth file with two pairs
    let truth = serde_json::json!({
        "pairs": [
            {"template": [10.0, 10.0, 10.0], "truth_query": [12.0, 10.0, 10.0], "radius_mm": 5.0, "tag": "a"},
            {"template": [30.0, 30.0, 30.0], "truth_query": [30.0, 34.0, 33.0], "radius_mm": 4.0, "tag": "b"}
        ],
        "transform": {"rotation_deg": [0.0, 0.0, 0.0], "scale": [1.0, 1.0, 1.0], "translation_mm": [0.0, 0.0, 0.0]}
    });
    let truth_path = tmp.path().join("truth.json");
    std::fs::write(&truth_path, serde_json::to_vec(&truth).unwrap()).unwrap();
    let preds = serde_json::json!({
        "predictions": [
            {"index": 0, "predicted_mm": [13.0, 10.0, 10.0], "method": "m"},
            {"index": 1, "predicted_mm": [30.0, 30.0, 30.0], "method": "m"}
        ]
    });
    let pred_path = tmp.path().join("preds.json");
    std::fs::write(&pred_path, serde_json::to_vec(&preds).unwrap()).unwrap();
    let out_path = tmp.path().join("summary.json");
    let result = run(&[
        "eval",
        "--pred", pred_path.to_str().unwrap(),
        "--truth", truth_path.to_str().unwrap(),
        "--out", out_path.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let got: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    let records = vec![
        EvalRecord {
            pair_id: "0".into(),
            predicted: PhysPoint::new(13.0, 10.0, 10.0),
            truth: PhysPoint::new(12.0, 10.0, 10.0),
            radius_mm: 5.0,
            method: "m".into(),
        },
        EvalRecord {
            pair_id: "1".into(),
            predicted: PhysPoint::new(30.0, 30.0, 30.0),
            truth: PhysPoint::new(30.0, 34.0, 33.0),
            radius_mm: 4.0,
            method: "m".into(),
        },
    ];
    let expect = summarize(&records).unwrap();
    assert_eq!(got["cpm_at_10mm"].as_f64().unwrap(), expect.cpm_at_10mm);
    assert_eq!(got["cpm_at_radius"].as_f64().unwrap(), expect.cpm_at_radius);
    assert_eq!(got["med"]["mean"].as_f64().unwrap(), expect.med.mean);
    assert_eq!(got["med_x"]["std"].as_f64().unwrap(), expect.med_x.std);
}

#[test]
fn corrupt_command_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_dir = tmp.path().join("phantom");
    assert!(run(&[
        "phantom", "gen",
        "--seed", "3",
        "--dims", "24,24,24",
        "--structures", "4",
        "--classes", "3",
        "--out", gen_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let out_path = tmp.path().join("shifted.aev");
    let result = run(&[
        "phantom", "corrupt",
        "--volume", gen_dir.join("intensity.aev").to_str().unwrap(),
        "--labels", gen_dir.join("labels.alv").to_str().unwrap(),
        "--mode", "intensity-shift",
        "--center", "12,12,12",
        "--radius-mm", "10",
        "--gain", "1.5",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let original = io::read_embedding(gen_dir.join("intensity.aev")).unwrap();
    let shifted = io::read_embedding(&out_path).unwrap();
    assert_eq!(original.dims(), shifted.dims());
    assert_ne!(original.data(), shifted.data());
    // voxels far from the region untouched
    let far = VoxelPoint::new(0, 0, 0);
    assert_eq!(
        original.value_at(far).unwrap(),
        shifted.value_at(far).unwrap()
    );
    // unknown mode is usage
    let result = run(&[
        "phantom", "corrupt",
        "--volume", gen_dir.join("intensity.aev").to_str().unwrap(),
        "--labels", gen_dir.join("labels.alv").to_str().unwrap(),
        "--mode", "entropy",
        "--center", "12,12,12",
        "--radius-mm", "10",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn ablation_report_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"seed": 5,
            "experiment": {"train_pairs": 1, "eval_pairs": 2, "correspondences_per_pair": 3,
              "phantom": {"dims": [28, 28, 28], "spacing_mm": 2.0, "num_classes": 4, "n_structures": 5}},
            "trainer": {"steps": 20, "batch_pairs": 1, "n_pos": 8, "n_hard": 3, "n_random": 3,
              "n_sem": 12, "app_channels": 8, "sem_channels": 6}}"#,
    )
    .unwrap();
    let out = tmp.path().join("report");
    let result = run_in(
        tmp.path(),
        &[
            "ablation",
            "--config", config.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let names: Vec<&str> = rows.iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["nn", "nn+semantic", "fixedpoint", "fixedpoint+semantic"]);
    for row in rows {
        assert!(row["summary"]["cpm_at_10mm"].is_number());
        assert!(row["summary"]["cpm_at_radius"].is_number());
        assert!(row["summary"]["med"]["mean"].is_number());
    }
    let table = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(table.contains("CPM@10mm"));
    assert!(table.contains("fixedpoint+semantic"));
    // invalid config value rejected before any work (exit 3), output dir untouched
    std::fs::write(&config, r#"{"seed": 5, "matcher": {"cube_l": 4}}"#).unwrap();
    let result = run(&[
        "ablation",
        "--config", config.to_str().unwrap(),
        "--out", tmp.path().join("never").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
    assert!(!tmp.path().join("never").exists());
}

#[test]
fn loss_check_passes_and_reports_complexity() {
    let result = run(&["loss-check", "--batches", "12", "--seed", "4"]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("[PASS]"));
    assert!(!stdout.contains("[FAIL]"));
    assert!(stdout.contains("n=32"));
    assert!(stdout.contains("n=128"));
    assert!(stdout.contains("overall: PASS"));

    let result = run(&["loss-check", "--batches", "12", "--seed", "4", "--json"]);
    assert!(result.status.success());
    let json: serde_json::Value = serde_json::from_slice(&result.stdout).unwrap();
    assert_eq!(json["all_passed"], true);
    assert_eq!(json["complexity"].as_array().unwrap().len(), 3);
}

#[test]
fn train_toy_zero_steps_equals_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let config_text = r#"{"seed": 8,
        "experiment": {"train_pairs": 1, "eval_pairs": 1, "correspondences_per_pair": 2,
          "phantom": {"dims": [24, 24, 24], "spacing_mm": 2.0, "num_classes": 3, "n_structures": 3}},
        "trainer": {"steps": 0, "batch_pairs": 1, "n_pos": 6, "n_hard": 2, "n_random": 2,
          "n_sem": 8, "app_channels": 8, "sem_channels": 6}}"#;
    let config = tmp.path().join("train.json");
    std::fs::write(&config, config_text).unwrap();
    let out = tmp.path().join("heads");
    let result = run(&[
        "train-toy",
        "--config", config.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    // heads equal the library initialization for the same config
    let run_config: anatomatch::cli::RunConfig = serde_json::from_str(config_text).unwrap();
    let experiment = run_config.to_experiment(8);
    let outcome = anatomatch::experiment::train_heads(&experiment).unwrap();
    assert_eq!(
        std::fs::read(out.join("appearance.aph")).unwrap(),
        io::head_to_bytes(&outcome.appearance)
    );
    assert_eq!(
        std::fs::read(out.join("semantic.aph")).unwrap(),
        io::head_to_bytes(&outcome.semantic)
    );
    let history = std::fs::read_to_string(out.join("loss_history.csv")).unwrap();
    assert_eq!(history, "step,appearance,semantic,total\n");
}
