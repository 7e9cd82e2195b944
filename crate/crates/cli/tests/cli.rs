use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pbp_core::ablation::{ABLATION_HEADER, OFFROAD_HEADER};
use pbp_core::{load_scene, predict, ModelParams, PredictConfig};
use serde_json::Value;

fn pbp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = pbp(args, cwd);
    assert!(
        out.status.success(),
        "pbp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of(args: &[&str], cwd: &Path) -> String {
    let out = pbp(args, cwd);
    assert!(!out.status.success(), "pbp {args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

/// Small corpus plus a briefly trained model.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["--seed", "2", "--out", "sc", "generate", "--n-scenes", "12", "--path-free-fraction", "0.25"], p);
    ok(&["--seed", "2", "--out", "m", "train", "--scenes", "sc", "--epochs", "2"], p);
    dir
}

#[test]
fn generate_writes_padded_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["--seed", "5", "--out", "a", "generate", "--n-scenes", "3", "--layout", "grid"], p);
    ok(&["--seed", "5", "--out", "b", "generate", "--n-scenes", "3", "--layout", "grid"], p);
    let mut names: Vec<String> = fs::read_dir(p.join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["scene_00000.json", "scene_00001.json", "scene_00002.json"]);
    for n in &names {
        assert_eq!(fs::read(p.join("a").join(n)).unwrap(), fs::read(p.join("b").join(n)).unwrap());
    }
}

#[test]
fn train_predict_eval_roundtrip() {
    let dir = workspace();
    let p = dir.path();
    let loss = fs::read_to_string(p.join("m/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert!(fs::read_to_string(p.join("m/loss.svg")).unwrap().starts_with("<svg"));

    for i in 0..12 {
        let scene_file = format!("sc/scene_{i:05}.json");
        ok(&["--out", "pred.json", "predict", "--model", "m/checkpoint.json", "--scene", &scene_file], p);
        let v: Value = serde_json::from_str(&fs::read_to_string(p.join("pred.json")).unwrap()).unwrap();
        let modes = v["modes"].as_array().unwrap();
        let sum: f64 = modes.iter().map(|m| m["probability"].as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);

        // the file carries exactly what in-process prediction produces
        let params = ModelParams::from_json(&fs::read_to_string(p.join("m/checkpoint.json")).unwrap()).unwrap();
        let scene = load_scene(fs::File::open(p.join(&scene_file)).unwrap()).unwrap();
        let want = predict(&params, &scene, scene.focal_agent_id, &PredictConfig::default()).unwrap();
        assert_eq!(v["agent_id"].as_i64(), Some(want.agent_id));
        assert_eq!(modes.len(), want.num_modes());
        for (m, rec) in modes.iter().enumerate() {
            assert_eq!(rec["probability"].as_f64(), Some(want.probabilities[m]));
            let wps = rec["waypoints"].as_array().unwrap();
            assert_eq!(wps.len(), 30);
            for (w, q) in wps.iter().zip(&want.trajectories[m]) {
                assert_eq!((w[0].as_f64().unwrap(), w[1].as_f64().unwrap()), (q.x, q.y));
            }
            match &want.mode_paths[m] {
                Some(path) => {
                    let ids: Vec<i64> = rec["path_segment_ids"].as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).collect();
                    assert_eq!(ids, path.segment_ids);
                }
                None => assert!(rec["path_segment_ids"].is_null()),
            }
        }
    }

    ok(&["--out", "ev", "eval", "--model", "m/checkpoint.json", "--scenes", "sc"], p);
    let report: Value = serde_json::from_str(&fs::read_to_string(p.join("ev/metrics.json")).unwrap()).unwrap();
    assert_eq!(report["num_samples"], 12);
    for key in ["min_ade", "min_fde", "miss_rate"] {
        assert!(report[key]["1"].is_number() && report[key]["6"].is_number());
    }
    let csv = fs::read_to_string(p.join("ev/offroad.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(OFFROAD_HEADER));
    assert_eq!(csv.lines().count(), 31);
    assert!(p.join("ev/offroad.svg").exists());
}

#[test]
fn ablate_single_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["--seed", "4", "--out", "sc", "generate", "--n-scenes", "10"], p);
    let stdout = ok(&["--out", "ab", "ablate", "--scenes", "sc", "--decoders", "pbp", "--epochs", "1"], p);
    let csv = fs::read_to_string(p.join("ab/ablation.csv")).unwrap();
    assert_eq!(stdout, csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ABLATION_HEADER);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("pbp,"));
    assert_eq!(lines[1].split(',').count(), ABLATION_HEADER.split(',').count());
    for f in ["offroad_pbp.csv", "loss_pbp.csv", "checkpoint_pbp.json", "offroad.svg"] {
        assert!(p.join("ab").join(f).exists(), "{f}");
    }
}

#[test]
fn errors_carry_stable_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["--out", "sc", "generate", "--n-scenes", "1"], p);
    fs::write(p.join("corrupt.json"), "{ not json").unwrap();
    fs::write(p.join("old.json"), r#"{"format_version": 0}"#).unwrap();
    fs::write(p.join("cfg.json"), r#"{"bogus": {}}"#).unwrap();

    let e = stderr_of(&["predict", "--model", "corrupt.json", "--scene", "sc/scene_00000.json"], p);
    assert!(e.starts_with("error[E_CHECKPOINT]"), "{e}");
    let e = stderr_of(&["predict", "--model", "old.json", "--scene", "sc/scene_00000.json"], p);
    assert!(e.starts_with("error[E_CHECKPOINT]") && e.contains("version 0"), "{e}");
    let e = stderr_of(&["--config", "cfg.json", "generate"], p);
    assert!(e.starts_with("error[E_CONFIG]"), "{e}");
    let e = stderr_of(&["predict", "--model", "missing.json", "--scene", "sc/scene_00000.json"], p);
    assert!(e.starts_with("error[E_IO]"), "{e}");
    let e = stderr_of(&["train", "--scenes", "."], p);
    assert!(e.starts_with("error[E_SCENE]"), "{e}");
    let e = stderr_of(&["ablate", "--scenes", "sc", "--decoders", "transformer"], p);
    assert!(e.contains("transformer"), "{e}");
}

#[test]
fn config_file_feeds_every_module() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("cfg.json"),
        r#"{"generate": {"n_scenes": 4, "layout": "fork", "seed": 9}, "train": {"epochs": 1, "decoder": "goal_based"}, "predict": {"k": 2}}"#,
    )
    .unwrap();
    ok(&["--config", "cfg.json", "--out", "sc", "generate"], p);
    assert_eq!(fs::read_dir(p.join("sc")).unwrap().count(), 4);
    ok(&["--config", "cfg.json", "--out", "m", "train", "--scenes", "sc"], p);
    let ckpt: Value = serde_json::from_str(&fs::read_to_string(p.join("m/checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ckpt["decoder"], "goal_based");
    let out = ok(&["--config", "cfg.json", "predict", "--model", "m/checkpoint.json", "--scene", "sc/scene_00001.json"], p);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["modes"].as_array().unwrap().len() <= 2);
}
