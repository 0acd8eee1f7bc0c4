mod common;

use std::fs;
use std::path::Path;

use common::{desk_pipeline, run_in};
use lipforensics::nn::ModelConfig;
use serde_json::Value;

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check_video_score(v: &Value) {
    assert!(v["videoId"].is_string());
    let clips = v["clipScores"].as_array().unwrap();
    assert!(!clips.is_empty());
    let mean = clips.iter().map(|c| c.as_f64().unwrap()).sum::<f64>() / clips.len() as f64;
    assert!((v["videoScore"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(matches!(v["label"].as_u64(), Some(0 | 1)));
}

#[test]
fn end_to_end_pipeline_produces_a_plain_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = desk_pipeline(dir.path());
    let report = read_json(&run.report);
    assert_eq!(report["protocol"], "plain");
    assert_eq!(report["testVideos"], 6);
    let result = &report["result"];
    let videos = result["videos"].as_array().unwrap();
    assert_eq!(videos.len(), 6);
    videos.iter().for_each(check_video_score);
    let auc = result["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!((0.0..=1.0).contains(&result["accuracy"].as_f64().unwrap()));
    assert!(run.report.with_extension("txt").exists());
    assert!(dir.path().join("ft/train_log.jsonl").exists());
    let resolved = read_json(&dir.path().join("ft/run_config.json"));
    assert_eq!(resolved["seed"], 5);
    assert_eq!(resolved["finetuneMode"], "frozen");
    let sidecar: ModelConfig = serde_json::from_value(read_json(&run.checkpoint.with_extension("json"))).unwrap();
    assert_eq!(sidecar, ModelConfig::desk(sidecar.lipread_classes));

    let single = dir.path().join("single.jsonl");
    let first = fs::read_to_string(&run.test_manifest).unwrap().lines().next().unwrap().to_string();
    fs::write(&single, first + "\n").unwrap();
    // The crop paths in the manifest are relative to its own directory.
    let single_in_place = dir.path().join("test_crops/single.jsonl");
    fs::rename(&single, &single_in_place).unwrap();
    run_in(
        dir.path(),
        &["eval", "--checkpoint", "ft/checkpoint.lfw", "--manifest", "test_crops/single.jsonl", "--out", "one.json"],
        0,
    );
    let one = read_json(&dir.path().join("one.json"));
    assert_eq!(one["testVideos"], 1);
    assert_eq!(one["result"]["videos"].as_array().unwrap().len(), 1);
    assert!(one["result"]["auc"].is_null());
    check_video_score(&one["result"]["videos"][0]);

    run_in(
        dir.path(),
        &[
            "eval", "--checkpoint", "ft/checkpoint.lfw", "--manifest", "test_crops/manifest.jsonl", "--protocol",
            "clip-sweep", "--clip-lengths", "5,25", "--out", "sweep.json",
        ],
        0,
    );
    let sweep = read_json(&dir.path().join("sweep.json"));
    assert_eq!(sweep["protocol"], "clip-sweep");

    let occ = dir.path().join("occ/map.pgm");
    let clip = fs::read_dir(dir.path().join("test_crops/crops")).unwrap().next().unwrap().unwrap().path();
    run_in(
        dir.path(),
        &[
            "occlude", "--checkpoint", "ft/checkpoint.lfw", "--clip", clip.to_str().unwrap(), "--block", "80",
            "--out", occ.to_str().unwrap(),
        ],
        0,
    );
    let map = read_json(&occ.with_extension("json"));
    assert_eq!(map["forwards"], (88 - 80 + 1) * (88 - 80 + 1));
    assert!(occ.exists() && occ.with_extension("png").exists());
}

/// Closed-form learnable-scalar counts of the preset architectures.
fn closed_form(cfg: &ModelConfig) -> [usize; 4] {
    let ex = &cfg.extractor;
    let bn = |c: usize| 2 * c;
    let mut g = ex.frontend_channels * 5 * 7 * 7 + bn(ex.frontend_channels);
    let mut c_in = ex.frontend_channels;
    for (stage, &c) in ex.stage_channels.iter().enumerate() {
        for blk in 0..ex.blocks_per_stage {
            g += c_in * c * 9 + bn(c) + c * c * 9 + bn(c);
            if (stage > 0 && blk == 0) || c_in != c {
                g += c_in * c + bn(c);
            }
            c_in = c;
        }
    }
    let w = cfg.tcn.branch_width;
    let cat = w * cfg.tcn.kernel_sizes.len();
    let mut h = 0;
    let mut c_in = ex.stage_channels[3];
    for _ in 0..cfg.tcn.blocks {
        for &k in &cfg.tcn.kernel_sizes {
            h += c_in * w * k + w + bn(w) + w + w * w * k + w + bn(w);
        }
        if c_in != cat {
            h += c_in * cat + cat;
        }
        h += cat;
        c_in = cat;
    }
    [g, h, cat * cfg.lipread_classes + cfg.lipread_classes, cat + 1]
}

#[test]
fn params_report_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    for (preset, classes, cfg) in [("full", "500", ModelConfig::full(500)), ("desk", "7", ModelConfig::desk(7))] {
        let out = dir.path().join(format!("{preset}.json"));
        run_in(dir.path(), &["params", "--preset", preset, "--classes", classes, "--out", out.to_str().unwrap()], 0);
        let got = read_json(&out);
        let [g, h, l, f] = closed_form(&cfg);
        assert_eq!(got["featureExtractor"], g);
        assert_eq!(got["temporalNet"], h);
        assert_eq!(got["lipreadHead"], l);
        assert_eq!(got["forgeryHead"], f);
        assert_eq!(got["total"], g + h + l + f);
        assert_eq!(got["trainableFrozen"], h + f);
        assert_eq!(got["detectorTotal"], g + h + f);
    }
}

#[test]
fn gradcheck_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gradcheck", "--instances", "2", "--out", "g.json"], 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max rel err"));
    let report = read_json(&dir.path().join("g.json"));
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r["passed"] == true));
}

#[test]
fn corrupt_writes_frames_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["synth", "--corpus", "forgery", "--out", "v", "--seed", "9", "--videos", "2", "--frames", "6"], 0);
    let frames_dir = fs::read_dir(dir.path().join("v/frames")).unwrap().next().unwrap().unwrap().path();
    for out in ["a", "b"] {
        run_in(
            dir.path(),
            &[
                "corrupt", "--kind", "noise", "--severity", "3", "--seed", "4", "--in",
                frames_dir.to_str().unwrap(), "--out", out,
            ],
            0,
        );
    }
    let names: Vec<_> = fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(fs::read(dir.path().join("a").join(&n)).unwrap(), fs::read(dir.path().join("b").join(&n)).unwrap());
    }
}

#[test]
fn exit_codes_distinguish_usage_data_and_check_failures() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // Missing required flag.
    run_in(p, &["train", "--manifest", "m.jsonl", "--out", "o"], 2);
    fs::write(p.join("bad.json"), r#"{"noSuchField": 1}"#).unwrap();
    run_in(p, &["train", "--seed", "1", "--config", "bad.json", "--manifest", "m.jsonl", "--out", "o"], 2);
    run_in(p, &["params", "--config", "missing.json"], 2);
    run_in(p, &["train", "--seed", "1", "--manifest", "missing.jsonl", "--out", "o"], 3);
    run_in(p, &["eval", "--checkpoint", "missing.lfw", "--manifest", "m.jsonl", "--out", "r.json"], 3);
    run_in(p, &["corrupt", "--kind", "noise", "--severity", "9", "--in", ".", "--out", "x"], 2);
}
