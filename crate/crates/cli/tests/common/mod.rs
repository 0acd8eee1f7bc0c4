#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lipforensics"))
}

/// Runs the binary in `dir` and returns its output, panicking with stderr on an unexpected exit code.
pub fn run_in(dir: &Path, args: &[&str], expect: i32) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(expect),
        "lipforensics {}\nstdout:\n{}\nstderr:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub struct PipelineRun {
    pub pretrained: PathBuf,
    pub checkpoint: PathBuf,
    pub report: PathBuf,
    pub test_manifest: PathBuf,
}

/// synth -> preprocess -> pretrain -> frozen finetune -> plain eval, at toy size.
pub fn desk_pipeline(dir: &Path) -> PipelineRun {
    let r = |args: &[&str]| {
        run_in(dir, args, 0);
    };
    r(&["synth", "--corpus", "lipreading", "--out", "lip", "--seed", "1", "--videos", "8", "--frames", "25"]);
    r(&["synth", "--corpus", "forgery", "--out", "train", "--seed", "2", "--videos", "8", "--frames", "30"]);
    r(&[
        "synth", "--corpus", "forgery", "--out", "test", "--seed", "3", "--videos", "6", "--frames", "50", "--split", "test",
        "--prefix", "test_",
    ]);
    r(&["preprocess", "--manifest", "train/manifest.jsonl", "--out", "train_crops"]);
    r(&["preprocess", "--manifest", "test/manifest.jsonl", "--out", "test_crops"]);
    r(&[
        "train", "--seed", "4", "--stage", "pretrain", "--manifest", "lip/manifest.jsonl", "--out", "pre", "--epochs", "1",
        "--batch-size", "4", "--val-fraction", "0",
    ]);
    r(&[
        "train", "--seed", "5", "--mode", "frozen", "--init", "pre/checkpoint.lfw", "--manifest",
        "train_crops/manifest.jsonl", "--out", "ft", "--epochs", "2", "--batch-size", "4",
    ]);
    r(&["eval", "--checkpoint", "ft/checkpoint.lfw", "--manifest", "test_crops/manifest.jsonl", "--out", "report/plain.json"]);
    PipelineRun {
        pretrained: dir.join("pre/checkpoint.lfw"),
        checkpoint: dir.join("ft/checkpoint.lfw"),
        report: dir.join("report/plain.json"),
        test_manifest: dir.join("test_crops/manifest.jsonl"),
    }
}
