use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use apebehave::cli::RunManifest;
use apebehave::sampler::SampleManifest;
use apebehave::synth::{generate, GenConfig};

fn apebehave(runs: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apebehave"))
        .args(args)
        .env("APEBEHAVE_RUNS", runs)
        .env_remove("APEBEHAVE_CACHE")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn only_manifest(runs: &Path) -> RunManifest {
    let dirs: Vec<PathBuf> = fs::read_dir(runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    serde_json::from_str(&fs::read_to_string(dirs[0].join("manifest.json")).unwrap()).unwrap()
}

fn small_corpus(dir: &Path) -> PathBuf {
    let root = dir.join("corpus");
    let cfg = GenConfig { num_videos: 2, frames_per_video: 80, width: 64, height: 64, ..GenConfig::default() };
    generate(&cfg, &root).unwrap();
    root
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = apebehave(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("Usage"), "{}", text(&out.stderr));
}

#[test]
fn train_help_shows_the_published_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = apebehave(tmp.path(), &["train", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let help = text(&out.stdout);
    for needle in [
        "[default: 0.0001]",
        "[default: 0.9]",
        "[default: 0.01]",
        "[default: 9]",
        "[default: 20]",
        "[default: 72]",
        "[default: 400:25:75]",
        "[default: focal]",
        "[default: optimised]",
    ] {
        assert!(help.contains(needle), "missing {needle} in\n{help}");
    }
}

#[test]
fn config_file_overrides_flags_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let runs = tmp.path().join("runs");
    let config = tmp.path().join("run.toml");
    fs::write(&config, "[sampler]\nsequence_length = 10\nsampling_stride = 10\n").unwrap();
    let manifest_path = tmp.path().join("m.jsonl");
    let out = apebehave(
        &runs,
        &[
            "--config",
            config.to_str().unwrap(),
            "sample",
            corpus.to_str().unwrap(),
            "--seq-len",
            "20",
            "--stride",
            "20",
            "--out",
            manifest_path.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let samples = SampleManifest::load(&manifest_path).unwrap();
    assert_eq!(samples.config.sequence_length, 10);
    assert_eq!(samples.config.sampling_stride, 10);
    assert_eq!(samples.config.duration_threshold, 72);
    // one 80-frame segment per video, windows at 0, 10, ..., 70
    assert_eq!(samples.samples.len(), 2 * 8);

    let run = only_manifest(&runs);
    assert_eq!(run.command, "sample");
    assert_eq!(run.exit_code, Some(0));
    assert_eq!(run.config["sampler"]["sequence_length"], 10);
    assert_eq!(run.input_hash.len(), 64);
    assert!(run.finished_at.is_some());
}

#[test]
fn unknown_config_key_fails_with_a_json_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let runs = tmp.path().join("runs");
    let config = tmp.path().join("run.toml");
    fs::write(&config, "[sampler]\nsequence_lenght = 10\n").unwrap();
    let out = apebehave(&runs, &["--config", config.to_str().unwrap(), "stats", corpus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_str(text(&out.stderr).trim()).unwrap();
    assert_eq!(line["error"], "config");
    assert!(line["message"].as_str().unwrap().contains("sequence_lenght"));
    let run = only_manifest(&runs);
    assert_eq!(run.exit_code, Some(1));
    assert!(run.error.is_some());
}

#[test]
fn validate_fails_on_a_broken_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let runs = tmp.path().join("runs");
    assert_eq!(apebehave(&runs, &["validate", corpus.to_str().unwrap()]).status.code(), Some(0));
    let victim = fs::read_dir(corpus.join("synth_0000/annotations"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_frame_5.xml"))
        .unwrap();
    fs::remove_file(victim).unwrap();
    let out = apebehave(&runs, &["validate", corpus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("gap"), "{}", text(&out.stdout));
}

#[test]
fn crossval_plan_on_500_videos_has_375_125_folds() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    for i in 0..500 {
        fs::create_dir_all(corpus.join(format!("v{i:03}"))).unwrap();
    }
    let out = apebehave(&tmp.path().join("runs"), &["crossval", corpus.to_str().unwrap(), "--plan-only"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 4);
    for line in lines {
        assert!(line.ends_with(": 375 train / 125 test videos"), "{line}");
    }
}
