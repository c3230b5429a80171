//! The `apebehave` command: one subcommand per pipeline stage.
//!
//! Settings are resolved in three layers: built-in defaults, then
//! command-line flags, then the TOML file given with `--config`, which
//! overrides both. Every invocation writes `runs/<timestamp>/manifest.json`.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use config::{ConfigFile, FlowSettings, PathSettings, Resolved, SplitSettings};
pub use manifest::{hash_inputs, new_run_dir, RunManifest};

use crate::annotation::{split_corpus, validate_corpus, Corpus, CorpusSplit, SplitRatio};
use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};
use crate::eval::{cross_validate, evaluate, make_folds, predictions_for_video, render_skim};
use crate::flow::{FlowCache, FlowEncodingConfig, FlowParams};
use crate::model::{Fusion, ModelConfig, Variant};
use crate::nn::Tensor;
use crate::sampler::{plan_samples, SampleManifest, SamplerConfig};
use crate::synth::{generate, GenConfig};
use crate::train::{
    fit, pretrained_backbone_cached, read_weights, Checkpoint, Dataset, FitOptions, LossKind, PretrainConfig, TrainConfig,
};

pub const CACHE_ENV: &str = "APEBEHAVE_CACHE";
pub const RUNS_ENV: &str = "APEBEHAVE_RUNS";

#[derive(Debug, Parser)]
#[command(name = "apebehave", version, about = "Behaviour recognition for multi-subject camera-trap video")]
pub struct Cli {
    /// TOML settings file; its values override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where run manifests and outputs are written.
    #[arg(long, global = true, env = RUNS_ENV, default_value = "runs")]
    pub runs_dir: PathBuf,
    /// Root for flow and pretrained-backbone caches [default: <corpus>/.apebehave].
    #[arg(long, global = true, env = CACHE_ENV)]
    pub cache_root: Option<PathBuf>,
    /// Log progress to stderr (-vv for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus for annotation defects; exits 1 if any are found.
    Validate { corpus: PathBuf },
    /// Per-video counts, behaviour histogram and qualifying sequences.
    Stats {
        corpus: PathBuf,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Generate a synthetic corpus from a generator TOML file.
    Gen {
        gen_config: PathBuf,
        #[arg(long, default_value = "synthetic_corpus")]
        out: PathBuf,
    },
    /// Write the sequence-sampling plan as JSON Lines.
    Sample {
        corpus: PathBuf,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long, default_value = "manifest.jsonl")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::All)]
        split: SplitName,
        #[command(flatten)]
        split_args: SplitArgs,
    },
    /// Precompute encoded optical flow for every annotated frame.
    Flow {
        corpus: PathBuf,
        /// Flow cache directory [default: <cache-root>/flow].
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Train on the training split, validating on the validation split.
    Train {
        corpus: PathBuf,
        #[command(flatten)]
        args: TrainArgs,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split of a corpus.
    Eval {
        checkpoint: PathBuf,
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[command(flatten)]
        split_args: SplitArgs,
    },
    /// K-fold cross-validation over all videos of a corpus.
    Crossval {
        corpus: PathBuf,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        /// Print the fold assignment and stop without training.
        #[arg(long)]
        plan_only: bool,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Draw predicted labels over every frame of one video.
    Render {
        checkpoint: PathBuf,
        corpus: PathBuf,
        video_id: String,
        #[arg(long, default_value = "render")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum SplitName {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Optimised,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Late,
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Focal,
    Ce,
}

/// `full` is the published architecture; `desk` keeps the topology at
/// backbone width 8, LSTM width 64 and 32-pixel crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Full,
    Desk,
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Frames per sequence.
    #[arg(long, default_value_t = 20)]
    pub seq_len: usize,
    /// Offset between consecutive sequence starts, in frames.
    #[arg(long, default_value_t = 20)]
    pub stride: usize,
    /// Minimum run of one behaviour, in frames.
    #[arg(long, default_value_t = 72)]
    pub threshold: usize,
}

impl SamplerArgs {
    fn config(&self, crop_size: usize) -> SamplerConfig {
        SamplerConfig {
            sequence_length: self.seq_len,
            sampling_stride: self.stride,
            duration_threshold: self.threshold,
            crop_size,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Train:val:test proportions.
    #[arg(long, default_value = "400:25:75", value_parser = parse_ratio)]
    pub split_ratio: SplitRatio,
}

fn parse_ratio(s: &str) -> std::result::Result<SplitRatio, String> {
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [train, val, test] => Ok(SplitRatio::new(train, val, test)),
        _ => Err("expected TRAIN:VAL:TEST".into()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    /// Motion magnitude, in pixels, mapped to full brightness.
    #[arg(long, default_value_t = 20.0)]
    pub clip_magnitude: f32,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Optimised)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = FusionArg::Late)]
    pub fusion: FusionArg,
    #[arg(long, value_enum, default_value_t = LossArg::Focal)]
    pub loss: LossArg,
    /// Focal loss weighting factor.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Focal loss focusing parameter.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.01)]
    pub wd: f64,
    #[arg(long, default_value_t = 9)]
    pub batch: usize,
    /// One sample per class in every batch.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub balanced: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value_t = Scale::Full)]
    pub scale: Scale,
    /// Initialise both backbones from pretrained weights.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub pretrained: bool,
    /// Backbone weights (safetensors); without it, weights come from
    /// pretraining on generated shapes and subject stills, cached under the cache root.
    #[arg(long)]
    pub backbone_weights: Option<PathBuf>,
    /// Stop once the running training top-1 reaches this fraction.
    #[arg(long)]
    pub stop_at: Option<f64>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Crop side in pixels [default: 224 at full scale, 32 at desk scale].
    #[arg(long)]
    pub crop: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub flow: FlowArgs,
}

impl TrainArgs {
    fn resolve(&self, cache_root: &Path) -> Resolved {
        let variant = match self.model {
            ModelArg::Optimised => Variant::Optimised,
            ModelArg::Baseline => Variant::Baseline,
        };
        let fusion = match self.fusion {
            FusionArg::Late => Fusion::Late,
            FusionArg::Conv => Fusion::Convolutional,
        };
        let mut model = match self.scale {
            Scale::Full => ModelConfig { variant, fusion, ..ModelConfig::default() },
            Scale::Desk => ModelConfig::desk(variant, fusion),
        };
        if let Some(c) = self.crop {
            model.crop_size = c;
        }
        model.sequence_length = self.sampler.seq_len;
        model.pretrained_backbone = self.pretrained;
        let train = TrainConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            weight_decay: self.wd,
            batch_size: self.batch,
            loss: match self.loss {
                LossArg::Focal => LossKind::Focal,
                LossArg::Ce => LossKind::CrossEntropy,
            },
            focal_alpha: self.alpha,
            focal_gamma: self.gamma,
            epochs: self.epochs,
            seed: self.seed,
            balanced: self.balanced,
            ..TrainConfig::default()
        };
        Resolved {
            sampler: self.sampler.config(model.crop_size),
            model,
            train,
            flow: flow_settings(&self.flow, cache_root.join("flow")),
            split: SplitSettings { seed: self.split.split_seed, ratio: self.split.split_ratio },
            paths: PathSettings { pretrain_cache: cache_root.join("pretrained") },
        }
    }
}

fn flow_settings(args: &FlowArgs, cache: PathBuf) -> FlowSettings {
    FlowSettings {
        params: FlowParams::default(),
        encoding: FlowEncodingConfig { clip_magnitude: args.clip_magnitude, ..FlowEncodingConfig::default() },
        cache,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct CrossvalSettings {
    folds: usize,
    seed: u64,
}

const SECTIONS: [&str; 8] = ["sampler", "model", "train", "flow", "split", "paths", "gen", "crossval"];

/// Runs the command line `argv` (program name first) and returns the
/// process exit code: 0 success, 1 runtime failure, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut manifest = RunManifest::new(cli.command.name(), argv);
    let run_dir = new_run_dir(&cli.runs_dir, manifest.started_at);
    let result = execute(&cli, &run_dir, &mut manifest);
    manifest.finished_at = Some(chrono::Utc::now());
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            manifest.error = Some(e.to_string());
            1
        }
    };
    manifest.exit_code = Some(code);
    if let Err(e) = manifest.save(&run_dir) {
        report_error(&e);
        return 1;
    }
    if let Err(e) = result {
        report_error(&e);
    }
    code
}

/// One JSON object on stderr: `{"error": <kind>, "message": <text>}`.
fn report_error(e: &Error) {
    eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Stats { .. } => "stats",
            Command::Gen { .. } => "gen",
            Command::Sample { .. } => "sample",
            Command::Flow { .. } => "flow",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Crossval { .. } => "crossval",
            Command::Render { .. } => "render",
        }
    }
}

fn default_cache_root(cli: &Cli, corpus: &Path) -> PathBuf {
    cli.cache_root.clone().unwrap_or_else(|| corpus.join(".apebehave"))
}

fn load_config(cli: &Cli) -> Result<ConfigFile> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    if let Some(unknown) = file.section_names().find(|k| !SECTIONS.contains(k)) {
        return Err(Error::Config(format!("unknown config section [{unknown}]")));
    }
    Ok(file)
}

fn record(manifest: &mut RunManifest, config: &impl Serialize, inputs: &[&Path]) -> Result<()> {
    manifest.config = serde_json::to_value(config)?;
    manifest.inputs = inputs.iter().map(|p| p.to_path_buf()).collect();
    manifest.input_hash = hash_inputs(&manifest.inputs)?;
    Ok(())
}

fn execute(cli: &Cli, run_dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let file = load_config(cli)?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    match &cli.command {
        Command::Validate { corpus } => {
            record(manifest, &serde_json::Value::Null, &[corpus])?;
            let report = validate_corpus(corpus)?;
            let (text, json) = (run_dir.join("validation.txt"), run_dir.join("validation.json"));
            report.save(&text, &json)?;
            manifest.outputs = vec![text, json];
            print!("{}", report.to_text());
            if report.is_clean() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{} violations found", report.violations.len())))
            }
        }
        Command::Stats { corpus, sampler } => {
            let cfg: SamplerConfig = file.overlay("sampler", &sampler.config(SamplerConfig::default().crop_size))?;
            cfg.validate()?;
            record(manifest, &cfg, &[corpus])?;
            let report = validate_corpus(corpus)?;
            print!("{}", report.to_text());
            let corpus = Corpus::open(corpus)?;
            let samples = plan_samples(corpus.videos(), &cfg)?;
            println!("sequences\t{}", samples.len());
            for label in BehaviourLabel::ALL {
                let n = samples.iter().filter(|s| s.label == label).count();
                println!("sequences\t{label}\t{n}");
            }
            Ok(())
        }
        Command::Gen { gen_config, out } => {
            let text = fs::read_to_string(gen_config).map_err(|e| Error::io(gen_config, e))?;
            let cfg = file.overlay("gen", &GenConfig::from_toml_str(&text)?)?;
            cfg.validate()?;
            record(manifest, &cfg, &[gen_config])?;
            manifest.seeds.insert("gen".into(), cfg.seed);
            generate(&cfg, out)?;
            manifest.outputs = vec![out.clone()];
            println!("wrote {} videos to {}", cfg.num_videos, out.display());
            Ok(())
        }
        Command::Sample { corpus, sampler, out, split, split_args } => {
            let cfg: SamplerConfig = file.overlay("sampler", &sampler.config(SamplerConfig::default().crop_size))?;
            cfg.validate()?;
            let split_cfg = file.overlay("split", &SplitSettings { seed: split_args.split_seed, ratio: split_args.split_ratio })?;
            record(manifest, &serde_json::json!({ "sampler": cfg, "split": split_cfg, "subset": split }), &[corpus])?;
            manifest.seeds.insert("split".into(), split_cfg.seed);
            let corpus = Corpus::open(corpus)?;
            let ids = select_videos(&corpus, *split, &split_cfg)?;
            let samples = plan_samples(corpus.videos().iter().filter(|v| ids.contains(&v.video_id)), &cfg)?;
            SampleManifest { config: cfg, samples: samples.clone() }.save(out)?;
            manifest.outputs = vec![out.clone()];
            println!("{} sequences written to {}", samples.len(), out.display());
            Ok(())
        }
        Command::Flow { corpus, cache, flow } => {
            let dir = cache.clone().unwrap_or_else(|| default_cache_root(cli, corpus).join("flow"));
            let settings = file.overlay("flow", &flow_settings(flow, dir))?;
            settings.encoding.validate()?;
            record(manifest, &settings, &[corpus])?;
            let corpus = Corpus::open(corpus)?;
            let cache = FlowCache::new(&settings.cache, settings.params, settings.encoding)?;
            for video in corpus.videos() {
                for frame in &video.frames {
                    cache.encoded(&corpus, &video.video_id, frame.frame_index)?;
                }
                log::info!("flow ready for {}", video.video_id);
            }
            let (hits, misses) = cache.stats();
            manifest.outputs = vec![settings.cache.clone()];
            println!("flow cache {}: {hits} reused, {misses} computed", settings.cache.display());
            Ok(())
        }
        Command::Train { corpus, args, resume } => train(cli, &file, corpus, args, resume.as_deref(), run_dir, manifest),
        Command::Eval { checkpoint, corpus, split, split_args } => {
            let split_cfg = file.overlay("split", &SplitSettings { seed: split_args.split_seed, ratio: split_args.split_ratio })?;
            let ck = Checkpoint::load(checkpoint)?;
            record(manifest, &serde_json::json!({ "split": split_cfg, "subset": split, "checkpoint": ck.header }), &[checkpoint, corpus])?;
            manifest.seeds.insert("split".into(), split_cfg.seed);
            let cache = checkpoint_flow_cache(cli, &file, &ck, corpus)?;
            let corpus = Corpus::open(corpus)?;
            let ids = select_videos(&corpus, *split, &split_cfg)?;
            let report = evaluate(&ck, corpus.videos().iter().filter(|v| ids.contains(&v.video_id)), &corpus, &cache)?;
            report.save(run_dir, "eval")?;
            manifest.outputs = vec![run_dir.join("eval.json"), run_dir.join("eval.txt")];
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Crossval { corpus, folds, plan_only, args } => {
            let cache_root = default_cache_root(cli, corpus);
            let resolved = args.resolve(&cache_root).apply_file(&file)?;
            let cv = file.overlay("crossval", &CrossvalSettings { folds: *folds, seed: args.seed })?;
            record(manifest, &serde_json::json!({ "resolved": resolved, "crossval": cv }), &[corpus])?;
            manifest.seeds.insert("folds".into(), cv.seed);
            manifest.seeds.insert("train".into(), resolved.train.seed);
            let ids = Corpus::list_video_ids(corpus)?;
            if *plan_only {
                for f in make_folds(&ids, cv.folds, cv.seed)? {
                    println!("fold {}: {} train / {} test videos", f.fold, f.train.len(), f.test.len());
                }
                return Ok(());
            }
            let corpus = Corpus::open(corpus)?;
            let cache = FlowCache::new(&resolved.flow.cache, resolved.flow.params, resolved.flow.encoding)?;
            let samples = plan_samples(corpus.videos(), &resolved.sampler)?;
            let data = Dataset::build(samples, &corpus, &cache, resolved.model.crop_size)?;
            let opts = fit_options(&resolved, args, &cache)?;
            let report = cross_validate(&data, &ids, cv.folds, cv.seed, &resolved.model, &resolved.train, &opts)?;
            let path = run_dir.join("crossval.json");
            fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
            manifest.outputs = vec![path];
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Render { checkpoint, corpus, video_id, out } => {
            let ck = Checkpoint::load(checkpoint)?;
            record(manifest, &serde_json::json!({ "video_id": video_id, "checkpoint": ck.header }), &[checkpoint, corpus])?;
            let cache = checkpoint_flow_cache(cli, &file, &ck, corpus)?;
            let corpus = Corpus::open(corpus)?;
            let video = corpus
                .video(video_id)
                .ok_or_else(|| Error::Config(format!("no video `{video_id}` in {}", corpus.root().display())))?;
            let predictions = match evaluate(&ck, [video], &corpus, &cache) {
                Ok(report) => predictions_for_video(&report, video_id),
                Err(Error::EmptyEvaluation(msg)) => {
                    log::warn!("{msg}; rendering without predictions");
                    Vec::new()
                }
                Err(e) => return Err(e),
            };
            let summary = render_skim(video, &corpus, &predictions, out)?;
            manifest.outputs = vec![summary.directory.clone()];
            println!(
                "rendered {} frames to {} ({} skipped)",
                summary.written,
                summary.directory.display(),
                summary.skipped.len()
            );
            Ok(())
        }
    }
}

fn select_videos(corpus: &Corpus, split: SplitName, cfg: &SplitSettings) -> Result<Vec<String>> {
    let ids = corpus.video_ids();
    if split == SplitName::All {
        return Ok(ids);
    }
    let CorpusSplit { train, val, test, .. } = split_corpus(&ids, cfg.ratio, cfg.seed)?;
    Ok(match split {
        SplitName::Train => train,
        SplitName::Val => val,
        _ => test,
    })
}

/// Flow cache matching the flow settings a checkpoint was trained with.
fn checkpoint_flow_cache(cli: &Cli, file: &ConfigFile, ck: &Checkpoint, corpus: &Path) -> Result<FlowCache> {
    let base = FlowSettings {
        params: ck.header.flow.as_ref().map(|m| m.params).unwrap_or_default(),
        encoding: ck.header.flow.as_ref().map(|m| m.encoding).unwrap_or_default(),
        cache: default_cache_root(cli, corpus).join("flow"),
    };
    let s = file.overlay("flow", &base)?;
    FlowCache::new(&s.cache, s.params, s.encoding)
}

fn fit_options(resolved: &Resolved, args: &TrainArgs, cache: &FlowCache) -> Result<FitOptions> {
    let pretrained: Option<Vec<(String, Tensor)>> = if resolved.model.pretrained_backbone {
        Some(match &args.backbone_weights {
            Some(path) => read_weights(path)?,
            None => pretrained_backbone_cached(
                &PretrainConfig::new(resolved.model.backbone_width, resolved.model.crop_size),
                &resolved.paths.pretrain_cache,
            )?,
        })
    } else {
        None
    };
    Ok(FitOptions {
        pretrained,
        sampler: resolved.sampler,
        flow: Some(cache.meta().clone()),
        stop_at_train_top1: args.stop_at,
        ..FitOptions::default()
    })
}

fn train(
    cli: &Cli,
    file: &ConfigFile,
    corpus_dir: &Path,
    args: &TrainArgs,
    resume: Option<&Path>,
    run_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let resolved = args.resolve(&default_cache_root(cli, corpus_dir)).apply_file(file)?;
    let mut inputs = vec![corpus_dir];
    inputs.extend(resume);
    inputs.extend(args.backbone_weights.as_deref());
    record(manifest, &resolved, &inputs)?;
    manifest.seeds = BTreeMap::from([("split".into(), resolved.split.seed), ("train".into(), resolved.train.seed)]);

    let corpus = Corpus::open(corpus_dir)?;
    let split = split_corpus(&corpus.video_ids(), resolved.split.ratio, resolved.split.seed)?;
    let cache = FlowCache::new(&resolved.flow.cache, resolved.flow.params, resolved.flow.encoding)?;
    let build = |ids: &[String]| -> Result<Dataset> {
        let samples = plan_samples(corpus.videos().iter().filter(|v| ids.contains(&v.video_id)), &resolved.sampler)?;
        Dataset::build(samples, &corpus, &cache, resolved.model.crop_size)
    };
    let train_data = build(&split.train)?;
    let val_data = build(&split.val)?;
    log::info!("{} training and {} validation sequences", train_data.len(), val_data.len());

    let metrics = run_dir.join("metrics.jsonl");
    let mut opts = fit_options(&resolved, args, &cache)?;
    opts.log_path = Some(metrics.clone());
    if let Some(path) = resume {
        let ck = Checkpoint::load(path)?;
        if let Some(previous) = resume_log(path) {
            fs::copy(&previous, &metrics).map_err(|e| Error::io(&previous, e))?;
        }
        opts.resume = Some(ck);
    }
    let outcome = match fit(&resolved.model, &train_data, Some(&val_data), &resolved.train, &opts) {
        Ok(o) => o,
        Err(Error::Diverged { epoch, last_good }) => {
            if let Some(ck) = &last_good {
                let path = run_dir.join("last_good.safetensors");
                ck.save(&path)?;
                manifest.outputs.push(path);
            }
            return Err(Error::Diverged { epoch, last_good });
        }
        Err(e) => return Err(e),
    };
    let (best, last) = (run_dir.join("best.safetensors"), run_dir.join("last.safetensors"));
    outcome.best.save(&best)?;
    outcome.last.save(&last)?;
    manifest.outputs.extend([best.clone(), last, metrics]);
    for m in &outcome.history {
        println!(
            "epoch {:>3}  loss {:.4}  train top1 {:.3}  val top1 {}",
            m.epoch,
            m.loss,
            m.train_top1,
            m.val_top1.map_or("-".into(), |v| format!("{v:.3}"))
        );
    }
    println!("best checkpoint: {}", best.display());
    Ok(())
}

/// The metric log that sits next to a checkpoint from an earlier run.
fn resume_log(checkpoint: &Path) -> Option<PathBuf> {
    let log = checkpoint.parent()?.join("metrics.jsonl");
    log.is_file().then_some(log)
}
