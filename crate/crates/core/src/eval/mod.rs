//! Accuracy metrics, evaluation runs, cross-validation and rendered skims.
//!
//! Accuracy is counted per sequence sample, not per video or frame.

pub(crate) mod font;
mod metrics;
mod render;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use font::{glyph, is_set, text_width, ADVANCE, GLYPH_H, GLYPH_W};
pub use metrics::{rank_of, ranking, topk_accuracy, EvalReport, SampleRecord};
pub use render::{
    draw_box, draw_label, label_origin, label_text, predictions_for_video, render_frame, render_skim,
    SkimPrediction, SkimSummary, CORRECT_COLOUR, TEXT_COLOUR, UNSCORED_COLOUR, WRONG_COLOUR,
};

use crate::annotation::VideoAnnotation;
use crate::error::{Error, Result};
use crate::flow::FlowCache;
use crate::model::{ModelConfig, RecognitionModel};
use crate::sampler::{plan_samples, FrameSource};
use crate::train::{fit, predict, Checkpoint, Dataset, EpochMetrics, FitOptions, TrainConfig};

const EVAL_BATCH: usize = 16;

/// Report for a model over an already materialised dataset.
pub fn evaluate_dataset(model: &mut RecognitionModel, data: &Dataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyEvaluation("no qualifying sequences to evaluate".into()));
    }
    let logits = predict(model, data, EVAL_BATCH)?;
    EvalReport::from_logits(&data.samples, &logits)
}

/// Evaluates a checkpoint on every qualifying sequence of `videos`, using
/// the sampler settings stored in the checkpoint.
pub fn evaluate<'a>(
    checkpoint: &Checkpoint,
    videos: impl IntoIterator<Item = &'a VideoAnnotation>,
    frames: &dyn FrameSource,
    cache: &FlowCache,
) -> Result<EvalReport> {
    let mut model = checkpoint.restore_model()?;
    let samples = plan_samples(videos, &checkpoint.header.sampler)?;
    if samples.is_empty() {
        return Err(Error::EmptyEvaluation("the split has no sequences above the duration threshold".into()));
    }
    let data = Dataset::build(samples, frames, cache, model.config().crop_size)?;
    evaluate_dataset(&mut model, &data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// `k` folds whose test sets partition the videos into near-equal parts
/// (sizes differ by at most one); each fold trains on the rest.
pub fn make_folds(video_ids: &[String], k: usize, seed: u64) -> Result<Vec<FoldSpec>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs at least 2 folds, got {k}")));
    }
    if video_ids.len() < k {
        return Err(Error::Config(format!("{} videos cannot fill {k} folds", video_ids.len())));
    }
    let mut ids = video_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != video_ids.len() {
        return Err(Error::Config("duplicate video ids".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut start = 0;
    Ok((0..k)
        .map(|fold| {
            let len = base + usize::from(fold < extra);
            let mut test = ids[start..start + len].to_vec();
            start += len;
            test.sort();
            let mut train: Vec<String> = ids.iter().filter(|v| !test.contains(v)).cloned().collect();
            train.sort();
            FoldSpec { fold, train, test }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub spec: FoldSpec,
    pub report: EvalReport,
    pub history: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    pub mean_top1: f64,
    pub mean_top3: f64,
    pub mean_macro_top1: f64,
    pub mean_macro_top3: f64,
}

impl CrossValReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<6} {:>7} {:>7} {:>10} {:>10}\n", "fold", "train", "test", "Top1 (%)", "Top3 (%)");
        for f in &self.folds {
            out.push_str(&format!(
                "{:<6} {:>7} {:>7} {:>10.2} {:>10.2}\n",
                f.spec.fold,
                f.spec.train.len(),
                f.spec.test.len(),
                100.0 * f.report.top1,
                100.0 * f.report.top3
            ));
        }
        out.push_str(&format!("{:<22} {:>10.2} {:>10.2}\n", "mean", 100.0 * self.mean_top1, 100.0 * self.mean_top3));
        out
    }
}

/// Trains one model per fold on the fold's training videos (no validation
/// set) and evaluates the final weights on its test videos.
pub fn cross_validate(
    data: &Dataset,
    video_ids: &[String],
    k: usize,
    seed: u64,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    opts: &FitOptions,
) -> Result<CrossValReport> {
    let specs = make_folds(video_ids, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for spec in specs {
        log::info!("fold {}: {} train / {} test videos", spec.fold, spec.train.len(), spec.test.len());
        let train = data.for_videos(&spec.train);
        let test = data.for_videos(&spec.test);
        let cfg = TrainConfig { seed: train_cfg.seed.wrapping_add(spec.fold as u64), ..train_cfg.clone() };
        let fold_opts = FitOptions { log_path: None, resume: None, ..opts.clone() };
        let outcome = fit(model_cfg, &train, None, &cfg, &fold_opts)?;
        let mut model = outcome.last.restore_model()?;
        let report = evaluate_dataset(&mut model, &test)?;
        folds.push(FoldResult { spec, report, history: outcome.history });
    }
    let mean = |f: fn(&EvalReport) -> f64| folds.iter().map(|r| f(&r.report)).sum::<f64>() / folds.len() as f64;
    Ok(CrossValReport {
        mean_top1: mean(|r| r.top1),
        mean_top3: mean(|r| r.top3),
        mean_macro_top1: mean(|r| r.macro_top1),
        mean_macro_top3: mean(|r| r.macro_top3),
        folds,
    })
}
