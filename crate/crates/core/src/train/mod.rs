//! Losses, the SGD optimiser, checkpoints and the training loop.

mod checkpoint;
mod data;
mod loss;
mod optim;
mod pretrain;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checkpoint::{read_weights, write_weights, Checkpoint, CheckpointHeader, FORMAT_VERSION};
pub use data::Dataset;
pub use loss::{cross_entropy, cross_entropy_with_grad, focal_loss, focal_loss_with_grad, LossKind};
pub use optim::Sgd;
pub use pretrain::{pretrain_backbone, pretrain_dataset, pretrained_backbone_cached, PretrainConfig, PRETRAIN_CLASSES};

use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};
use crate::eval::topk_accuracy;
use crate::flow::FlowCacheMeta;
use crate::model::{ModelConfig, RecognitionModel};
use crate::nn::{zero_grad, Mode, Tensor};
use crate::sampler::{shuffled_batches, BalancedBatches, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// L2 penalty, applied as weight decay to weights only.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub loss: LossKind,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub balanced: bool,
    /// Classes every balanced batch must contain.
    pub classes: Vec<BehaviourLabel>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            momentum: 0.9,
            weight_decay: 0.01,
            batch_size: 9,
            loss: LossKind::Focal,
            focal_alpha: 1.0,
            focal_gamma: 1.0,
            epochs: 30,
            seed: 0,
            balanced: true,
            classes: BehaviourLabel::ALL.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.focal_alpha > 0.0) || !(self.focal_gamma >= 0.0) {
            return fail("focal alpha must be positive and gamma non-negative".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch size and epochs must be positive".into());
        }
        if self.balanced && (self.classes.is_empty() || self.batch_size % self.classes.len() != 0) {
            return fail(format!(
                "batch size {} is not divisible by the {} balanced classes",
                self.batch_size,
                self.classes.len()
            ));
        }
        Ok(())
    }

    pub fn loss_and_grad(&self, logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
        match self.loss {
            LossKind::Focal => focal_loss_with_grad(logits, targets, self.focal_alpha, self.focal_gamma),
            LossKind::CrossEntropy => cross_entropy_with_grad(logits, targets),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    /// Running accuracy over the epoch's training batches.
    pub train_top1: f64,
    pub val_top1: Option<f64>,
    pub val_top3: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Backbone weights copied into both streams before training, required
    /// when the model config asks for a pretrained backbone.
    pub pretrained: Option<Vec<(String, Tensor)>>,
    pub resume: Option<Checkpoint>,
    /// JSON-lines metric log, one object per epoch.
    pub log_path: Option<PathBuf>,
    pub sampler: SamplerConfig,
    pub flow: Option<FlowCacheMeta>,
    /// Stop early once the running train accuracy reaches this value.
    pub stop_at_train_top1: Option<f64>,
    pub eval_batch: usize,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Highest validation top-1 (earliest on ties); the last epoch when
    /// there is no validation set.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<EpochMetrics>,
}

/// A freshly initialised model, with pretrained backbones when configured.
pub fn initial_model(cfg: &ModelConfig, seed: u64, pretrained: Option<&[(String, Tensor)]>) -> Result<RecognitionModel> {
    let mut model = RecognitionModel::new(cfg.clone(), seed)?;
    if cfg.pretrained_backbone {
        let weights = pretrained.ok_or_else(|| {
            Error::Config("pretrained_backbone is set but no backbone weights were supplied".into())
        })?;
        model.load_backbone(weights)?;
    }
    Ok(model)
}

/// Logits `[N, classes]` for every sample, in dataset order.
pub fn predict(model: &mut RecognitionModel, data: &Dataset, batch: usize) -> Result<Tensor> {
    let classes = model.config().num_classes;
    let norm = model.config().normalization;
    let mut out = Vec::with_capacity(data.len() * classes);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (input, _) = data.batch(chunk, &norm);
        out.extend_from_slice(model.forward(&input, Mode::Eval)?.data());
    }
    Ok(Tensor::from_vec(&[data.len(), classes], out))
}

/// Trains on `train`, validating on `val` after every epoch.
pub fn fit(
    model_cfg: &ModelConfig,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let (mut model, mut optim, mut history, start) = match &opts.resume {
        Some(ck) => {
            ck.check_compatible(model_cfg)?;
            (ck.restore_model()?, ck.restore_optimizer(), ck.header.history.clone(), ck.header.epoch)
        }
        None => (
            initial_model(model_cfg, cfg.seed, opts.pretrained.as_deref())?,
            Sgd::new(cfg.learning_rate as f32, cfg.momentum as f32, cfg.weight_decay as f32),
            Vec::new(),
            0,
        ),
    };
    let labels = train.labels();
    let balanced = if cfg.balanced {
        Some(BalancedBatches::new(&labels, &cfg.classes, cfg.batch_size, cfg.seed)?)
    } else {
        None
    };
    if let Some(path) = &opts.log_path {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        if opts.resume.is_none() {
            fs::write(path, "").map_err(|e| Error::io(path, e))?;
        }
    }
    let norm = model_cfg.normalization;
    let eval_batch = if opts.eval_batch == 0 { cfg.batch_size } else { opts.eval_batch };
    let capture = |model: &mut RecognitionModel, optim: &Sgd, epoch: usize, history: &[EpochMetrics]| {
        Checkpoint::capture(model, optim, cfg, &opts.sampler, opts.flow.as_ref(), epoch, history)
    };
    let mut last_good = capture(&mut model, &optim, start, &history);
    let mut best: Option<(f64, Checkpoint)> = opts.resume.as_ref().and_then(|ck| {
        ck.header.history.iter().filter_map(|m| m.val_top1).fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.max(v))))
            .map(|v| (v, ck.clone()))
    });

    for epoch in start..cfg.epochs {
        let timer = Instant::now();
        let batches = match &balanced {
            Some(b) => b.epoch(epoch as u64),
            None => shuffled_batches(train.len(), cfg.batch_size, cfg.seed, epoch as u64),
        };
        let (mut loss_sum, mut seen, mut correct) = (0.0, 0usize, 0.0);
        for idx in &batches {
            let (input, targets) = train.batch(idx, &norm);
            let logits = model.forward(&input, Mode::Train)?;
            let loss = if logits.all_finite() {
                cfg.loss_and_grad(&logits, &targets).ok()
            } else {
                None
            };
            let Some((loss, dlogits)) = loss.filter(|(l, _)| l.is_finite()) else {
                return Err(Error::Diverged { epoch: epoch + 1, last_good: Some(Box::new(last_good)) });
            };
            correct += topk_accuracy(&logits, &targets, 1)? * targets.len() as f64;
            loss_sum += loss * targets.len() as f64;
            seen += targets.len();
            zero_grad(&mut model);
            model.backward(&dlogits);
            optim.step(&mut model);
        }
        let (val_top1, val_top3) = match val.filter(|v| !v.is_empty()) {
            Some(v) => {
                let logits = predict(&mut model, v, eval_batch)?;
                let targets: Vec<usize> = v.labels().iter().map(|l| l.index()).collect();
                (Some(topk_accuracy(&logits, &targets, 1)?), Some(topk_accuracy(&logits, &targets, 3.min(model_cfg.num_classes))?))
            }
            None => (None, None),
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            loss: loss_sum / seen as f64,
            train_top1: correct / seen as f64,
            val_top1,
            val_top3,
            seconds: timer.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} loss {:.4} train top1 {:.3} val top1 {}",
            metrics.epoch,
            metrics.loss,
            metrics.train_top1,
            metrics.val_top1.map_or("-".into(), |v| format!("{v:.3}"))
        );
        if let Some(path) = &opts.log_path {
            let mut f = OpenOptions::new().append(true).create(true).open(path).map_err(|e| Error::io(path, e))?;
            writeln!(f, "{}", serde_json::to_string(&metrics)?).map_err(|e| Error::io(path, e))?;
        }
        let stop = opts.stop_at_train_top1.is_some_and(|t| metrics.train_top1 >= t);
        history.push(metrics);
        last_good = capture(&mut model, &optim, epoch + 1, &history);
        if let Some(v) = val_top1 {
            if best.as_ref().map_or(true, |(b, _)| v > *b) {
                best = Some((v, last_good.clone()));
            }
        }
        if stop {
            break;
        }
    }
    let best = match best {
        Some((_, ck)) => ck,
        None => last_good.clone(),
    };
    Ok(FitOutcome { best, last: last_good, history })
}

#[cfg(test)]
mod tests;
