//! The two-stream recognition network.
//!
//! Both streams run a ResNet-18-topology backbone over every frame of a
//! sequence (RGB crops on the spatial stream, greyscale flow crops replicated
//! to three channels on the temporal stream). The optimised variant appends a
//! single-layer LSTM to each stream, concatenates the two final hidden states
//! (spatial first) and classifies the result with a two-layer MLP. The
//! baseline variant replaces the LSTMs with either a temporal mean of the
//! per-frame features (late fusion) or a 3-D convolution over the stacked,
//! channel-concatenated feature maps (convolutional fusion).

mod backbone;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backbone::ResNet18;
pub use params::{
    count_parameters, lstm_params, resnet18_backbone_params, resnet18_imagenet_params,
    vgg16_imagenet_params,
};

use crate::behaviour::NUM_BEHAVIOURS;
use crate::error::{Error, Result};
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, param_join as join, relu_backward_inplace,
    relu_inplace, BatchNorm, Conv3d, Linear, Lstm, Mode, Module, Param, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Optimised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Late,
    Convolutional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Spatial,
    Temporal,
}

/// Per-channel input normalisation, `(x - mean) / std` on `[0, 1]` pixels.
/// The temporal stream reuses the spatial constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub fusion: Fusion,
    pub sequence_length: usize,
    pub num_classes: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub classifier_hidden: usize,
    pub pretrained_backbone: bool,
    /// Base width of the backbone; 64 gives the standard 512-wide features.
    pub backbone_width: usize,
    pub crop_size: usize,
    pub normalization: Normalization,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Optimised,
            fusion: Fusion::Late,
            sequence_length: 20,
            num_classes: NUM_BEHAVIOURS,
            lstm_layers: 1,
            lstm_hidden: 512,
            classifier_hidden: 256,
            pretrained_backbone: true,
            backbone_width: 64,
            crop_size: 224,
            normalization: Normalization::default(),
        }
    }
}

impl ModelConfig {
    /// Same topology at reduced width and input size, for single-core runs.
    pub fn desk(variant: Variant, fusion: Fusion) -> Self {
        Self {
            variant,
            fusion,
            backbone_width: 8,
            lstm_hidden: 64,
            crop_size: 32,
            ..Self::default()
        }
    }

    pub fn feature_dim(&self) -> usize {
        8 * self.backbone_width
    }

    /// Width of the vector entering the classifier.
    pub fn fused_dim(&self) -> usize {
        match (self.variant, self.fusion) {
            (_, Fusion::Late) => 2 * self.feature_dim(),
            (_, Fusion::Convolutional) => self.feature_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Optimised && self.fusion == Fusion::Convolutional {
            return Err(Error::Config(
                "convolutional fusion needs spatial feature maps; the optimised model's LSTM heads emit vectors, use late fusion".into(),
            ));
        }
        if self.lstm_layers != 1 {
            return Err(Error::Config(format!("lstm_layers must be 1, got {}", self.lstm_layers)));
        }
        if self.lstm_hidden != self.feature_dim() {
            return Err(Error::Config(format!(
                "lstm_hidden ({}) must equal the per-stream feature width ({})",
                self.lstm_hidden,
                self.feature_dim()
            )));
        }
        if self.sequence_length == 0 || self.backbone_width == 0 || self.crop_size == 0 {
            return Err(Error::Config("sequence length, width and crop size must be positive".into()));
        }
        if self.num_classes < 2 || self.classifier_hidden == 0 {
            return Err(Error::Config("need at least two classes and a non-empty hidden layer".into()));
        }
        Ok(())
    }
}

/// A batch of paired stream inputs, each `[B, T, S, S, 3]`, already normalised.
#[derive(Debug, Clone)]
pub struct StreamInput {
    pub rgb: Tensor,
    pub flow: Tensor,
}

impl StreamInput {
    pub fn batch_size(&self) -> usize {
        self.rgb.dim(0)
    }
}

/// Exact concatenation of two equal-width vectors, spatial stream first.
pub fn fuse_late(spatial: &[f32], temporal: &[f32]) -> Result<Vec<f32>> {
    if spatial.len() != temporal.len() {
        return Err(Error::Contract(format!(
            "late fusion expects equal widths, got {} and {}",
            spatial.len(),
            temporal.len()
        )));
    }
    let mut out = Vec::with_capacity(spatial.len() * 2);
    out.extend_from_slice(spatial);
    out.extend_from_slice(temporal);
    Ok(out)
}

#[derive(Debug, Clone)]
struct Classifier {
    fc1: Linear,
    fc2: Linear,
    hidden: Option<Tensor>,
}

impl Classifier {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut h = self.fc1.forward(x, mode);
        relu_inplace(&mut h);
        let out = self.fc2.forward(&h, mode);
        if mode == Mode::Train {
            self.hidden = Some(h);
        }
        out
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let h = self.hidden.take().expect("classifier backward without train forward");
        let mut dh = self.fc2.backward(dy);
        relu_backward_inplace(&mut dh, &h);
        self.fc1.backward(&dh)
    }
}

#[derive(Debug, Clone)]
struct ConvFusionBlock {
    conv: Conv3d,
    bn: BatchNorm,
    cache: Option<Tensor>,
}

#[derive(Debug, Clone)]
enum Head {
    Lstm { spatial: Lstm, temporal: Lstm },
    MeanPool,
    ConvFusion(ConvFusionBlock),
}

#[derive(Debug, Clone)]
struct ForwardCache {
    batch: usize,
    steps: usize,
    map_shape: Vec<usize>,
}

/// The full two-stream network. Not shareable between concurrent trainers;
/// clone it for parallel inference.
#[derive(Debug, Clone)]
pub struct RecognitionModel {
    cfg: ModelConfig,
    spatial: ResNet18,
    temporal: ResNet18,
    head: Head,
    classifier: Classifier,
    cache: Option<ForwardCache>,
}

impl RecognitionModel {
    /// Randomly initialised model; deterministic in `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = cfg.backbone_width;
        let f = cfg.feature_dim();
        let spatial = ResNet18::new(w, &mut rng);
        let temporal = ResNet18::new(w, &mut rng);
        let head = match (cfg.variant, cfg.fusion) {
            (Variant::Optimised, _) => Head::Lstm {
                spatial: Lstm::new(f, cfg.lstm_hidden, &mut rng),
                temporal: Lstm::new(f, cfg.lstm_hidden, &mut rng),
            },
            (Variant::Baseline, Fusion::Late) => Head::MeanPool,
            (Variant::Baseline, Fusion::Convolutional) => Head::ConvFusion(ConvFusionBlock {
                conv: Conv3d::new(2 * f, f, 3, &mut rng),
                bn: BatchNorm::new(f),
                cache: None,
            }),
        };
        let classifier = Classifier {
            fc1: Linear::new(cfg.fused_dim(), cfg.classifier_hidden, &mut rng),
            fc2: Linear::new(cfg.classifier_hidden, cfg.num_classes, &mut rng),
            hidden: None,
        };
        Ok(Self {
            cfg,
            spatial,
            temporal,
            head,
            classifier,
            cache: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn backbone(&mut self, stream: Stream) -> &mut ResNet18 {
        match stream {
            Stream::Spatial => &mut self.spatial,
            Stream::Temporal => &mut self.temporal,
        }
    }

    /// Copies the same backbone weights into both streams.
    pub fn load_backbone(&mut self, weights: &[(String, Tensor)]) -> Result<()> {
        for stream in [Stream::Spatial, Stream::Temporal] {
            let mut missing = Vec::new();
            let mut loaded = 0;
            self.backbone(stream).visit("", &mut |name, p| {
                match weights.iter().find(|(n, _)| n == name) {
                    Some((_, t)) if t.shape() == p.value.shape() => {
                        p.value = t.clone();
                        loaded += 1;
                    }
                    _ => missing.push(name.to_string()),
                }
            });
            if !missing.is_empty() {
                return Err(Error::Checkpoint(format!(
                    "pretrained backbone lacks or mis-shapes {} tensors (first: {})",
                    missing.len(),
                    missing[0]
                )));
            }
            log::debug!("loaded {loaded} backbone tensors into {stream:?} stream");
        }
        Ok(())
    }

    pub fn trainable_parameters(&mut self) -> usize {
        crate::nn::trainable_count(self)
    }

    fn check_frames(&self, frames: &Tensor) -> Result<()> {
        let s = frames.shape();
        let crop = self.cfg.crop_size;
        if s.len() != 4 || s[1] != crop || s[2] != crop || s[3] != 3 {
            return Err(Error::Contract(format!(
                "frames must be [n, {crop}, {crop}, 3], got {s:?}"
            )));
        }
        Ok(())
    }

    /// One globally pooled feature vector per frame: `[n, S, S, 3] -> [n, F]`.
    pub fn per_frame_features(&mut self, stream: Stream, frames: &Tensor) -> Result<Tensor> {
        self.check_frames(frames)?;
        let maps = self.backbone(stream).forward(frames, Mode::Eval);
        Ok(global_avg_pool(&maps))
    }

    /// Final hidden state of the stream's LSTM over `[T, F]` features.
    pub fn lstm_head(&mut self, stream: Stream, features: &Tensor) -> Result<Tensor> {
        let f = self.cfg.feature_dim();
        let Head::Lstm { spatial, temporal } = &mut self.head else {
            return Err(Error::Config("only the optimised variant has LSTM heads".into()));
        };
        let s = features.shape();
        if s.len() != 2 || s[0] == 0 || s[1] != f {
            return Err(Error::Contract(format!(
                "lstm head expects a non-empty [T, {f}] sequence, got {s:?}"
            )));
        }
        let x = features.clone().reshape(&[1, s[0], f]);
        let lstm = match stream {
            Stream::Spatial => spatial,
            Stream::Temporal => temporal,
        };
        Ok(lstm.forward(&x, Mode::Eval).reshape(&[f]))
    }

    /// Two-layer classifier over `[k, fused_dim]` rows, returning `[k, classes]`.
    pub fn classify(&mut self, fused: &Tensor) -> Result<Tensor> {
        let want = self.cfg.fused_dim();
        if fused.shape().len() != 2 || fused.channels() != want {
            return Err(Error::Contract(format!(
                "classifier expects [k, {want}], got {:?}",
                fused.shape()
            )));
        }
        Ok(self.classifier.forward(fused, Mode::Eval))
    }

    /// Full forward pass; returns `[B, num_classes]` logits.
    pub fn forward(&mut self, input: &StreamInput, mode: Mode) -> Result<Tensor> {
        let s = input.rgb.shape().to_vec();
        let (t, crop) = (self.cfg.sequence_length, self.cfg.crop_size);
        if s.len() != 5 || s[1] != t || s[2] != crop || s[3] != crop || s[4] != 3 {
            return Err(Error::Contract(format!(
                "rgb input must be [B, {t}, {crop}, {crop}, 3], got {s:?}"
            )));
        }
        if input.flow.shape() != s.as_slice() {
            return Err(Error::Contract(format!(
                "flow input {:?} does not match rgb {s:?}",
                input.flow.shape()
            )));
        }
        let b = s[0];
        let frames = [b * t, crop, crop, 3];
        let maps_s = self.spatial.forward(&input.rgb.clone().reshape(&frames), mode);
        let maps_t = self.temporal.forward(&input.flow.clone().reshape(&frames), mode);
        let map_shape = maps_s.shape().to_vec();
        let f = self.cfg.feature_dim();

        let fused = match &mut self.head {
            Head::Lstm { spatial, temporal } => {
                let fs = global_avg_pool(&maps_s).reshape(&[b, t, f]);
                let ft = global_avg_pool(&maps_t).reshape(&[b, t, f]);
                let hs = spatial.forward(&fs, mode);
                let ht = temporal.forward(&ft, mode);
                Tensor::concat_last(&hs, &ht)
            }
            Head::MeanPool => {
                let fs = temporal_mean(&global_avg_pool(&maps_s), b, t);
                let ft = temporal_mean(&global_avg_pool(&maps_t), b, t);
                Tensor::concat_last(&fs, &ft)
            }
            Head::ConvFusion(block) => {
                let (h, w) = (map_shape[1], map_shape[2]);
                let stacked = Tensor::concat_last(&maps_s, &maps_t).reshape(&[b, t, h, w, 2 * f]);
                let mut y = block.bn.forward(&block.conv.forward(&stacked, mode), mode);
                relu_inplace(&mut y);
                let pooled = global_avg_pool(&y);
                if mode == Mode::Train {
                    block.cache = Some(y);
                }
                pooled
            }
        };
        let logits = self.classifier.forward(&fused, mode);
        if mode == Mode::Train {
            self.cache = Some(ForwardCache {
                batch: b,
                steps: t,
                map_shape,
            });
        }
        Ok(logits)
    }

    /// Backpropagates `d loss / d logits` from the last train-mode forward.
    pub fn backward(&mut self, dlogits: &Tensor) {
        let cache = self.cache.take().expect("model backward without train forward");
        let (b, t) = (cache.batch, cache.steps);
        let f = self.cfg.feature_dim();
        let dfused = self.classifier.backward(dlogits);
        let (dmaps_s, dmaps_t) = match &mut self.head {
            Head::Lstm { spatial, temporal } => {
                let (dhs, dht) = dfused.split_last(f);
                let dfs = spatial.backward(&dhs).reshape(&[b * t, f]);
                let dft = temporal.backward(&dht).reshape(&[b * t, f]);
                (
                    global_avg_pool_backward(&dfs, &cache.map_shape),
                    global_avg_pool_backward(&dft, &cache.map_shape),
                )
            }
            Head::MeanPool => {
                let (dfs, dft) = dfused.split_last(f);
                (
                    global_avg_pool_backward(&temporal_mean_backward(&dfs, t), &cache.map_shape),
                    global_avg_pool_backward(&temporal_mean_backward(&dft, t), &cache.map_shape),
                )
            }
            Head::ConvFusion(block) => {
                let y = block.cache.take().expect("fusion backward without train forward");
                let mut dy = global_avg_pool_backward(&dfused, y.shape());
                relu_backward_inplace(&mut dy, &y);
                let dstacked = block.conv.backward(&block.bn.backward(&dy));
                let (h, w) = (cache.map_shape[1], cache.map_shape[2]);
                let (ds, dt) = dstacked.reshape(&[b * t, h, w, 2 * f]).split_last(f);
                (ds, dt)
            }
        };
        self.spatial.backward(&dmaps_s);
        self.temporal.backward(&dmaps_t);
    }
}

/// `[B * T, F] -> [B, F]`.
fn temporal_mean(x: &Tensor, b: usize, t: usize) -> Tensor {
    let f = x.channels();
    let mut out = vec![0.0f32; b * f];
    for bi in 0..b {
        for step in 0..t {
            let row = &x.data()[(bi * t + step) * f..(bi * t + step + 1) * f];
            for (o, v) in out[bi * f..(bi + 1) * f].iter_mut().zip(row) {
                *o += v;
            }
        }
        out[bi * f..(bi + 1) * f].iter_mut().for_each(|v| *v /= t as f32);
    }
    Tensor::from_vec(&[b, f], out)
}

fn temporal_mean_backward(dy: &Tensor, t: usize) -> Tensor {
    let (b, f) = (dy.dim(0), dy.dim(1));
    let mut out = Vec::with_capacity(b * t * f);
    for bi in 0..b {
        let row: Vec<f32> = dy.data()[bi * f..(bi + 1) * f].iter().map(|v| v / t as f32).collect();
        for _ in 0..t {
            out.extend_from_slice(&row);
        }
    }
    Tensor::from_vec(&[b * t, f], out)
}

impl Module for RecognitionModel {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.spatial.visit(&join(prefix, "spatial"), f);
        self.temporal.visit(&join(prefix, "temporal"), f);
        match &mut self.head {
            Head::Lstm { spatial, temporal } => {
                spatial.visit(&join(prefix, "lstm_spatial"), f);
                temporal.visit(&join(prefix, "lstm_temporal"), f);
            }
            Head::MeanPool => {}
            Head::ConvFusion(block) => {
                block.conv.visit(&join(prefix, "fusion.conv"), f);
                block.bn.visit(&join(prefix, "fusion.bn"), f);
            }
        }
        self.classifier.fc1.visit(&join(prefix, "classifier.fc1"), f);
        self.classifier.fc2.visit(&join(prefix, "classifier.fc2"), f);
    }
}
