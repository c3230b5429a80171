//! Generic-image pretraining for the backbone.
//!
//! Large natural-image corpora are out of reach here, so the backbone is
//! pretrained on a procedurally generated still-image classification task:
//! ten geometric shape and texture classes plus one class per subject body
//! plan, rendered as single frames on random backgrounds (natural-image
//! corpora likewise contain the species being studied). Stills carry no
//! behaviour label and no motion. The classification head is discarded.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{read_tensors, write_tensors};
use super::{cross_entropy_with_grad, Sgd};
use crate::error::Result;
use crate::model::{Normalization, ResNet18};
use crate::nn::{global_avg_pool, global_avg_pool_backward, zero_grad, Linear, Mode, Module, Param, Tensor};
use crate::sampler::shuffled_batches;
use crate::synth::{subject_still, STILL_KINDS};

pub const SHAPE_CLASSES: usize = 10;
pub const PRETRAIN_CLASSES: usize = SHAPE_CLASSES + STILL_KINDS.len();
/// Bumped whenever the generated images change, so stale caches are not reused.
const DATASET_VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub backbone_width: usize,
    pub crop_size: usize,
    pub images_per_class: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl PretrainConfig {
    pub fn new(backbone_width: usize, crop_size: usize) -> Self {
        Self {
            backbone_width,
            crop_size,
            images_per_class: 300,
            epochs: 12,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 1234,
        }
    }

    fn file_name(&self) -> String {
        format!(
            "backbone_v{}_w{}_c{}_n{}_e{}_s{}.safetensors",
            DATASET_VERSION,
            self.backbone_width, self.crop_size, self.images_per_class, self.epochs, self.seed
        )
    }
}

fn random_colour(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)]
}

/// One image of shape class `class` (below [`SHAPE_CLASSES`]).
fn shape_image(class: usize, size: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let s = size as f32;
    let bg = random_colour(rng);
    let mut fg = random_colour(rng);
    while (0..3).map(|c| (fg[c] - bg[c]).abs()).sum::<f32>() < 150.0 {
        fg = random_colour(rng);
    }
    let (cx, cy) = (rng.gen_range(0.3 * s..0.7 * s), rng.gen_range(0.3 * s..0.7 * s));
    let r = rng.gen_range(0.18 * s..0.32 * s);
    let period = rng.gen_range(3.0..7.0f32);
    let phase = rng.gen_range(0.0..period);
    let noise = rng.gen_range(0.0..30.0f32);
    let salt: u32 = rng.gen();
    RgbImage::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
        let (dx, dy) = (fx - cx, fy - cy);
        let d = dx.hypot(dy);
        let inside = match class {
            0 => d < r,                                          // disc
            1 => dx.abs() < r && dy.abs() < r,                   // square
            2 => dy < r && dy > -r && dx.abs() < (r - dy) * 0.5, // triangle
            3 => d < r && d > 0.6 * r,                           // ring
            4 => (dx.abs() < 0.3 * r || dy.abs() < 0.3 * r) && d < 1.3 * r, // cross
            5 => ((fy + phase) / period) as u32 % 2 == 0,        // horizontal stripes
            6 => ((fx + phase) / period) as u32 % 2 == 0,        // vertical stripes
            7 => ((fx + fy + phase) / period) as u32 % 2 == 0,   // diagonal stripes
            8 => (((fx + phase) / period) as u32 + ((fy + phase) / period) as u32) % 2 == 0, // checks
            _ => (dx - 0.5 * r).hypot(dy) < 0.5 * r || (dx + 0.5 * r).hypot(dy) < 0.5 * r, // two blobs
        };
        let base = if inside { fg } else { bg };
        let h = (x.wrapping_mul(73_856_093) ^ y.wrapping_mul(19_349_663) ^ salt).wrapping_mul(2_654_435_761);
        let n = ((h >> 16) % 1000) as f32 / 1000.0 - 0.5;
        Rgb(base.map(|c| (c + n * noise).clamp(0.0, 255.0) as u8))
    })
}

/// Balanced labelled images, `per_class` of each of [`PRETRAIN_CLASSES`]:
/// shapes first, then subject stills.
pub fn pretrain_dataset(size: u32, per_class: usize, seed: u64) -> Vec<(RgbImage, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..per_class)
        .flat_map(|_| 0..PRETRAIN_CLASSES)
        .map(|c| {
            let img = if c < SHAPE_CLASSES {
                shape_image(c, size, &mut rng)
            } else {
                subject_still(c - SHAPE_CLASSES, size, &mut rng)
            };
            (img, c)
        })
        .collect()
}

fn to_input(images: &[&RgbImage], norm: &Normalization) -> Tensor {
    let s = images[0].width() as usize;
    let mut data = Vec::with_capacity(images.len() * s * s * 3);
    for img in images {
        for (k, &p) in img.as_raw().iter().enumerate() {
            let c = k % 3;
            data.push((p as f32 / 255.0 - norm.mean[c]) / norm.std[c]);
        }
    }
    Tensor::from_vec(&[images.len(), s, s, 3], data)
}

struct Pretrainer {
    backbone: ResNet18,
    head: Linear,
}

impl Module for Pretrainer {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.backbone.visit(prefix, f);
        self.head.visit("pretrain_head", f);
    }
}

/// Trains a backbone on the shape task and returns its weights, named as
/// in [`ResNet18::visit`] with an empty prefix. Also returns the final
/// training accuracy.
pub fn pretrain_backbone(cfg: &PretrainConfig) -> Result<(Vec<(String, Tensor)>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Pretrainer {
        backbone: ResNet18::new(cfg.backbone_width, &mut rng),
        head: Linear::new(8 * cfg.backbone_width, PRETRAIN_CLASSES, &mut rng),
    };
    let data = pretrain_dataset(cfg.crop_size as u32, cfg.images_per_class, cfg.seed ^ 0x5eed);
    let norm = Normalization::default();
    let mut optim = Sgd::new(cfg.learning_rate as f32, cfg.momentum as f32, cfg.weight_decay as f32);
    let mut accuracy = 0.0;
    for epoch in 0..cfg.epochs {
        let (mut correct, mut seen) = (0usize, 0usize);
        for idx in shuffled_batches(data.len(), cfg.batch_size, cfg.seed, epoch as u64) {
            let images: Vec<&RgbImage> = idx.iter().map(|&i| &data[i].0).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| data[i].1).collect();
            let maps = net.backbone.forward(&to_input(&images, &norm), Mode::Train);
            let map_shape = maps.shape().to_vec();
            let logits = net.head.forward(&global_avg_pool(&maps), Mode::Train);
            let (_, dlogits) = cross_entropy_with_grad(&logits, &targets)?;
            for (i, &t) in targets.iter().enumerate() {
                let row = &logits.data()[i * PRETRAIN_CLASSES..(i + 1) * PRETRAIN_CLASSES];
                if crate::eval::rank_of(row, t) == 0 {
                    correct += 1;
                }
            }
            seen += targets.len();
            zero_grad(&mut net);
            let dfeat = net.head.backward(&dlogits);
            net.backbone.backward(&global_avg_pool_backward(&dfeat, &map_shape));
            optim.step(&mut net);
        }
        accuracy = correct as f64 / seen as f64;
        log::info!("pretrain epoch {} accuracy {accuracy:.3}", epoch + 1);
    }
    let mut weights = Vec::new();
    net.backbone.visit("", &mut |n, p| weights.push((n.to_string(), p.value.clone())));
    Ok((weights, accuracy))
}

/// [`pretrain_backbone`], memoised as a file in `cache_dir`.
pub fn pretrained_backbone_cached(cfg: &PretrainConfig, cache_dir: &Path) -> Result<Vec<(String, Tensor)>> {
    let path = cache_dir.join(cfg.file_name());
    if path.exists() {
        if let Ok((Some(header), tensors)) = read_tensors(&path) {
            if serde_json::from_str::<PretrainConfig>(&header).ok().as_ref() == Some(cfg) {
                return Ok(tensors);
            }
        }
    }
    let (weights, _) = pretrain_backbone(cfg)?;
    write_tensors(&path, weights.iter().map(|(n, t)| (n.clone(), t)), serde_json::to_string(cfg)?)?;
    Ok(weights)
}
