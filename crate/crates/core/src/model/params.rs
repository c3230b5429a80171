//! Closed-form trainable-parameter counts, computed from layer shapes alone.

use super::{Fusion, ModelConfig, Variant};

fn conv(cin: usize, cout: usize, k: usize) -> usize {
    k * k * cin * cout
}

fn batch_norm(c: usize) -> usize {
    2 * c
}

fn linear(input: usize, output: usize) -> usize {
    input * output + output
}

/// ResNet-18 feature extractor (no classification layer) at base width `w`.
pub fn resnet18_backbone_params(w: usize) -> usize {
    let mut total = conv(3, w, 7) + batch_norm(w);
    let mut cin = w;
    for stage in 0..4 {
        let cout = w << stage;
        total += conv(cin, cout, 3) + batch_norm(cout) + conv(cout, cout, 3) + batch_norm(cout);
        if stage > 0 {
            total += conv(cin, cout, 1) + batch_norm(cout);
        }
        total += 2 * (conv(cout, cout, 3) + batch_norm(cout));
        cin = cout;
    }
    total
}

/// ResNet-18 with its 1000-way ImageNet classifier.
pub fn resnet18_imagenet_params() -> usize {
    resnet18_backbone_params(64) + linear(512, 1000)
}

/// VGG-16 (configuration D, biased convolutions, no batch norm) with its
/// 1000-way ImageNet classifier.
pub fn vgg16_imagenet_params() -> usize {
    const PLAN: [usize; 13] = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512];
    let mut cin = 3;
    let mut total = 0;
    for cout in PLAN {
        total += conv(cin, cout, 3) + cout;
        cin = cout;
    }
    total + linear(512 * 7 * 7, 4096) + linear(4096, 4096) + linear(4096, 1000)
}

/// Single-layer LSTM with one bias vector.
pub fn lstm_params(input: usize, hidden: usize) -> usize {
    4 * hidden * (input + hidden) + 4 * hidden
}

/// Exact trainable-parameter count of the model `cfg` describes.
pub fn count_parameters(cfg: &ModelConfig) -> usize {
    let f = cfg.feature_dim();
    let head = match (cfg.variant, cfg.fusion) {
        (Variant::Optimised, _) => 2 * lstm_params(f, cfg.lstm_hidden),
        (Variant::Baseline, Fusion::Late) => 0,
        (Variant::Baseline, Fusion::Convolutional) => 27 * 2 * f * f + batch_norm(f),
    };
    2 * resnet18_backbone_params(cfg.backbone_width)
        + head
        + linear(cfg.fused_dim(), cfg.classifier_hidden)
        + linear(cfg.classifier_hidden, cfg.num_classes)
}
