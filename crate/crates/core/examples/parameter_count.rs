//! Prints trainable-parameter counts of both architectures at full and desk
//! scale, and the ResNet-18 to VGG-16 size ratio behind the backbone choice.
//!
//! cargo run --example parameter_count

use apebehave::model::{count_parameters, resnet18_imagenet_params, vgg16_imagenet_params, Fusion, ModelConfig, Variant};

fn main() {
    let resnet = resnet18_imagenet_params();
    let vgg = vgg16_imagenet_params();
    println!("ResNet-18 {resnet}  VGG-16 {vgg}  ratio {:.4}", resnet as f64 / vgg as f64);
    for (variant, fusion) in [
        (Variant::Optimised, Fusion::Late),
        (Variant::Baseline, Fusion::Late),
        (Variant::Baseline, Fusion::Convolutional),
    ] {
        let full = ModelConfig { variant, fusion, ..ModelConfig::default() };
        let desk = ModelConfig::desk(variant, fusion);
        println!(
            "{:<10} {:<14} full {:>11}  desk {:>9}",
            format!("{variant:?}"),
            format!("{fusion:?}"),
            count_parameters(&full),
            count_parameters(&desk)
        );
    }
}
