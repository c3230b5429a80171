//! Pretrains the desk-scale ResNet-18 backbone on generated stills and
//! saves the weights for `apebehave train --backbone-weights`.
//!
//! cargo run --example pretrain_backbone -- [out.safetensors]

use std::path::Path;

use apebehave::train::{pretrain_backbone, write_weights, PretrainConfig, PRETRAIN_CLASSES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "backbone.safetensors".into());
    let cfg = PretrainConfig::new(8, 32);
    let (weights, accuracy) = pretrain_backbone(&cfg)?;
    println!("{PRETRAIN_CLASSES}-way pretraining accuracy {accuracy:.3}");
    write_weights(Path::new(&out), &weights)?;
    println!("wrote {} tensors to {out}", weights.len());
    Ok(())
}
