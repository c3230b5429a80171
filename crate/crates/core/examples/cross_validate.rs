//! Runs k-fold cross-validation over the videos of a corpus with the
//! desk-scale model.
//!
//! cargo run --example cross_validate -- [corpus_dir] [folds] [epochs]

use std::path::PathBuf;

use apebehave::annotation::Corpus;
use apebehave::eval::cross_validate;
use apebehave::flow::{FlowCache, FlowEncodingConfig, FlowParams};
use apebehave::model::{Fusion, ModelConfig, Variant};
use apebehave::sampler::{plan_samples, SamplerConfig};
use apebehave::train::{pretrained_backbone_cached, Dataset, FitOptions, PretrainConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let root = PathBuf::from(args.first().map_or("synthetic_corpus", String::as_str));
    let folds = args.get(1).map_or(Ok(4), |v| v.parse())?;
    let epochs = args.get(2).map_or(Ok(5), |v| v.parse())?;

    let corpus = Corpus::open(&root)?;
    let model_cfg = ModelConfig::desk(Variant::Optimised, Fusion::Late);
    let sampler = SamplerConfig { crop_size: model_cfg.crop_size, ..SamplerConfig::default() };
    let cache = FlowCache::new(root.join(".apebehave/flow"), FlowParams::default(), FlowEncodingConfig::default())?;
    let data = Dataset::build(plan_samples(corpus.videos(), &sampler)?, &corpus, &cache, model_cfg.crop_size)?;
    let backbone = pretrained_backbone_cached(&PretrainConfig::new(model_cfg.backbone_width, model_cfg.crop_size), &root.join(".apebehave/pretrain"))?;
    let train_cfg = TrainConfig { learning_rate: 1e-2, epochs, ..TrainConfig::default() };
    let opts = FitOptions { pretrained: Some(backbone), sampler, ..FitOptions::default() };
    let report = cross_validate(&data, &corpus.video_ids(), folds, 0, &model_cfg, &train_cfg, &opts)?;
    print!("{}", report.to_table());
    Ok(())
}
