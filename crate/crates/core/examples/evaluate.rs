//! Evaluates a checkpoint on the test videos of a corpus and prints top-1,
//! top-3 and the confusion matrix.
//!
//! cargo run --example evaluate -- [checkpoint] [corpus_dir]

use std::path::PathBuf;

use apebehave::annotation::{split_corpus, Corpus, SplitRatio};
use apebehave::eval::evaluate;
use apebehave::flow::FlowCache;
use apebehave::train::Checkpoint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let checkpoint = PathBuf::from(args.first().map_or("model.safetensors", String::as_str));
    let root = PathBuf::from(args.get(1).map_or("synthetic_corpus", String::as_str));
    let ck = Checkpoint::load(&checkpoint)?;
    let flow = ck.header.flow.clone().ok_or("checkpoint records no flow settings")?;
    let cache = FlowCache::new(root.join(".apebehave/flow"), flow.params, flow.encoding)?;
    let corpus = Corpus::open(&root)?;
    let split = split_corpus(&corpus.video_ids(), SplitRatio::default(), 0)?;
    let test = corpus.videos().iter().filter(|v| split.test.contains(&v.video_id));
    let report = evaluate(&ck, test, &corpus, &cache)?;
    print!("{}", report.to_table());
    Ok(())
}
