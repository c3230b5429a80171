//! Draws a checkpoint's predictions onto every frame of one video: white
//! boxes for correct predictions, red boxes with the true behaviour for
//! wrong ones.
//!
//! cargo run --example render_skim -- [checkpoint] [corpus_dir] [video_id] [out_dir]

use std::path::PathBuf;

use apebehave::annotation::Corpus;
use apebehave::eval::{evaluate, predictions_for_video, render_skim};
use apebehave::flow::FlowCache;
use apebehave::train::Checkpoint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let checkpoint = PathBuf::from(args.first().map_or("model.safetensors", String::as_str));
    let root = PathBuf::from(args.get(1).map_or("synthetic_corpus", String::as_str));
    let corpus = Corpus::open(&root)?;
    let video_id = args.get(2).cloned().or_else(|| corpus.video_ids().into_iter().next()).ok_or("empty corpus")?;
    let out = PathBuf::from(args.get(3).map_or("render", String::as_str));

    let ck = Checkpoint::load(&checkpoint)?;
    let flow = ck.header.flow.clone().ok_or("checkpoint records no flow settings")?;
    let cache = FlowCache::new(root.join(".apebehave/flow"), flow.params, flow.encoding)?;
    let video = corpus.video(&video_id).ok_or("no such video")?;
    let report = evaluate(&ck, [video], &corpus, &cache)?;
    let predictions = predictions_for_video(&report, &video_id);
    let wrong = predictions.iter().filter(|p| !p.is_correct()).count();
    let summary = render_skim(video, &corpus, &predictions, &out)?;
    println!(
        "{} predictions ({wrong} wrong); {} frames written to {}",
        predictions.len(),
        summary.written,
        summary.directory.display()
    );
    Ok(())
}
