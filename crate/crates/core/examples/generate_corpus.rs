//! Writes a small synthetic corpus and prints its behaviour histogram.
//!
//! cargo run --example generate_corpus -- [out_dir] [num_videos]

use std::path::PathBuf;

use apebehave::annotation::validate_corpus;
use apebehave::synth::{generate, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_corpus".into()));
    let num_videos = args.next().map(|n| n.parse()).transpose()?.unwrap_or(18);
    let cfg = GenConfig { num_videos, ..GenConfig::default() };
    generate(&cfg, &out)?;
    let report = validate_corpus(&out)?;
    println!("wrote {} videos to {}", report.videos.len(), out.display());
    for (behaviour, frames) in &report.behaviour_histogram {
        println!("{behaviour:>20} {frames:>6} annotated frames");
    }
    println!("violations: {}", report.violations.len());
    Ok(())
}
