//! Plans fixed-length training sequences from a corpus and writes them as
//! a JSON-lines manifest.
//!
//! cargo run --example sample_sequences -- [corpus_dir] [seq_len] [stride] [threshold]

use apebehave::annotation::Corpus;
use apebehave::behaviour::BehaviourLabel;
use apebehave::sampler::{plan_samples, SampleManifest, SamplerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let root = args.first().cloned().unwrap_or_else(|| "synthetic_corpus".into());
    let num = |i: usize, default: usize| args.get(i).map_or(Ok(default), |v| v.parse());
    let cfg = SamplerConfig {
        sequence_length: num(1, 20)?,
        sampling_stride: num(2, 20)?,
        duration_threshold: num(3, 72)?,
        ..SamplerConfig::default()
    };
    cfg.validate()?;
    let corpus = Corpus::open(&root)?;
    let samples = plan_samples(corpus.videos(), &cfg)?;
    for label in BehaviourLabel::ALL {
        println!("{:>20} {:>5}", label.as_str(), samples.iter().filter(|s| s.label == label).count());
    }
    let out = std::path::Path::new("sequences.jsonl");
    SampleManifest { config: cfg, samples: samples.clone() }.save(out)?;
    println!("{} sequences written to {}", samples.len(), out.display());
    Ok(())
}
