//! Estimates dense flow between consecutive frames of one generated video,
//! writes the greyscale encodings as PNGs and prints the mean motion inside
//! each subject box per behaviour.
//!
//! cargo run --example optical_flow -- [out_dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use apebehave::flow::{compute_dense_flow, encode_flow_greyscale, FlowEncodingConfig, FlowParams};
use apebehave::synth::{generate_video, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "flow_frames".into()));
    std::fs::create_dir_all(&out)?;
    let cfg = GenConfig { num_videos: 9, ..GenConfig::default() };
    let (params, encoding) = (FlowParams::default(), FlowEncodingConfig::default());
    let mut motion: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for index in [0, 2, 4] {
        let video = generate_video(&cfg, index)?;
        for (f, pair) in video.frames.windows(2).enumerate() {
            let field = compute_dense_flow(&pair[0], &pair[1], &params)?;
            if f % 40 == 0 {
                let path = out.join(format!("{}_{f:04}.png", video.meta.video_id));
                encode_flow_greyscale(&field, &encoding).save(&path)?;
            }
            let mags: Vec<f32> = field.magnitude().collect();
            for inst in &video.annotation.frames[f].instances {
                let b = inst.bbox;
                let entry = motion.entry(inst.behaviour.as_str()).or_default();
                for y in b.ymin..b.ymax {
                    for x in b.xmin..b.xmax {
                        entry.0 += mags[(y * field.width + x) as usize] as f64;
                        entry.1 += 1;
                    }
                }
            }
        }
    }
    println!("mean flow magnitude inside the subject box (px/frame)");
    for (behaviour, (sum, n)) in motion {
        println!("{behaviour:>20} {:.3}", sum / n as f64);
    }
    println!("encoded samples in {}", out.display());
    Ok(())
}
