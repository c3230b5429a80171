//! Reference implementations shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use std::collections::HashMap;

use apebehave::annotation::{BoundingBox, Tracklet, TrackletEntry};
use apebehave::behaviour::BehaviourLabel;
use apebehave::sampler::{extract_sequences, find_behaviour_runs, SamplerConfig};
use rand::Rng;

/// A tracklet of random same-behaviour segments separated by occasional
/// gaps. Only three behaviours are drawn so that adjacent segments often
/// share a label and merge into one long run.
pub fn random_tracklet(rng: &mut impl Rng, max_frames: u32) -> Tracklet {
    let mut entries = Vec::new();
    let mut frame = rng.gen_range(0..50);
    while frame < max_frames {
        let behaviour = BehaviourLabel::ALL[rng.gen_range(0..3)];
        let len = rng.gen_range(1..=120);
        for _ in 0..len {
            if frame >= max_frames {
                break;
            }
            let x = rng.gen_range(0..100);
            entries.push(TrackletEntry {
                frame_index: frame,
                behaviour,
                bbox: BoundingBox::new(x, 0, x + 10, 10).unwrap(),
            });
            frame += 1;
        }
        if rng.gen_bool(0.25) {
            frame += rng.gen_range(1..6);
        }
    }
    Tracklet { video_id: "v".into(), ape_id: rng.gen_range(0..8), entries }
}

pub fn random_sampler_config(rng: &mut impl Rng) -> SamplerConfig {
    let sequence_length = rng.gen_range(1..=30);
    SamplerConfig {
        sequence_length,
        sampling_stride: rng.gen_range(1..=30),
        duration_threshold: rng.gen_range(sequence_length..=100),
        crop_size: 8,
    }
}

/// `(start_frame, label, boxes)` of every window, found by testing each
/// possible start frame on its own: the window must be covered by one
/// behaviour, the surrounding maximal stretch must reach the threshold,
/// and the start must sit a whole number of strides after that stretch
/// begins.
pub fn brute_force_windows(t: &Tracklet, cfg: &SamplerConfig) -> Vec<(u32, BehaviourLabel, Vec<BoundingBox>)> {
    let at: HashMap<u32, (BehaviourLabel, BoundingBox)> =
        t.entries.iter().map(|e| (e.frame_index, (e.behaviour, e.bbox))).collect();
    let same = |f: i64, b: BehaviourLabel| f >= 0 && at.get(&(f as u32)).is_some_and(|x| x.0 == b);
    let mut out = Vec::new();
    let Some(last) = t.entries.iter().map(|e| e.frame_index).max() else {
        return out;
    };
    for s in 0..=last as i64 {
        let Some(&(b, _)) = at.get(&(s as u32)) else { continue };
        if !(s..s + cfg.sequence_length as i64).all(|f| same(f, b)) {
            continue;
        }
        let mut first = s;
        while same(first - 1, b) {
            first -= 1;
        }
        let mut end = s;
        while same(end + 1, b) {
            end += 1;
        }
        if ((end - first + 1) as usize) < cfg.duration_threshold {
            continue;
        }
        if (s - first) as usize % cfg.sampling_stride != 0 {
            continue;
        }
        let boxes = (s..s + cfg.sequence_length as i64).map(|f| at[&(f as u32)].1).collect();
        out.push((s as u32, b, boxes));
    }
    out
}

/// The library's answer in the same shape as [`brute_force_windows`].
pub fn library_windows(t: &Tracklet, cfg: &SamplerConfig) -> Vec<(u32, BehaviourLabel, Vec<BoundingBox>)> {
    let mut out: Vec<_> = find_behaviour_runs(t, cfg.duration_threshold)
        .iter()
        .flat_map(|run| extract_sequences(run, cfg).unwrap())
        .map(|s| (s.start_frame, s.label, s.bboxes))
        .collect();
    out.sort_by_key(|w| w.0);
    out
}

/// Renders a wrong prediction onto frame 10 of a generated video and checks
/// every pixel the overlay should touch: a red one-pixel box outline and a
/// red label "ID: predicted (true: X)" with black glyphs, placed above the
/// box and kept inside the frame. All other pixels must be unchanged.
pub fn check_wrong_prediction_render() -> Result<(), String> {
    use apebehave::eval::{glyph, render_frame, SkimPrediction, ADVANCE, GLYPH_H, GLYPH_W};
    use apebehave::synth::{generate_video, GenConfig};

    let cfg = GenConfig { num_videos: 1, frames_per_video: 80, width: 320, height: 96, ..GenConfig::default() };
    let video = generate_video(&cfg, 0).map_err(|e| e.to_string())?;
    let frame = &video.annotation.frames[10];
    let inst = frame.instances.first().ok_or("no subject in the fixture frame")?;
    let truth = inst.behaviour;
    let predicted = BehaviourLabel::ALL[(truth.index() + 4) % 9];
    let pred = SkimPrediction { ape_id: inst.ape_id, start_frame: 0, end_frame: 19, predicted, truth };
    let input = &video.frames[10];
    let out = render_frame(input, frame, &[pred]);

    let red = [255u8, 0, 0];
    let text = format!("{}: {} (true: {})", inst.ape_id, predicted.as_str(), truth.as_str());
    let b = inst.bbox;
    let (label_w, label_h) = (text.chars().count() as i64 * ADVANCE as i64 + 1, GLYPH_H as i64 + 2);
    let lx = (b.xmin as i64).min(cfg.width as i64 - label_w).max(0);
    let ly = if b.ymin as i64 >= label_h { b.ymin as i64 - label_h } else { b.ymin as i64 };

    let mut expected: HashMap<(i64, i64), [u8; 3]> = HashMap::new();
    for x in b.xmin..b.xmax {
        for y in [b.ymin, b.ymax - 1] {
            expected.insert((x as i64, y as i64), red);
        }
    }
    for y in b.ymin..b.ymax {
        for x in [b.xmin, b.xmax - 1] {
            expected.insert((x as i64, y as i64), red);
        }
    }
    for dy in 0..label_h {
        for dx in 0..label_w {
            expected.insert((lx + dx, ly + dy), red);
        }
    }
    for (i, ch) in text.chars().enumerate() {
        let rows = glyph(ch);
        for gy in 0..GLYPH_H {
            for gx in 0..GLYPH_W {
                if rows[gy as usize] >> (GLYPH_W - 1 - gx) & 1 == 1 {
                    expected.insert((lx + 1 + (i as i64) * ADVANCE as i64 + gx as i64, ly + 1 + gy as i64), [0, 0, 0]);
                }
            }
        }
    }
    let mut wrong = 0;
    for (x, y, px) in out.enumerate_pixels() {
        let want = expected.get(&(x as i64, y as i64)).copied().unwrap_or(input.get_pixel(x, y).0);
        if px.0 != want {
            wrong += 1;
        }
    }
    if wrong > 0 {
        return Err(format!("{wrong} pixels differ from the expected overlay for label `{text}`"));
    }
    if lx + label_w > cfg.width as i64 {
        return Err("label leaves the frame".into());
    }
    Ok(())
}
