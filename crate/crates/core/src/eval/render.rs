use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::font::{is_set, text_width, ADVANCE, GLYPH_H, GLYPH_W};
use super::EvalReport;
use crate::annotation::{BoundingBox, FrameAnnotation, VideoAnnotation};
use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};
use crate::sampler::FrameSource;

pub const CORRECT_COLOUR: Rgb<u8> = Rgb([255, 255, 255]);
pub const WRONG_COLOUR: Rgb<u8> = Rgb([255, 0, 0]);
/// Apes not covered by any scored sequence.
pub const UNSCORED_COLOUR: Rgb<u8> = Rgb([150, 150, 150]);
pub const TEXT_COLOUR: Rgb<u8> = Rgb([0, 0, 0]);

/// A prediction for one ape over an inclusive frame range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkimPrediction {
    pub ape_id: u32,
    pub start_frame: u32,
    pub end_frame: u32,
    pub predicted: BehaviourLabel,
    pub truth: BehaviourLabel,
}

impl SkimPrediction {
    pub fn is_correct(&self) -> bool {
        self.predicted == self.truth
    }

    pub fn covers(&self, ape_id: u32, frame: u32) -> bool {
        self.ape_id == ape_id && (self.start_frame..=self.end_frame).contains(&frame)
    }
}

/// The predictions of `report` that belong to `video_id`.
pub fn predictions_for_video(report: &EvalReport, video_id: &str) -> Vec<SkimPrediction> {
    report
        .samples
        .iter()
        .filter(|r| r.video_id == video_id)
        .map(|r| SkimPrediction {
            ape_id: r.ape_id,
            start_frame: r.start_frame,
            end_frame: r.start_frame + r.sequence_length as u32 - 1,
            predicted: r.predicted(),
            truth: r.truth,
        })
        .collect()
}

/// `"ID: behaviour"`, with `" (true: X)"` appended when wrong.
pub fn label_text(ape_id: u32, predicted: BehaviourLabel, truth: BehaviourLabel) -> String {
    if predicted == truth {
        format!("{ape_id}: {predicted}")
    } else {
        format!("{ape_id}: {predicted} (true: {truth})")
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// One-pixel rectangle outline on the box's outermost pixels.
pub fn draw_box(img: &mut RgbImage, b: &BoundingBox, colour: Rgb<u8>) {
    let (x0, y0, x1, y1) = (b.xmin as i64, b.ymin as i64, b.xmax as i64 - 1, b.ymax as i64 - 1);
    for x in x0..=x1 {
        put(img, x, y0, colour);
        put(img, x, y1, colour);
    }
    for y in y0..=y1 {
        put(img, x0, y, colour);
        put(img, x1, y, colour);
    }
}

/// Text on a filled background whose top-left corner is `(x, y)`; the
/// background extends one pixel around the glyphs.
pub fn draw_label(img: &mut RgbImage, x: i64, y: i64, text: &str, background: Rgb<u8>) {
    let (w, h) = (text_width(text) as i64 + 2, GLYPH_H as i64 + 2);
    for dy in 0..h {
        for dx in 0..w {
            put(img, x + dx, y + dy, background);
        }
    }
    for (i, ch) in text.chars().enumerate() {
        for gy in 0..GLYPH_H {
            for gx in 0..GLYPH_W {
                if is_set(ch, gx, gy) {
                    put(img, x + 1 + (i as u32 * ADVANCE + gx) as i64, y + 1 + gy as i64, TEXT_COLOUR);
                }
            }
        }
    }
}

/// Where a box's label goes: just above the box, or inside its top edge
/// when there is no room above. Labels near the right border shift left
/// so that `text` stays inside an image `image_width` pixels wide.
pub fn label_origin(b: &BoundingBox, text: &str, image_width: u32) -> (i64, i64) {
    let h = GLYPH_H as i64 + 2;
    let y = if b.ymin as i64 >= h { b.ymin as i64 - h } else { b.ymin as i64 };
    let overflow = b.xmin as i64 + text_width(text) as i64 + 2 - image_width as i64;
    (b.xmin as i64 - overflow.max(0).min(b.xmin as i64), y)
}

/// Draws every annotated ape of one frame onto a copy of `img`.
pub fn render_frame(img: &RgbImage, annotation: &FrameAnnotation, predictions: &[SkimPrediction]) -> RgbImage {
    let mut out = img.clone();
    for inst in &annotation.instances {
        let pred = predictions.iter().find(|p| p.covers(inst.ape_id, annotation.frame_index));
        let (colour, text) = match pred {
            Some(p) if p.is_correct() => (CORRECT_COLOUR, label_text(inst.ape_id, p.predicted, p.truth)),
            Some(p) => (WRONG_COLOUR, label_text(inst.ape_id, p.predicted, p.truth)),
            None => (UNSCORED_COLOUR, format!("{}: {}", inst.ape_id, inst.behaviour)),
        };
        draw_box(&mut out, &inst.bbox, colour);
        let (x, y) = label_origin(&inst.bbox, &text, out.width());
        draw_label(&mut out, x, y, &text, colour);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkimSummary {
    pub directory: PathBuf,
    pub written: usize,
    /// `(frame, reason)` for frames that could not be decoded.
    pub skipped: Vec<(u32, String)>,
}

/// Writes `<out_dir>/skim/<video_id>/frame_%06d.png` for every frame.
pub fn render_skim(
    video: &VideoAnnotation,
    frames: &dyn FrameSource,
    predictions: &[SkimPrediction],
    out_dir: &Path,
) -> Result<SkimSummary> {
    let dir = out_dir.join("skim").join(&video.video_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut summary = SkimSummary { directory: dir.clone(), ..Default::default() };
    for ann in &video.frames {
        let img = match frames.frame(&video.video_id, ann.frame_index) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping frame {}: {e}", ann.frame_index);
                summary.skipped.push((ann.frame_index, e.to_string()));
                continue;
            }
        };
        let path = dir.join(format!("frame_{:06}.png", ann.frame_index));
        render_frame(&img, ann, predictions)
            .save(&path)
            .map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
        summary.written += 1;
    }
    Ok(summary)
}
