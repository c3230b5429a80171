use std::collections::HashMap;

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Pixel, RgbImage};
use serde::{Deserialize, Serialize};

use super::SequenceSample;
use crate::annotation::{BoundingBox, Corpus};
use crate::error::{Error, Result};

/// Anything that can hand out decoded RGB frames of a video.
pub trait FrameSource {
    fn frame(&self, video_id: &str, index: u32) -> Result<RgbImage>;
    /// Number of frames in the video; frames are indexed `0..n`.
    fn num_frames(&self, video_id: &str) -> Result<u32>;
}

impl FrameSource for Corpus {
    fn frame(&self, video_id: &str, index: u32) -> Result<RgbImage> {
        self.load_frame(video_id, index)
    }

    fn num_frames(&self, video_id: &str) -> Result<u32> {
        self.video(video_id)
            .map(|v| v.num_frames() as u32)
            .ok_or_else(|| Error::Validation(format!("unknown video {video_id}")))
    }
}

/// Frames held in memory, mainly for tests and generated data.
#[derive(Debug, Default, Clone)]
pub struct InMemoryFrames {
    videos: HashMap<String, Vec<RgbImage>>,
}

impl InMemoryFrames {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, video_id: impl Into<String>, frames: Vec<RgbImage>) {
        self.videos.insert(video_id.into(), frames);
    }
}

impl FrameSource for InMemoryFrames {
    fn frame(&self, video_id: &str, index: u32) -> Result<RgbImage> {
        self.videos
            .get(video_id)
            .and_then(|v| v.get(index as usize))
            .cloned()
            .ok_or_else(|| Error::MissingFrame {
                video_id: video_id.to_string(),
                frame: index,
                message: "not in memory".into(),
            })
    }

    fn num_frames(&self, video_id: &str) -> Result<u32> {
        self.videos
            .get(video_id)
            .map(|v| v.len() as u32)
            .ok_or_else(|| Error::Validation(format!("unknown video {video_id}")))
    }
}

/// A stack of square patches, frame-major, channels last, 8-bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropSequence {
    pub len: usize,
    pub size: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl CropSequence {
    pub fn shape(&self) -> [usize; 4] {
        [self.len, self.size, self.size, self.channels]
    }

    /// Values scaled to `[0, 1]`.
    pub fn to_unit_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32 / 255.0).collect()
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.size * self.size * self.channels;
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Where each patch actually came from once boxes were clamped to the image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropMetadata {
    pub crop_size: usize,
    pub requested: Vec<BoundingBox>,
    pub clamped: Vec<BoundingBox>,
}

/// Clamps `bbox` to a `width` x `height` image, keeping at least one pixel.
pub(crate) fn clamp_bbox(bbox: &BoundingBox, width: u32, height: u32) -> BoundingBox {
    let xmin = bbox.xmin.min(width - 1);
    let ymin = bbox.ymin.min(height - 1);
    BoundingBox {
        xmin,
        ymin,
        xmax: bbox.xmax.clamp(xmin + 1, width),
        ymax: bbox.ymax.clamp(ymin + 1, height),
    }
}

/// Crops the (clamped) box and resizes it to `size` x `size` with bilinear
/// filtering; aspect ratio is not preserved.
pub fn crop_resize<P>(
    img: &ImageBuffer<P, Vec<u8>>,
    bbox: &BoundingBox,
    size: u32,
) -> (ImageBuffer<P, Vec<u8>>, BoundingBox)
where
    P: Pixel<Subpixel = u8> + 'static,
{
    let b = clamp_bbox(bbox, img.width(), img.height());
    let patch = imageops::crop_imm(img, b.xmin, b.ymin, b.width(), b.height()).to_image();
    (imageops::resize(&patch, size, size, FilterType::Triangle), b)
}

/// Crops every frame of `sample` to its box, RGB, `crop_size` square.
pub fn materialize(
    sample: &SequenceSample,
    frames: &dyn FrameSource,
    crop_size: usize,
) -> Result<(CropSequence, CropMetadata)> {
    let mut pixels = Vec::with_capacity(sample.sequence_length * crop_size * crop_size * 3);
    let mut clamped = Vec::with_capacity(sample.sequence_length);
    for (frame, bbox) in sample.frames().zip(&sample.bboxes) {
        let img = frames.frame(&sample.video_id, frame)?;
        let (patch, b) = crop_resize(&img, bbox, crop_size as u32);
        pixels.extend_from_slice(patch.as_raw());
        clamped.push(b);
    }
    Ok((
        CropSequence {
            len: sample.sequence_length,
            size: crop_size,
            channels: 3,
            pixels,
        },
        CropMetadata {
            crop_size,
            requested: sample.bboxes.clone(),
            clamped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviour::BehaviourLabel;

    fn source(frames: usize) -> InMemoryFrames {
        let mut src = InMemoryFrames::new();
        src.insert(
            "v",
            (0..frames)
                .map(|i| RgbImage::from_fn(64, 48, |x, y| image::Rgb([x as u8, y as u8, i as u8])))
                .collect(),
        );
        src
    }

    fn sample(bbox: BoundingBox) -> SequenceSample {
        SequenceSample {
            video_id: "v".into(),
            ape_id: 0,
            start_frame: 2,
            sequence_length: 20,
            label: BehaviourLabel::Walking,
            bboxes: vec![bbox; 20],
        }
    }

    #[test]
    fn shape_contract() {
        let (seq, meta) = materialize(&sample(BoundingBox::new(4, 4, 40, 30).unwrap()), &source(30), 32).unwrap();
        assert_eq!(seq.shape(), [20, 32, 32, 3]);
        assert_eq!(seq.pixels.len(), 20 * 32 * 32 * 3);
        assert_eq!(meta.clamped.len(), 20);
        // blue channel records the frame index
        assert_eq!(seq.frame(0)[2], 2);
        assert_eq!(seq.frame(19)[2], 21);
        assert!(seq.to_unit_f32().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn boxes_past_the_border_are_clamped() {
        let (seq, meta) = materialize(&sample(BoundingBox::new(50, 40, 90, 80).unwrap()), &source(30), 16).unwrap();
        assert_eq!(seq.shape(), [20, 16, 16, 3]);
        assert_eq!(meta.clamped[0], BoundingBox::new(50, 40, 64, 48).unwrap());
        let (_, meta) = materialize(&sample(BoundingBox::new(100, 100, 120, 120).unwrap()), &source(30), 16).unwrap();
        assert_eq!(meta.clamped[0], BoundingBox::new(63, 47, 64, 48).unwrap());
    }

    #[test]
    fn one_pixel_box_is_upsampled() {
        let (seq, _) = materialize(&sample(BoundingBox::new(10, 20, 11, 21).unwrap()), &source(30), 24).unwrap();
        assert_eq!(seq.shape(), [20, 24, 24, 3]);
        assert!(seq.frame(0).chunks(3).all(|p| p[0] == 10 && p[1] == 20));
    }

    #[test]
    fn missing_frame_names_the_frame() {
        let err = materialize(&sample(BoundingBox::new(0, 0, 8, 8).unwrap()), &source(10), 8).unwrap_err();
        assert!(matches!(err, Error::MissingFrame { frame: 10, .. }), "{err}");
    }
}
