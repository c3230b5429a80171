use std::collections::HashSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use super::{compute_dense_flow, encode_flow_greyscale, FlowEncodingConfig, FlowField, FlowParams, ALGORITHM};
use crate::error::{Error, Result};
use crate::sampler::{crop_resize, CropSequence, FrameSource, SequenceSample};

/// Contents of `<cache_root>/<video_id>/flow.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCacheMeta {
    pub algorithm: String,
    pub params: FlowParams,
    pub encoding: FlowEncodingConfig,
}

/// Encoded flow frames stored as `<cache_root>/<video_id>/<frame_index>.png`.
///
/// Flow for frame `i` is estimated from frames `i` and `i + 1`; the last
/// frame of a video has no successor and reuses the flow of the frame
/// before it. A video directory whose metadata does not match the current
/// parameters is cleared and recomputed.
#[derive(Debug)]
pub struct FlowCache {
    root: PathBuf,
    meta: FlowCacheMeta,
    checked: Mutex<HashSet<String>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl FlowCache {
    pub fn new(root: impl Into<PathBuf>, params: FlowParams, encoding: FlowEncodingConfig) -> Result<Self> {
        encoding.validate()?;
        Ok(Self {
            root: root.into(),
            meta: FlowCacheMeta { algorithm: ALGORITHM.into(), params, encoding },
            checked: Mutex::new(HashSet::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &FlowCacheMeta {
        &self.meta
    }

    pub fn frame_path(&self, video_id: &str, frame: u32) -> PathBuf {
        self.root.join(video_id).join(format!("{frame}.png"))
    }

    /// `(hits, misses)` since construction.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }

    fn prepare_video(&self, video_id: &str) -> Result<()> {
        let mut checked = self.checked.lock().unwrap();
        if checked.contains(video_id) {
            return Ok(());
        }
        let dir = self.root.join(video_id);
        let meta_path = dir.join("flow.json");
        let current = match fs::read_to_string(&meta_path) {
            Ok(text) => serde_json::from_str::<FlowCacheMeta>(&text).ok(),
            Err(_) => None,
        };
        if current.as_ref() != Some(&self.meta) {
            if dir.exists() {
                for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
                    let path = entry.map_err(|e| Error::io(&dir, e))?.path();
                    if path.extension().is_some_and(|x| x == "png") {
                        fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                    }
                }
            }
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            atomic_write(&meta_path, serde_json::to_string_pretty(&self.meta)?.as_bytes())?;
        }
        checked.insert(video_id.to_string());
        Ok(())
    }

    /// Encoded flow image for one frame, from the cache when present.
    pub fn encoded(&self, source: &dyn FrameSource, video_id: &str, frame: u32) -> Result<GrayImage> {
        self.prepare_video(video_id)?;
        let path = self.frame_path(video_id, frame);
        if path.exists() {
            if let Ok(img) = image::open(&path) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(img.to_luma8());
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let n = source.num_frames(video_id)?;
        if frame >= n {
            return Err(Error::MissingFrame {
                video_id: video_id.into(),
                frame,
                message: format!("video has {n} frames"),
            });
        }
        let field = if n < 2 {
            let f = source.frame(video_id, frame)?;
            FlowField::zeros(f.width(), f.height())
        } else {
            let i = frame.min(n - 2);
            compute_dense_flow(&source.frame(video_id, i)?, &source.frame(video_id, i + 1)?, &self.meta.params)?
        };
        let img = encode_flow_greyscale(&field, &self.meta.encoding);
        let mut bytes = Vec::new();
        img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
            .map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
        atomic_write(&path, &bytes)?;
        Ok(img)
    }
}

/// Writes to a sibling temporary file and renames it into place.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let tmp = path.with_extension(format!(
        "tmp{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Flow crops for a sample: full-frame flow cropped with the sample's
/// per-frame boxes, single channel.
pub fn flow_for_sample(
    sample: &SequenceSample,
    source: &dyn FrameSource,
    cache: &FlowCache,
    crop_size: usize,
) -> Result<CropSequence> {
    let mut pixels = Vec::with_capacity(sample.sequence_length * crop_size * crop_size);
    for (frame, bbox) in sample.frames().zip(&sample.bboxes) {
        let flow = cache.encoded(source, &sample.video_id, frame)?;
        let (patch, _) = crop_resize(&flow, bbox, crop_size as u32);
        pixels.extend_from_slice(patch.as_raw());
    }
    Ok(CropSequence { len: sample.sequence_length, size: crop_size, channels: 1, pixels })
}
