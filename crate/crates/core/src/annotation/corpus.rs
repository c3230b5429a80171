//! On-disk corpus layout:
//!
//! ```text
//! <root>/<video_id>/video.json                            fps and frame size
//! <root>/<video_id>/annotations/<video_id>_frame_<i>.xml  one file per frame
//! <root>/<video_id>/frames/<video_id>_frame_<i>.png       decoded RGB frames
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{parse_frame_annotation, serialize_frame_annotation, FrameAnnotation, VideoAnnotation};
use crate::error::{Error, Result};

pub const DEFAULT_FPS: f32 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    #[serde(default = "default_fps")]
    pub fps: f32,
    pub width: u32,
    pub height: u32,
}

fn default_fps() -> f32 {
    DEFAULT_FPS
}

/// A loaded corpus: every video's annotations plus access to its frames.
#[derive(Debug, Clone)]
pub struct Corpus {
    root: PathBuf,
    videos: Vec<VideoAnnotation>,
    meta: Vec<VideoMeta>,
}

pub(crate) fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    Ok(entries)
}

/// Parses the frame index out of `<video_id>_frame_<index>.<ext>`.
pub(crate) fn frame_index_from_name(video_id: &str, path: &Path, ext: &str) -> Option<u32> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix(video_id)?
        .strip_prefix("_frame_")?
        .strip_suffix(ext)?
        .strip_suffix('.')?
        .parse()
        .ok()
}

impl Corpus {
    pub fn video_dir(root: &Path, video_id: &str) -> PathBuf {
        root.join(video_id)
    }

    pub fn annotation_path(root: &Path, video_id: &str, frame: u32) -> PathBuf {
        root.join(video_id)
            .join("annotations")
            .join(format!("{video_id}_frame_{frame}.xml"))
    }

    pub fn frame_path(root: &Path, video_id: &str, frame: u32) -> PathBuf {
        root.join(video_id)
            .join("frames")
            .join(format!("{video_id}_frame_{frame}.png"))
    }

    /// Video directory names under `root`, sorted; hidden directories are skipped.
    pub fn list_video_ids(root: &Path) -> Result<Vec<String>> {
        Ok(read_dir_sorted(root)?
            .into_iter()
            .filter(|p| p.is_dir())
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_string))
            .filter(|name| !name.starts_with('.'))
            .collect())
    }

    pub fn read_meta(root: &Path, video_id: &str) -> Result<Option<VideoMeta>> {
        let path = root.join(video_id).join("video.json");
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    /// Loads and parses every annotation of one video, rejecting any defect.
    pub fn load_video(root: &Path, video_id: &str) -> Result<(VideoAnnotation, VideoMeta)> {
        let dir = root.join(video_id).join("annotations");
        let mut frames: Vec<FrameAnnotation> = Vec::new();
        for path in read_dir_sorted(&dir)? {
            if path.extension().and_then(|e| e.to_str()) != Some("xml") {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let frame = parse_frame_annotation(&bytes)
                .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
            frames.push(frame);
        }
        frames.sort_by_key(|f| f.frame_index);
        let meta = match Self::read_meta(root, video_id)? {
            Some(m) => m,
            None => {
                let first = Self::frame_path(root, video_id, 0);
                let (width, height) = image::image_dimensions(&first).map_err(|e| Error::Image {
                    path: first.clone(),
                    message: e.to_string(),
                })?;
                VideoMeta {
                    video_id: video_id.to_string(),
                    fps: DEFAULT_FPS,
                    width,
                    height,
                }
            }
        };
        let video = VideoAnnotation {
            video_id: video_id.to_string(),
            fps: meta.fps,
            frames,
        };
        video.check()?;
        for frame in &video.frames {
            if frame.video_id != video_id {
                return Err(Error::Validation(format!(
                    "frame {} of `{video_id}` names video `{}`",
                    frame.frame_index, frame.video_id
                )));
            }
            for inst in &frame.instances {
                if !inst.bbox.fits_in(meta.width, meta.height) {
                    return Err(Error::Validation(format!(
                        "frame {} of `{video_id}`: box of ape {} exceeds {}x{}",
                        frame.frame_index, inst.ape_id, meta.width, meta.height
                    )));
                }
            }
        }
        Ok((video, meta))
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let mut videos = Vec::new();
        let mut meta = Vec::new();
        for id in Self::list_video_ids(&root)? {
            let (v, m) = Self::load_video(&root, &id)?;
            videos.push(v);
            meta.push(m);
        }
        Ok(Self { root, videos, meta })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn videos(&self) -> &[VideoAnnotation] {
        &self.videos
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoAnnotation> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn meta(&self, video_id: &str) -> Option<&VideoMeta> {
        self.meta.iter().find(|m| m.video_id == video_id)
    }

    pub fn video_ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.video_id.clone()).collect()
    }

    pub fn load_frame(&self, video_id: &str, frame: u32) -> Result<RgbImage> {
        let path = Self::frame_path(&self.root, video_id, frame);
        let img = image::open(&path).map_err(|e| Error::MissingFrame {
            video_id: video_id.to_string(),
            frame,
            message: format!("{}: {e}", path.display()),
        })?;
        Ok(img.to_rgb8())
    }

    /// Writes one video's metadata and annotation files.
    pub fn write_annotations(root: &Path, meta: &VideoMeta, video: &VideoAnnotation) -> Result<()> {
        let dir = root.join(&video.video_id).join("annotations");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let meta_path = root.join(&video.video_id).join("video.json");
        fs::write(&meta_path, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&meta_path, e))?;
        for frame in &video.frames {
            let path = Self::annotation_path(root, &video.video_id, frame.frame_index);
            fs::write(&path, serialize_frame_annotation(frame)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
