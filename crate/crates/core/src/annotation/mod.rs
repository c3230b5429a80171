//! Annotation data model: per-frame ape instances, videos, tracklets and
//! corpus splits, plus the on-disk corpus layout.

mod corpus;
mod split;
mod tracklet;
mod validate;
mod xml;

use serde::{Deserialize, Serialize};

pub use corpus::{Corpus, VideoMeta, DEFAULT_FPS};
pub use split::{split_corpus, CorpusSplit, SplitRatio};
pub use tracklet::{build_tracklets, Tracklet, TrackletEntry};
pub use validate::{validate_corpus, ValidationReport, VideoStats, Violation, ViolationKind};
pub use xml::{parse_frame_annotation, serialize_frame_annotation};

use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};

/// Most apes annotated in one frame.
pub const MAX_INSTANCES_PER_FRAME: usize = 8;

/// Integer pixel box with exclusive-style ordering `xmin < xmax`, `ymin < ymax`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

impl BoundingBox {
    pub fn new(xmin: u32, ymin: u32, xmax: u32, ymax: u32) -> Result<Self> {
        if xmin >= xmax || ymin >= ymax {
            return Err(Error::Validation(format!(
                "inverted bounding box ({xmin}, {ymin}, {xmax}, {ymax})"
            )));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn width(&self) -> u32 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> u32 {
        self.ymax - self.ymin
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.xmax <= width && self.ymax <= height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApeInstance {
    pub ape_id: u32,
    pub behaviour: BehaviourLabel,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub video_id: String,
    pub frame_index: u32,
    pub instances: Vec<ApeInstance>,
}

impl FrameAnnotation {
    pub fn instance(&self, ape_id: u32) -> Option<&ApeInstance> {
        self.instances.iter().find(|i| i.ape_id == ape_id)
    }
}

/// All frames of one video, sorted and contiguous from frame 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub fps: f32,
    pub frames: Vec<FrameAnnotation>,
}

impl VideoAnnotation {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn instance_count(&self) -> usize {
        self.frames.iter().map(|f| f.instances.len()).sum()
    }

    /// Checks ordering, contiguity and per-frame id uniqueness.
    pub fn check(&self) -> Result<()> {
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.frame_index as usize != i {
                return Err(Error::Validation(format!(
                    "video `{}`: expected frame {i}, found {}",
                    self.video_id, frame.frame_index
                )));
            }
            let mut ids: Vec<u32> = frame.instances.iter().map(|x| x.ape_id).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!(
                    "video `{}` frame {i}: duplicate ape id",
                    self.video_id
                )));
            }
            if ids.len() > MAX_INSTANCES_PER_FRAME {
                return Err(Error::Validation(format!(
                    "video `{}` frame {i}: {} instances exceed {MAX_INSTANCES_PER_FRAME}",
                    self.video_id,
                    ids.len()
                )));
            }
        }
        Ok(())
    }
}
