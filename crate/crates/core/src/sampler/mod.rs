//! Turns tracklets into fixed-length sequence samples and iterates them in
//! class-balanced batches.
//!
//! A tracklet is first cut into maximal runs of one behaviour over
//! consecutive frames; runs shorter than the duration threshold are
//! dropped. Each surviving run is tiled with windows of `sequence_length`
//! frames starting at the run's first frame and advancing by
//! `sampling_stride`; trailing partial windows are discarded.

mod balanced;
mod crop;
mod manifest;
mod runs;

use serde::{Deserialize, Serialize};

pub use balanced::{shuffled_batches, BalancedBatches};
pub use crop::{materialize, crop_resize, CropMetadata, CropSequence, FrameSource, InMemoryFrames};
pub use manifest::SampleManifest;
pub use runs::{extract_sequences, find_behaviour_runs, plan_samples, BehaviourRun};

use crate::annotation::BoundingBox;
use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sequence_length: usize,
    pub sampling_stride: usize,
    /// Minimum consecutive same-behaviour frames, always counted in frames
    /// (72 frames is three seconds at 24 fps).
    pub duration_threshold: usize,
    pub crop_size: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sequence_length: 20,
            sampling_stride: 20,
            duration_threshold: 72,
            crop_size: 224,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequence_length == 0
            || self.sampling_stride == 0
            || self.duration_threshold == 0
            || self.crop_size == 0
        {
            return Err(Error::Config("sampler lengths must all be positive".into()));
        }
        if self.sequence_length > self.duration_threshold {
            return Err(Error::Config(format!(
                "sequence length {} exceeds the duration threshold {}",
                self.sequence_length, self.duration_threshold
            )));
        }
        Ok(())
    }
}

/// One unit of model input: `sequence_length` consecutive frames of one ape
/// showing one behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub video_id: String,
    pub ape_id: u32,
    pub start_frame: u32,
    pub sequence_length: usize,
    pub label: BehaviourLabel,
    pub bboxes: Vec<BoundingBox>,
}

impl SequenceSample {
    pub fn end_frame(&self) -> u32 {
        self.start_frame + self.sequence_length as u32 - 1
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> {
        self.start_frame..self.start_frame + self.sequence_length as u32
    }

    /// Stable identifier `<video>/<ape>/<start>`.
    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.video_id, self.ape_id, self.start_frame)
    }
}
