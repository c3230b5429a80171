use serde::{Deserialize, Serialize};

use super::{SamplerConfig, SequenceSample};
use crate::annotation::{build_tracklets, BoundingBox, Tracklet, VideoAnnotation};
use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};

/// A maximal stretch of consecutive tracklet frames with one behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviourRun {
    pub video_id: String,
    pub ape_id: u32,
    pub behaviour: BehaviourLabel,
    pub start_frame: u32,
    /// Inclusive.
    pub end_frame: u32,
    /// One box per frame of the run.
    pub bboxes: Vec<BoundingBox>,
}

impl BehaviourRun {
    pub fn len(&self) -> usize {
        (self.end_frame - self.start_frame + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Runs of at least `threshold` frames, in temporal order. A behaviour
/// change or a missing frame ends a run.
pub fn find_behaviour_runs(tracklet: &Tracklet, threshold: usize) -> Vec<BehaviourRun> {
    let mut runs = Vec::new();
    let entries = &tracklet.entries;
    let mut start = 0;
    while start < entries.len() {
        let mut end = start;
        while end + 1 < entries.len()
            && entries[end + 1].frame_index == entries[end].frame_index + 1
            && entries[end + 1].behaviour == entries[start].behaviour
        {
            end += 1;
        }
        if end - start + 1 >= threshold {
            runs.push(BehaviourRun {
                video_id: tracklet.video_id.clone(),
                ape_id: tracklet.ape_id,
                behaviour: entries[start].behaviour,
                start_frame: entries[start].frame_index,
                end_frame: entries[end].frame_index,
                bboxes: entries[start..=end].iter().map(|e| e.bbox).collect(),
            });
        }
        start = end + 1;
    }
    runs
}

/// Windows at offsets `0, stride, 2*stride, ..` that fit entirely in the run.
pub fn extract_sequences(run: &BehaviourRun, cfg: &SamplerConfig) -> Result<Vec<SequenceSample>> {
    cfg.validate()?;
    if run.len() < cfg.duration_threshold {
        return Err(Error::Contract(format!(
            "run of {} frames is shorter than the {}-frame threshold",
            run.len(),
            cfg.duration_threshold
        )));
    }
    let len = cfg.sequence_length;
    Ok((0..)
        .map(|k| k * cfg.sampling_stride)
        .take_while(|offset| offset + len <= run.len())
        .map(|offset| SequenceSample {
            video_id: run.video_id.clone(),
            ape_id: run.ape_id,
            start_frame: run.start_frame + offset as u32,
            sequence_length: len,
            label: run.behaviour,
            bboxes: run.bboxes[offset..offset + len].to_vec(),
        })
        .collect())
}

/// Full sampling plan over a set of videos, in video, ape-id, time order.
pub fn plan_samples<'a>(
    videos: impl IntoIterator<Item = &'a VideoAnnotation>,
    cfg: &SamplerConfig,
) -> Result<Vec<SequenceSample>> {
    cfg.validate()?;
    let mut samples = Vec::new();
    for video in videos {
        for tracklet in build_tracklets(video) {
            for run in find_behaviour_runs(&tracklet, cfg.duration_threshold) {
                samples.extend(extract_sequences(&run, cfg)?);
            }
        }
    }
    Ok(samples)
}
