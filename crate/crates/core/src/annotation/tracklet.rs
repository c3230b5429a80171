use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, VideoAnnotation};
use crate::behaviour::BehaviourLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackletEntry {
    pub frame_index: u32,
    pub behaviour: BehaviourLabel,
    pub bbox: BoundingBox,
}

/// One ape id's instances in frame order. Frames where the id is absent
/// show up as index jumps; nothing is interpolated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tracklet {
    pub video_id: String,
    pub ape_id: u32,
    pub entries: Vec<TrackletEntry>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, frame_index: u32) -> Option<&TrackletEntry> {
        self.entries
            .binary_search_by_key(&frame_index, |e| e.frame_index)
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// One tracklet per distinct ape id, ordered by id.
pub fn build_tracklets(video: &VideoAnnotation) -> Vec<Tracklet> {
    let mut by_id: BTreeMap<u32, Vec<TrackletEntry>> = BTreeMap::new();
    for frame in &video.frames {
        for inst in &frame.instances {
            by_id.entry(inst.ape_id).or_default().push(TrackletEntry {
                frame_index: frame.frame_index,
                behaviour: inst.behaviour,
                bbox: inst.bbox,
            });
        }
    }
    by_id
        .into_iter()
        .map(|(ape_id, mut entries)| {
            entries.sort_by_key(|e| e.frame_index);
            Tracklet {
                video_id: video.video_id.clone(),
                ape_id,
                entries,
            }
        })
        .collect()
}
