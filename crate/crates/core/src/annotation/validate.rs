use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{frame_index_from_name, read_dir_sorted};
use super::{parse_frame_annotation, Corpus, FrameAnnotation, MAX_INSTANCES_PER_FRAME};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Malformed,
    UnknownBehaviour,
    InvalidBbox,
    BboxOutOfBounds,
    DuplicateId,
    FrameGap,
    TooManyInstances,
    NameMismatch,
    MissingFrameImage,
    MissingMetadata,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Malformed => "malformed",
            ViolationKind::UnknownBehaviour => "unknown-behaviour",
            ViolationKind::InvalidBbox => "invalid-bbox",
            ViolationKind::BboxOutOfBounds => "bbox-out-of-bounds",
            ViolationKind::DuplicateId => "duplicate-id",
            ViolationKind::FrameGap => "frame-gap",
            ViolationKind::TooManyInstances => "too-many-instances",
            ViolationKind::NameMismatch => "name-mismatch",
            ViolationKind::MissingFrameImage => "missing-frame-image",
            ViolationKind::MissingMetadata => "missing-metadata",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub video_id: String,
    pub frame: Option<u32>,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoStats {
    pub video_id: String,
    pub frames: usize,
    pub instances: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub videos: Vec<VideoStats>,
    /// Instance count per behaviour name.
    pub behaviour_histogram: BTreeMap<String, usize>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    /// Line-oriented rendering: one `video` line per video, one `behaviour`
    /// line per label, one `violation` line per defect, then a summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.videos {
            let _ = writeln!(out, "video\t{}\tframes={}\tinstances={}", v.video_id, v.frames, v.instances);
        }
        for (b, n) in &self.behaviour_histogram {
            let _ = writeln!(out, "behaviour\t{b}\t{n}");
        }
        for v in &self.violations {
            let frame = v.frame.map_or_else(|| "-".to_string(), |f| f.to_string());
            let _ = writeln!(out, "violation\t{}\t{}\t{}\t{}", v.kind.as_str(), v.video_id, frame, v.detail);
        }
        let _ = writeln!(
            out,
            "summary\tvideos={}\tframes={}\tinstances={}\tviolations={}",
            self.videos.len(),
            self.videos.iter().map(|v| v.frames).sum::<usize>(),
            self.videos.iter().map(|v| v.instances).sum::<usize>(),
            self.violations.len()
        );
        out
    }

    pub fn save(&self, text_path: &Path, json_path: &Path) -> Result<()> {
        fs::write(text_path, self.to_text()).map_err(|e| Error::io(text_path, e))?;
        fs::write(json_path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(json_path, e))
    }
}

/// Scans every video under `root`, collecting statistics and all defects
/// rather than stopping at the first.
pub fn validate_corpus(root: impl AsRef<Path>) -> Result<ValidationReport> {
    let root = root.as_ref();
    let mut report = ValidationReport::default();
    for video_id in Corpus::list_video_ids(root)? {
        validate_video(root, &video_id, &mut report)?;
    }
    Ok(report)
}

fn validate_video(root: &Path, video_id: &str, report: &mut ValidationReport) -> Result<()> {
    let mut push = |frame: Option<u32>, kind: ViolationKind, detail: String| {
        report.violations.push(Violation {
            video_id: video_id.to_string(),
            frame,
            kind,
            detail,
        })
    };

    let size = match Corpus::read_meta(root, video_id) {
        Ok(Some(m)) => Some((m.width, m.height)),
        Ok(None) => image::image_dimensions(Corpus::frame_path(root, video_id, 0)).ok(),
        Err(e) => {
            push(None, ViolationKind::MissingMetadata, e.to_string());
            None
        }
    };
    if size.is_none() {
        push(None, ViolationKind::MissingMetadata, "frame size unknown: no video.json and no frame 0 image".into());
    }

    let ann_dir = root.join(video_id).join("annotations");
    let mut frames: Vec<FrameAnnotation> = Vec::new();
    let paths = if ann_dir.is_dir() { read_dir_sorted(&ann_dir)? } else { Vec::new() };
    for path in paths {
        if path.extension().and_then(|e| e.to_str()) != Some("xml") {
            continue;
        }
        let from_name = frame_index_from_name(video_id, &path, "xml");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        match parse_frame_annotation(&bytes) {
            Ok(frame) => {
                if frame.video_id != video_id || from_name != Some(frame.frame_index) {
                    push(
                        Some(frame.frame_index),
                        ViolationKind::NameMismatch,
                        format!("{} declares video `{}` frame {}", path.display(), frame.video_id, frame.frame_index),
                    );
                }
                frames.push(frame);
            }
            Err(e) => {
                let kind = match &e {
                    Error::UnknownBehaviour(_) => ViolationKind::UnknownBehaviour,
                    Error::Validation(msg) if msg.contains("bounding box") => ViolationKind::InvalidBbox,
                    _ => ViolationKind::Malformed,
                };
                push(from_name, kind, format!("{}: {e}", path.display()));
            }
        }
    }
    frames.sort_by_key(|f| f.frame_index);

    let mut expected = 0u32;
    for frame in &frames {
        if frame.frame_index > expected {
            let detail = if frame.frame_index - expected == 1 {
                format!("frame {expected} missing")
            } else {
                format!("frames {expected}..{} missing", frame.frame_index - 1)
            };
            push(Some(expected), ViolationKind::FrameGap, detail);
        } else if frame.frame_index < expected {
            push(Some(frame.frame_index), ViolationKind::DuplicateId, "frame index annotated twice".into());
        }
        expected = expected.max(frame.frame_index + 1);
    }

    let frames_dir = root.join(video_id).join("frames");
    for frame in &frames {
        let f = Some(frame.frame_index);
        if frame.instances.len() > MAX_INSTANCES_PER_FRAME {
            push(f, ViolationKind::TooManyInstances, format!("{} instances", frame.instances.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for inst in &frame.instances {
            if !seen.insert(inst.ape_id) {
                push(f, ViolationKind::DuplicateId, format!("ape id {} appears twice", inst.ape_id));
            }
            if let Some((w, h)) = size {
                if !inst.bbox.fits_in(w, h) {
                    push(
                        f,
                        ViolationKind::BboxOutOfBounds,
                        format!("ape {} box {:?} exceeds {w}x{h}", inst.ape_id, inst.bbox),
                    );
                }
            }
            *report.behaviour_histogram.entry(inst.behaviour.to_string()).or_default() += 1;
        }
        if !Corpus::frame_path(root, video_id, frame.frame_index).is_file() {
            push(
                f,
                ViolationKind::MissingFrameImage,
                format!("no image under {}", frames_dir.display()),
            );
        }
    }

    report.videos.push(VideoStats {
        video_id: video_id.to_string(),
        frames: frames.len(),
        instances: frames.iter().map(|f| f.instances.len()).sum(),
    });
    Ok(())
}
