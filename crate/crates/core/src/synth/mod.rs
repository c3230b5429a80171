//! Deterministic toy camera-trap videos with annotated subjects.
//!
//! Each behaviour has its own look and motion: walking and running share a
//! quadruped sprite and differ only in speed; climbing up and down share a
//! sprite whose limb bar sweeps in opposite directions, so only frame order
//! tells them apart; sitting, standing and hanging are postures with little
//! or no motion; sitting on back carries a second small sprite; camera
//! interaction is a face that pulses in size.

mod sprite;

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{ApeInstance, BoundingBox, Corpus, FrameAnnotation, VideoAnnotation, VideoMeta, MAX_INSTANCES_PER_FRAME};
use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};
use crate::sampler::crop_resize;
use sprite::{draw, hash, shapes, Pose};

/// Name of the file recording the generator configuration in a corpus root.
pub const MANIFEST_FILE: &str = "generator.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub behaviour: BehaviourLabel,
    pub frames: usize,
}

/// Motion speeds in pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionParams {
    pub walk_speed: f32,
    pub run_speed: f32,
    pub climb_speed: f32,
    pub carry_speed: f32,
    /// Leg jitter amplitude while standing.
    pub stand_jitter: f32,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self { walk_speed: 1.0, run_speed: 3.0, climb_speed: 0.5, carry_speed: 0.3, stand_jitter: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub fps: f32,
    pub width: u32,
    pub height: u32,
    pub min_subjects: usize,
    pub max_subjects: usize,
    /// Length of each automatically scripted behaviour; the last one of a
    /// video absorbs any remainder.
    pub segment_frames: usize,
    /// Shortest allowed behaviour duration.
    pub min_duration: usize,
    /// Behaviours handed out round-robin by the automatic script.
    pub behaviours: Vec<BehaviourLabel>,
    /// When non-empty, every subject follows this script instead.
    pub script: Vec<ScriptEntry>,
    pub motion: MotionParams,
    pub sensor_noise: u8,
    pub video_prefix: String,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_videos: 50,
            frames_per_video: 160,
            fps: 24.0,
            width: 128,
            height: 96,
            min_subjects: 1,
            max_subjects: 1,
            segment_frames: 80,
            min_duration: 72,
            behaviours: BehaviourLabel::ALL.to_vec(),
            script: Vec::new(),
            motion: MotionParams::default(),
            sensor_noise: 2,
            video_prefix: "synth".into(),
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_videos == 0 || self.frames_per_video == 0 {
            return fail("need at least one video and one frame".into());
        }
        if !(self.fps > 0.0) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        if self.width < 64 || self.height < 64 {
            return fail(format!("frame size {}x{} is below 64x64", self.width, self.height));
        }
        if self.min_subjects > self.max_subjects || self.max_subjects > MAX_INSTANCES_PER_FRAME {
            return fail(format!(
                "subjects per video must satisfy min <= max <= {MAX_INSTANCES_PER_FRAME}, got {}..{}",
                self.min_subjects, self.max_subjects
            ));
        }
        if self.script.is_empty() {
            if self.behaviours.is_empty() {
                return fail("no behaviours to script".into());
            }
            if self.segment_frames < self.min_duration {
                return fail(format!("segment of {} frames is shorter than {}", self.segment_frames, self.min_duration));
            }
            if self.frames_per_video < self.segment_frames {
                return fail("videos are shorter than one segment".into());
            }
        } else {
            if let Some(e) = self.script.iter().find(|e| e.frames < self.min_duration) {
                return fail(format!("scripted {} lasts {} frames, below {}", e.behaviour, e.frames, self.min_duration));
            }
            let total: usize = self.script.iter().map(|e| e.frames).sum();
            if total != self.frames_per_video {
                return fail(format!("script covers {total} frames but videos have {}", self.frames_per_video));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn video_id(&self, index: usize) -> String {
        format!("{}_{index:04}", self.video_prefix)
    }
}

#[derive(Debug, Clone)]
struct SubjectPlan {
    ape_id: u32,
    scale: f32,
    tint: u64,
    script: Vec<ScriptEntry>,
}

/// One generated video held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub meta: VideoMeta,
    pub annotation: VideoAnnotation,
    pub frames: Vec<RgbImage>,
}

fn plan(cfg: &GenConfig) -> Vec<Vec<SubjectPlan>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next = 0usize;
    (0..cfg.num_videos)
        .map(|_| {
            let n = rng.gen_range(cfg.min_subjects..=cfg.max_subjects);
            (0..n)
                .map(|id| {
                    let script = if cfg.script.is_empty() {
                        let segments = cfg.frames_per_video / cfg.segment_frames;
                        (0..segments)
                            .map(|k| {
                                let behaviour = cfg.behaviours[next % cfg.behaviours.len()];
                                next += 1;
                                let frames = if k + 1 == segments {
                                    cfg.frames_per_video - k * cfg.segment_frames
                                } else {
                                    cfg.segment_frames
                                };
                                ScriptEntry { behaviour, frames }
                            })
                            .collect()
                    } else {
                        cfg.script.clone()
                    };
                    SubjectPlan { ape_id: id as u32, scale: rng.gen_range(0.9..1.1), tint: rng.gen(), script }
                })
                .collect()
        })
        .collect()
}

fn background(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> RgbImage {
    let waves: Vec<(f32, f32, f32, f32)> = (0..5)
        .map(|_| (rng.gen_range(0.02..0.2), rng.gen_range(0.02..0.2), rng.gen_range(0.0..6.3), rng.gen_range(8.0..20.0)))
        .collect();
    let salt: u64 = rng.gen();
    RgbImage::from_fn(cfg.width, cfg.height, |x, y| {
        let s: f32 = waves.iter().map(|(a, b, c, amp)| amp * (a * x as f32 + b * y as f32 + c).sin()).sum();
        let n = (hash(x as i64, y as i64, salt) % 24) as f32 - 12.0;
        let g = 110.0 + s + n;
        Rgb([(g * 0.7).clamp(0.0, 255.0) as u8, g.clamp(0.0, 255.0) as u8, (g * 0.55).clamp(0.0, 255.0) as u8])
    })
}

/// Per-subject motion state within one scripted behaviour.
struct Motion {
    x: f32,
    y: f32,
    dir: f32,
    vx: f32,
    vy: f32,
    stride: f32,
}

fn start_motion(b: BehaviourLabel, frames: usize, s: f32, cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Motion {
    use BehaviourLabel::*;
    let (w, h) = (cfg.width as f32, cfg.height as f32);
    let m = &cfg.motion;
    let x = rng.gen_range(24.0 * s..w - 24.0 * s);
    let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let ground = |below: f32| h - below * s - 2.0;
    let (top, bottom) = (25.0 * s + 2.0, h - 25.0 * s - 2.0);
    let climb = (m.climb_speed).min((bottom - top) / frames as f32);
    let (y, vx, vy) = match b {
        Walking => (ground(15.0), m.walk_speed, 0.0),
        Running => (ground(15.0), m.run_speed, 0.0),
        SittingOnBack => (ground(15.0), m.carry_speed, 0.0),
        Sitting => (ground(15.0), 0.0, 0.0),
        Standing => (ground(22.0), 0.0, 0.0),
        Hanging => (top, 0.0, 0.0),
        ClimbingUp => (bottom, 0.0, -climb),
        ClimbingDown => (top, 0.0, climb),
        CameraInteraction => (h / 2.0, 0.0, 0.0),
    };
    let x = if b == CameraInteraction { w / 2.0 + rng.gen_range(-8.0..8.0) } else { x };
    Motion { x, y, dir, vx, vy, stride: 0.0 }
}

/// Renders video `index` of the corpus described by `cfg`.
pub fn generate_video(cfg: &GenConfig, index: usize) -> Result<SyntheticVideo> {
    cfg.validate()?;
    let subjects = plan(cfg).swap_remove(index);
    Ok(render_video(cfg, index, &subjects))
}

fn render_video(cfg: &GenConfig, index: usize, subjects: &[SubjectPlan]) -> SyntheticVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let video_id = cfg.video_id(index);
    let bg = background(cfg, &mut rng);
    let noise_salt: u64 = rng.gen();
    // behaviour and phase of every subject for every frame
    let timelines: Vec<Vec<(BehaviourLabel, u32, usize)>> = subjects
        .iter()
        .map(|s| {
            s.script
                .iter()
                .flat_map(|e| (0..e.frames as u32).map(move |t| (e.behaviour, t, e.frames)))
                .collect()
        })
        .collect();
    let mut motions: Vec<Option<Motion>> = subjects.iter().map(|_| None).collect();
    let mut frames = Vec::with_capacity(cfg.frames_per_video);
    let mut annotations = Vec::with_capacity(cfg.frames_per_video);
    for f in 0..cfg.frames_per_video {
        let mut img = bg.clone();
        if cfg.sensor_noise > 0 {
            let span = 2 * cfg.sensor_noise as u32 + 1;
            for (x, y, px) in img.enumerate_pixels_mut() {
                let n = (hash(x as i64, y as i64, noise_salt ^ f as u64) % span) as i32 - cfg.sensor_noise as i32;
                px.0 = px.0.map(|c| (c as i32 + n).clamp(0, 255) as u8);
            }
        }
        let mut instances = Vec::new();
        for (k, subject) in subjects.iter().enumerate() {
            let (behaviour, phase, len) = timelines[k][f];
            let s = subject.scale;
            if phase == 0 {
                motions[k] = Some(start_motion(behaviour, len, s, cfg, &mut rng));
            }
            let m = motions[k].as_mut().expect("motion starts on the first frame");
            let jitter = if behaviour == BehaviourLabel::Standing {
                let j = cfg.motion.stand_jitter;
                [rng.gen_range(-j..=j).round(), rng.gen_range(-j..=j).round()]
            } else {
                [0.0, 0.0]
            };
            let pose = Pose { behaviour, phase, stride_phase: m.stride, scale: s, facing_left: m.dir < 0.0, jitter };
            let prims = shapes(&pose);
            if let Some(bbox) = draw(&mut img, &prims, m.x.round() as i64, m.y.round() as i64, subject.tint) {
                instances.push(ApeInstance { ape_id: subject.ape_id, behaviour, bbox });
            }
            // advance
            let margin = 22.0 * s;
            m.x += m.dir * m.vx;
            if m.x < margin || m.x > cfg.width as f32 - margin {
                m.dir = -m.dir;
                m.x = m.x.clamp(margin, cfg.width as f32 - margin);
            }
            m.y += m.vy;
            m.stride += m.vx * 0.35;
        }
        frames.push(img);
        annotations.push(FrameAnnotation { video_id: video_id.clone(), frame_index: f as u32, instances });
    }
    SyntheticVideo {
        meta: VideoMeta { video_id: video_id.clone(), fps: cfg.fps, width: cfg.width, height: cfg.height },
        annotation: VideoAnnotation { video_id, fps: cfg.fps, frames: annotations },
        frames,
    }
}

/// One behaviour per sprite body plan; stills of these are the subject
/// classes of the backbone pretraining set.
pub const STILL_KINDS: [BehaviourLabel; 7] = [
    BehaviourLabel::Walking,
    BehaviourLabel::SittingOnBack,
    BehaviourLabel::ClimbingUp,
    BehaviourLabel::Sitting,
    BehaviourLabel::Standing,
    BehaviourLabel::Hanging,
    BehaviourLabel::CameraInteraction,
];

/// A single frame of body plan `STILL_KINDS[kind]` in a random pose on a
/// random background, cropped to a loosely jittered box around the subject
/// and resized to `size` square.
pub fn subject_still(kind: usize, size: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let cfg = GenConfig::default();
    let mut img = background(&cfg, rng);
    let pose = Pose {
        behaviour: STILL_KINDS[kind % STILL_KINDS.len()],
        phase: rng.gen_range(0..40),
        stride_phase: rng.gen_range(0.0..std::f32::consts::TAU),
        scale: rng.gen_range(0.8..1.2),
        facing_left: rng.gen_bool(0.5),
        jitter: [rng.gen_range(-1.0f32..=1.0).round(), rng.gen_range(-1.0f32..=1.0).round()],
    };
    let (cx, cy) = (cfg.width as i64 / 2 + rng.gen_range(-8..=8), cfg.height as i64 / 2 + rng.gen_range(-6..=6));
    let tint: u64 = rng.gen();
    let bbox = draw(&mut img, &shapes(&pose), cx, cy, tint).expect("subject is drawn inside the frame");
    let mut grow = || rng.gen_range(-2i64..=3);
    let b = BoundingBox::new(
        (bbox.xmin as i64 - grow()).clamp(0, cfg.width as i64 - 2) as u32,
        (bbox.ymin as i64 - grow()).clamp(0, cfg.height as i64 - 2) as u32,
        (bbox.xmax as i64 + grow()).clamp(bbox.xmin as i64 + 1, cfg.width as i64) as u32,
        (bbox.ymax as i64 + grow()).clamp(bbox.ymin as i64 + 1, cfg.height as i64) as u32,
    )
    .unwrap_or(bbox);
    crop_resize(&img, &b, size).0
}

/// Every video of the corpus, in memory.
pub fn generate_in_memory(cfg: &GenConfig) -> Result<Vec<SyntheticVideo>> {
    cfg.validate()?;
    Ok(plan(cfg).iter().enumerate().map(|(i, s)| render_video(cfg, i, s)).collect())
}

/// Writes the corpus under `out_dir` in the standard layout, plus
/// [`MANIFEST_FILE`] holding `cfg`.
pub fn generate(cfg: &GenConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (i, subjects) in plan(cfg).iter().enumerate() {
        let video = render_video(cfg, i, subjects);
        write_video(out_dir, &video)?;
    }
    let manifest = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest, cfg.to_toml()?).map_err(|e| Error::io(&manifest, e))
}

pub fn write_video(root: &Path, video: &SyntheticVideo) -> Result<()> {
    Corpus::write_annotations(root, &video.meta, &video.annotation)?;
    let dir = root.join(&video.meta.video_id).join("frames");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (i, frame) in video.frames.iter().enumerate() {
        let path = Corpus::frame_path(root, &video.meta.video_id, i as u32);
        frame.save(&path).map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
    }
    Ok(())
}
