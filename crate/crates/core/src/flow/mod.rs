//! Dense optical flow for the temporal stream: estimation, greyscale
//! magnitude encoding and an on-disk cache keyed by video and frame.

mod cache;
mod lk;

use image::GrayImage;
use serde::{Deserialize, Serialize};

pub use cache::{flow_for_sample, FlowCache, FlowCacheMeta};
pub use lk::{compute_dense_flow, FlowParams, ALGORITHM};

use crate::error::{Error, Result};

/// Per-pixel displacement in pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self { width, height, dx: vec![0.0; n], dy: vec![0.0; n] }
    }

    pub fn uniform(width: u32, height: u32, dx: f32, dy: f32) -> Self {
        let n = (width * height) as usize;
        Self { width, height, dx: vec![dx; n], dy: vec![dy; n] }
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|v| v.is_finite())
    }

    pub fn magnitude(&self) -> impl Iterator<Item = f32> + '_ {
        self.dx.iter().zip(&self.dy).map(|(x, y)| x.hypot(*y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowEncoding {
    GreyscaleMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEncodingConfig {
    pub clip_magnitude: f32,
    pub encoding: FlowEncoding,
}

impl Default for FlowEncodingConfig {
    fn default() -> Self {
        Self { clip_magnitude: 20.0, encoding: FlowEncoding::GreyscaleMagnitude }
    }
}

impl FlowEncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_magnitude > 0.0 && self.clip_magnitude.is_finite()) {
            return Err(Error::Config(format!("clip magnitude must be positive, got {}", self.clip_magnitude)));
        }
        Ok(())
    }
}

/// `min(|v|, clip) / clip` quantised to 8 bits. Direction is discarded.
pub fn encode_flow_greyscale(field: &FlowField, cfg: &FlowEncodingConfig) -> GrayImage {
    let data = field
        .magnitude()
        .map(|m| (m.min(cfg.clip_magnitude) / cfg.clip_magnitude * 255.0).round() as u8)
        .collect();
    GrayImage::from_raw(field.width, field.height, data).expect("field buffer matches its size")
}
