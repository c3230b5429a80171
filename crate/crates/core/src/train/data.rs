use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};
use crate::flow::{flow_for_sample, FlowCache};
use crate::model::{Normalization, StreamInput};
use crate::nn::Tensor;
use crate::sampler::{materialize, CropSequence, FrameSource, SequenceSample};

/// Samples with their RGB and flow crops decoded into memory as 8-bit data.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<SequenceSample>,
    rgb: Vec<CropSequence>,
    flow: Vec<CropSequence>,
}

impl Dataset {
    /// Crops every sample from `frames`; flow comes from (and fills) `cache`.
    pub fn build(
        samples: Vec<SequenceSample>,
        frames: &dyn FrameSource,
        cache: &FlowCache,
        crop_size: usize,
    ) -> Result<Self> {
        let mut rgb = Vec::with_capacity(samples.len());
        let mut flow = Vec::with_capacity(samples.len());
        for s in &samples {
            rgb.push(materialize(s, frames, crop_size)?.0);
            flow.push(flow_for_sample(s, frames, cache, crop_size)?);
        }
        Ok(Self { samples, rgb, flow })
    }

    /// Assembles a dataset from already cropped sequences.
    pub fn from_parts(samples: Vec<SequenceSample>, rgb: Vec<CropSequence>, flow: Vec<CropSequence>) -> Result<Self> {
        if samples.len() != rgb.len() || samples.len() != flow.len() {
            return Err(Error::Contract("dataset parts differ in length".into()));
        }
        if let Some(r) = rgb.iter().find(|r| r.channels != 3) {
            return Err(Error::Contract(format!("rgb crops must have 3 channels, got {}", r.channels)));
        }
        if let Some(f) = flow.iter().find(|f| f.channels != 1) {
            return Err(Error::Contract(format!("flow crops must have 1 channel, got {}", f.channels)));
        }
        Ok(Self { samples, rgb, flow })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<BehaviourLabel> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            rgb: indices.iter().map(|&i| self.rgb[i].clone()).collect(),
            flow: indices.iter().map(|&i| self.flow[i].clone()).collect(),
        }
    }

    /// Samples whose video is in `videos`.
    pub fn for_videos(&self, videos: &[String]) -> Self {
        let idx: Vec<usize> =
            (0..self.len()).filter(|&i| videos.contains(&self.samples[i].video_id)).collect();
        self.subset(&idx)
    }

    /// Normalised model input and class targets for the given samples.
    /// Flow is replicated to three channels and normalised with the same
    /// constants as RGB.
    pub fn batch(&self, indices: &[usize], norm: &Normalization) -> (StreamInput, Vec<usize>) {
        let first = &self.rgb[indices[0]];
        let (t, s) = (first.len, first.size);
        let per = t * s * s * 3;
        let mut rgb = Vec::with_capacity(indices.len() * per);
        let mut flow = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            for (k, &p) in self.rgb[i].pixels.iter().enumerate() {
                let c = k % 3;
                rgb.push((p as f32 / 255.0 - norm.mean[c]) / norm.std[c]);
            }
            for &p in &self.flow[i].pixels {
                let v = p as f32 / 255.0;
                for c in 0..3 {
                    flow.push((v - norm.mean[c]) / norm.std[c]);
                }
            }
        }
        let shape = [indices.len(), t, s, s, 3];
        (
            StreamInput { rgb: Tensor::from_vec(&shape, rgb), flow: Tensor::from_vec(&shape, flow) },
            indices.iter().map(|&i| self.samples[i].label.index()).collect(),
        )
    }
}
