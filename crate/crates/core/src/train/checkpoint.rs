use std::collections::HashMap;
use std::fs;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use super::{EpochMetrics, Sgd, TrainConfig};
use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};
use crate::flow::FlowCacheMeta;
use crate::model::{ModelConfig, RecognitionModel};
use crate::nn::{Module, Tensor};
use crate::sampler::SamplerConfig;

pub const FORMAT_VERSION: u32 = 1;
const HEADER_KEY: &str = "apebehave";
const PARAM_PREFIX: &str = "param.";
const OPTIM_PREFIX: &str = "optim.";

/// Everything needed to rebuild a model and continue training it.
///
/// The batch order of epoch `e` is a pure function of `(train.seed, e)`,
/// so `epoch` together with the seed stands in for the sampler RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor)>,
    pub optimizer: Vec<(String, Tensor)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub flow: Option<FlowCacheMeta>,
    pub class_order: Vec<String>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
}

pub(crate) fn model_tensors(model: &mut RecognitionModel) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    model.visit("", &mut |name, p| out.push((name.to_string(), p.value.clone())));
    out
}

impl Checkpoint {
    pub fn capture(
        model: &mut RecognitionModel,
        optimizer: &Sgd,
        train: &TrainConfig,
        sampler: &SamplerConfig,
        flow: Option<&FlowCacheMeta>,
        epoch: usize,
        history: &[EpochMetrics],
    ) -> Self {
        Self {
            header: CheckpointHeader {
                format_version: FORMAT_VERSION,
                model: model.config().clone(),
                train: train.clone(),
                sampler: *sampler,
                flow: flow.cloned(),
                class_order: BehaviourLabel::class_order(),
                epoch,
                history: history.to_vec(),
            },
            tensors: model_tensors(model),
            optimizer: optimizer.state(),
        }
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.header.model
    }

    /// Rebuilds the model with these exact weights.
    pub fn restore_model(&self) -> Result<RecognitionModel> {
        let mut model = RecognitionModel::new(self.header.model.clone(), 0)?;
        let mut problems = Vec::new();
        let mut used = 0;
        model.visit("", &mut |name, p| match self.tensors.iter().find(|(n, _)| n == name) {
            Some((_, t)) if t.shape() == p.value.shape() => {
                p.value = t.clone();
                used += 1;
            }
            Some((_, t)) => problems.push(format!("{name}: shape {:?} vs {:?}", t.shape(), p.value.shape())),
            None => problems.push(format!("{name}: missing")),
        });
        if used != self.tensors.len() {
            problems.push(format!("{} unexpected tensors", self.tensors.len() - used));
        }
        if !problems.is_empty() {
            return Err(Error::Checkpoint(format!("weights do not fit the model: {}", problems.join("; "))));
        }
        Ok(model)
    }

    pub fn restore_optimizer(&self) -> Sgd {
        let t = &self.header.train;
        let mut opt = Sgd::new(t.learning_rate as f32, t.momentum as f32, t.weight_decay as f32);
        opt.load_state(self.optimizer.clone());
        opt
    }

    /// Refuses a checkpoint whose model or class order differs from `expected`.
    pub fn check_compatible(&self, expected: &ModelConfig) -> Result<()> {
        if self.header.class_order != BehaviourLabel::class_order() {
            return Err(Error::Checkpoint("config mismatch: class order differs".into()));
        }
        if &self.header.model != expected {
            let got = serde_json::to_value(&self.header.model)?;
            let want = serde_json::to_value(expected)?;
            let diffs: Vec<String> = want
                .as_object()
                .into_iter()
                .flatten()
                .filter(|(k, v)| got.get(k.as_str()) != Some(v))
                .map(|(k, v)| format!("{k}: checkpoint {} vs expected {v}", got.get(k.as_str()).unwrap_or(&serde_json::Value::Null)))
                .collect();
            return Err(Error::Checkpoint(format!("config mismatch: {}", diffs.join(", "))));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let named = self
            .tensors
            .iter()
            .map(|(n, t)| (format!("{PARAM_PREFIX}{n}"), t))
            .chain(self.optimizer.iter().map(|(n, t)| (format!("{OPTIM_PREFIX}{n}"), t)));
        write_tensors(path, named, serde_json::to_string(&self.header)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
        let (header_json, named) = read_tensors(path)?;
        let header: CheckpointHeader =
            serde_json::from_str(&header_json.ok_or_else(|| bad("no checkpoint header".into()))?)?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        let mut tensors = Vec::new();
        let mut optimizer = Vec::new();
        for (name, t) in named {
            if let Some(n) = name.strip_prefix(PARAM_PREFIX) {
                tensors.push((n.to_string(), t));
            } else if let Some(n) = name.strip_prefix(OPTIM_PREFIX) {
                optimizer.push((n.to_string(), t));
            } else {
                return Err(bad(format!("unexpected tensor {name}")));
            }
        }
        // keep the model's visiting order so equality with a captured checkpoint holds
        let mut order = Vec::new();
        RecognitionModel::new(header.model.clone(), 0)?.visit("", &mut |n, _| order.push(n.to_string()));
        tensors.sort_by_key(|(n, _)| order.iter().position(|o| o == n).unwrap_or(usize::MAX));
        Ok(Self { header, tensors, optimizer })
    }
}

/// Writes named f32 tensors as safetensors with an optional JSON header,
/// via a temporary file.
pub(crate) fn write_tensors<'a>(
    path: &Path,
    named: impl IntoIterator<Item = (String, &'a Tensor)>,
    header: String,
) -> Result<()> {
    let owned: Vec<(String, Vec<usize>, Vec<u8>)> = named
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec(), t.data().iter().flat_map(|v| v.to_le_bytes()).collect()))
        .collect();
    let views = owned
        .iter()
        .map(|(n, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (n.clone(), v))
                .map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = HashMap::from([(HEADER_KEY.to_string(), header)]);
    let bytes = safetensors::serialize(views, &Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Named tensors from any safetensors file, such as exported backbone weights.
pub fn read_weights(path: &Path) -> Result<Vec<(String, Tensor)>> {
    Ok(read_tensors(path)?.1)
}

/// Saves named tensors as a plain safetensors file, readable by [`read_weights`].
pub fn write_weights(path: &Path, weights: &[(String, Tensor)]) -> Result<()> {
    write_tensors(path, weights.iter().map(|(n, t)| (n.clone(), t)), String::new())
}

/// Reads every tensor (sorted by name) and the JSON header, if any.
pub(crate) fn read_tensors(path: &Path) -> Result<(Option<String>, Vec<(String, Tensor)>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(e.to_string()))?;
    let header = meta.metadata().as_ref().and_then(|m| m.get(HEADER_KEY)).cloned();
    let st = SafeTensors::deserialize(&bytes).map_err(|e| bad(e.to_string()))?;
    let mut names = st.names();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let view = st.tensor(name).map_err(|e| bad(e.to_string()))?;
        if view.dtype() != Dtype::F32 {
            return Err(bad(format!("{name} is not f32")));
        }
        let data: Vec<f32> =
            view.data().chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push((name.to_string(), Tensor::from_vec(view.shape(), data)));
    }
    Ok((header, out))
}
