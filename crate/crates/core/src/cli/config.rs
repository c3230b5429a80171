//! Layered settings: built-in defaults, then command-line flags, then the
//! TOML config file, which has the final say.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotation::SplitRatio;
use crate::error::{Error, Result};
use crate::flow::{FlowEncodingConfig, FlowParams};
use crate::model::ModelConfig;
use crate::sampler::SamplerConfig;
use crate::train::TrainConfig;

/// Parsed config file: one optional table per settings group.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: toml::Table =
            text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { table })
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn section(&self, name: &str) -> Option<&toml::Table> {
        self.table.get(name).and_then(|v| v.as_table())
    }

    /// `base` with every key of section `name` replaced by the file's value.
    /// Keys the section does not know about are rejected.
    pub fn overlay<T: Serialize + DeserializeOwned + Clone>(&self, name: &str, base: &T) -> Result<T> {
        let Some(patch) = self.section(name) else {
            return Ok(base.clone());
        };
        let mut value = toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        let table = value
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("[{name}] does not map to a table")))?;
        merge(table, patch, name)?;
        value.try_into().map_err(|e| Error::Config(format!("[{name}]: {e}")))
    }
}

fn merge(base: &mut toml::Table, patch: &toml::Table, path: &str) -> Result<()> {
    for (key, value) in patch {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(inner)), toml::Value::Table(p)) => merge(inner, p, &format!("{path}.{key}"))?,
            (Some(slot), v) => *slot = v.clone(),
            (None, _) => return Err(Error::Config(format!("unknown setting {path}.{key}"))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSettings {
    pub seed: u64,
    pub ratio: SplitRatio,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self { seed: 0, ratio: SplitRatio::new(400, 25, 75) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    pub params: FlowParams,
    pub encoding: FlowEncodingConfig,
    pub cache: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSettings {
    pub pretrain_cache: PathBuf,
}

/// Everything a pipeline command needs, after all layers are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub flow: FlowSettings,
    pub split: SplitSettings,
    pub paths: PathSettings,
}

impl Resolved {
    /// Applies the file's `[sampler]`, `[model]`, `[train]`, `[flow]`,
    /// `[split]` and `[paths]` tables, then re-derives the fields that
    /// must agree between sampler and model.
    pub fn apply_file(mut self, file: &ConfigFile) -> Result<Self> {
        let sampler_in_file = file.section("sampler");
        self.sampler = file.overlay("sampler", &self.sampler)?;
        self.model = file.overlay("model", &self.model)?;
        self.train = file.overlay("train", &self.train)?;
        self.flow = file.overlay("flow", &self.flow)?;
        self.split = file.overlay("split", &self.split)?;
        self.paths = file.overlay("paths", &self.paths)?;
        if let Some(s) = sampler_in_file {
            if s.contains_key("sequence_length") {
                self.model.sequence_length = self.sampler.sequence_length;
            }
            if s.contains_key("crop_size") {
                self.model.crop_size = self.sampler.crop_size;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.flow.encoding.validate()?;
        if self.model.sequence_length != self.sampler.sequence_length || self.model.crop_size != self.sampler.crop_size {
            return Err(Error::Config(format!(
                "model expects {} frames of {} px but the sampler yields {} frames of {} px",
                self.model.sequence_length, self.model.crop_size, self.sampler.sequence_length, self.sampler.crop_size
            )));
        }
        Ok(())
    }
}
