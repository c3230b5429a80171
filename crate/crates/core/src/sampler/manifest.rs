use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SamplerConfig, SequenceSample};
use crate::error::{Error, Result};

/// A sampling plan on disk: the configuration plus one record per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub config: SamplerConfig,
    pub samples: Vec<SequenceSample>,
}

impl SampleManifest {
    /// JSON Lines: the config on the first line, then one sample per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = serde_json::to_string(&self.config)?;
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let config = lines
            .next()
            .ok_or_else(|| Error::Validation(format!("{}: empty manifest", path.display())))?;
        Ok(Self {
            config: serde_json::from_str(config)?,
            samples: lines.map(serde_json::from_str).collect::<std::result::Result<_, _>>()?,
        })
    }
}
