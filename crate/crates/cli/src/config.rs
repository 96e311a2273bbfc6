use std::fs;
use std::path::{Path, PathBuf};

use bi_ice::data::SynthConfig;
use bi_ice::model::BiIceConfig;
use bi_ice::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Everything a run needs, in one JSON document.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: Option<BiIceConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub paths: Paths,
}

/// Default file locations; command-line flags take precedence.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub val_annotations: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage("io", format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: RunConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
            Failure::usage("config", format!("{}: at `{}`: {}", path.display(), e.path(), e.inner()))
        })?;
        if let Some(m) = &cfg.model {
            m.validate().map_err(Failure::input)?;
        }
        if let Some(s) = &cfg.synth {
            s.validate().map_err(Failure::input)?;
        }
        cfg.train.validate().map_err(Failure::input)?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<&BiIceConfig, Failure> {
        self.model
            .as_ref()
            .ok_or_else(|| Failure::usage("config", "missing `model` section"))
    }
}
