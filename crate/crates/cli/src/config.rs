use std::fs;
use std::path::Path;

use rescue_mind::agents::DatasetConfig;
use rescue_mind::evidence::EvidenceConfig;
use rescue_mind::neural::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Contents of a `--config` file. Every section is optional; flags given on
/// the command line override the file, which overrides built-in defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub evidence: EvidenceConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.evidence
            .validate()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }
}
