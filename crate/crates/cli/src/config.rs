use std::path::Path;

use serde::{Deserialize, Serialize};
use threatwatch_core::{FusionConfig, TemporalConfig};

use crate::CliError;

/// Whole-pipeline configuration, loaded from one JSON file. Every field is
/// optional:
///
/// ```json
/// {
///   "fusion":   { "tau_det": 0.90, "delta_assoc": 0.25, "epsilon_vert": 0.05,
///                 "tau_pose": 0.50, "delta_wrist": 0.20, "margin": 0.10 },
///   "temporal": { "n_raise": 3, "n_clear": 10 },
///   "webhook_url": null,
///   "log_level": "warn"
/// }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fusion: FusionConfig,
    pub temporal: TemporalConfig,
    pub webhook_url: Option<String>,
    pub log_level: Option<String>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Domain(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.fusion
            .validate()
            .map_err(|e| CliError::Domain(e.to_string()))?;
        self.temporal
            .validate()
            .map_err(|e| CliError::Domain(e.to_string()))?;
        Ok(())
    }

    /// Loads `path` if given, otherwise the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
        }
    }
}
