use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Everything needed to rerun a command and get the same files back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The effective configuration after defaults, file and flags.
    pub config: Value,
    pub master_seed: u64,
    pub version: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, master_seed: u64) -> Result<Self, CliError> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?,
            master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Usage(e.to_string()))?;
        crate::write_file(path, &(text + "\n"))
    }

    #[cfg(test)]
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
