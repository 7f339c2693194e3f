//! Config files and their diagnostics.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::anyhow;
use pte_core::benchmark::ForestConfig;
use pte_core::ids::Question;
use pte_core::ledger::{read_log, ItemKind, Ledger};
use pte_core::sim::{ConvergenceConfig, ExperimentConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const DEFAULT_SIMULATE: &str = include_str!("../../../configs/default_simulate.json");

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub experiment: Option<ExperimentConfig>,
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub forest: ForestConfig,
    /// Share of items held out for the diagnostic.
    pub holdout_fraction: f64,
    pub kind: ItemKind,
    pub question: Question,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            holdout_fraction: 0.2,
            kind: ItemKind::Project,
            question: Question::CONTRIBUTION,
        }
    }
}

pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| {
        Failure::config(anyhow!("{origin}: line {}, column {}: {e}", e.line(), e.column()))
    })
}

/// Reads `path`, or returns the default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::config(anyhow!("cannot read config {}: {e}", p.display())))?;
            parse(&text, &p.display().to_string())
        }
    }
}

pub fn load_log(path: &Path) -> Result<Ledger, Failure> {
    let file = File::open(path).map_err(|e| Failure::config(anyhow!("cannot open log {}: {e}", path.display())))?;
    read_log(BufReader::new(file)).map_err(|e| Failure::config(anyhow!("{}: {e}", path.display())))
}
