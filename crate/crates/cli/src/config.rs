//! Run configuration read from `--config` (TOML or JSON).

use std::path::Path;

use reportrank_core::corpus::SplitRatios;
use reportrank_core::ingest::IngestConfig;
use reportrank_core::trainer::{FeatureSpec, Grid, ModelSpec, TrainConfig};
use reportrank_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub features: FeatureSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub split: SplitRatios,
    /// Search space for `gridsearch`; the reference grid when absent.
    pub grid: Option<Grid>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            Self::from_toml(&text)
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                offset: offset_of(&text, e.line(), e.column()),
                message: e.to_string(),
            })
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })
    }
}

fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}
