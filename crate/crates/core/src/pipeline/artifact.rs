//! Versioned JSON model artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::learner::Fitted;
use super::models::{BenchmarkModel, StackedModel};
use crate::error::{Error, Result};
use crate::garch::{EgarchFit, GarchFit};
use crate::heston::HestonParams;

pub const ARTIFACT_FORMAT: &str = "volstack-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    /// RF, GB, SVR or a bare network.
    Learner(Fitted),
    Garch(GarchFit),
    Egarch(EgarchFit),
    Heston(HestonParams),
    Stacked(StackedModel),
    Benchmark(BenchmarkModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn to_json(model: &TrainedModel) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        model: model.clone(),
    })?)
}

pub fn from_json(s: &str) -> Result<TrainedModel> {
    let head: serde_json::Value = serde_json::from_str(s)?;
    let format = head.get("format").and_then(|v| v.as_str()).unwrap_or_default();
    if format != ARTIFACT_FORMAT {
        return Err(Error::Validation(format!("not a model artifact (format `{format}`)")));
    }
    let version = head.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != ARTIFACT_VERSION as u64 {
        return Err(Error::Validation(format!(
            "artifact version {version} is not supported (expected {ARTIFACT_VERSION})"
        )));
    }
    Ok(serde_json::from_value::<Envelope>(head)?.model)
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    from_json(&std::fs::read_to_string(path)?)
}
