//! Model files.
//!
//! A model file is a JSON document
//!
//! ```json
//! { "format": "xaipipe-model", "version": 1, "model": { ... } }
//! ```
//!
//! where `model` is the serde form of [`TrainedModel`]: `config`,
//! `n_features`, `task`, `n_classes` and a `state` object tagged by `type`
//! (`constant`, `tree`, `forest`, `boosted`, `knn`, `linear`, `mlp`).
//! Arrays are stored as `{ "v": 1, "dim": [...], "data": [...] }`.
//! Readers reject any other format name or version.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainedModel;
use crate::error::{Error, Result};

pub const FORMAT: &str = "xaipipe-model";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    model: M,
}

pub fn to_json(model: &TrainedModel) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        model,
    })?)
}

pub fn from_json(text: &str) -> Result<TrainedModel> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if env.format != FORMAT || env.version != VERSION {
        return Err(Error::invalid(format!(
            "unsupported model file `{}` v{} (expected {FORMAT} v{VERSION})",
            env.format, env.version
        )));
    }
    Ok(serde_json::from_value(env.model)?)
}

pub fn save(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
