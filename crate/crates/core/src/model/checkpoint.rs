//! Self-describing JSON checkpoints.
//!
//! The file carries the config, seed, normalization statistics and every
//! parameter tensor as decimal arrays. Values survive a write/read/write
//! cycle bit for bit (shortest round-tripping decimal encoding).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Model;

const FORMAT_TAG: &str = "gridfuse-checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: Model,
}

/// Serializes a model to a JSON string.
pub fn checkpoint_to_string(model: &Model) -> Result<String> {
    let doc = Checkpoint {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        model: model.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a model from checkpoint JSON.
pub fn checkpoint_from_str(text: &str) -> Result<Model> {
    let doc: Checkpoint = serde_json::from_str(text)?;
    if doc.format != FORMAT_TAG {
        return Err(Error::InvalidConfig(format!("not a model checkpoint: '{}'", doc.format)));
    }
    if doc.version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(doc.version as u8));
    }
    doc.model.config.validate()?;
    Ok(doc.model)
}

/// Writes a checkpoint file.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(model)?)?;
    Ok(())
}

/// Reads a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Model> {
    checkpoint_from_str(&fs::read_to_string(path)?)
}
