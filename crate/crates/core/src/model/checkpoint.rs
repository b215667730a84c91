//! JSON checkpoints: configuration, vocabularies, label inventories and
//! named parameter matrices with their shapes.

use serde::{Deserialize, Serialize};

use super::network::{JointModel, ModelConfig};
use super::params::{ModelParams, Param};
use crate::error::{Error, Result};
use crate::tokenize::SubwordVocab;

pub const CHECKPOINT_FORMAT: &str = "slu-toy-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    asr_vocab: SubwordVocab,
    nlu_vocab: SubwordVocab,
    tags: Vec<String>,
    intents: Vec<String>,
    params: Vec<Param>,
}

pub fn checkpoint_to_string(model: &JointModel) -> Result<String> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config,
        asr_vocab: model.asr_vocab.clone(),
        nlu_vocab: model.nlu_vocab.clone(),
        tags: model.tags.clone(),
        intents: model.intents.clone(),
        params: model.clone().into_params().into_vec(),
    };
    Ok(serde_json::to_string(&ck)?)
}

pub fn checkpoint_from_str(text: &str) -> Result<JointModel> {
    let ck: Checkpoint = serde_json::from_str(text)?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint `{}` version {}",
            ck.format, ck.version
        )));
    }
    JointModel::from_parts(
        ck.config,
        ck.asr_vocab,
        ck.nlu_vocab,
        ck.tags,
        ck.intents,
        ModelParams::new(ck.params)?,
    )
}
