//! Interleaved word/slot sequences: `[w1, s1, w2, s2, ...]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SerializedSequence {
    pub tokens: Vec<String>,
}

pub fn serialize_slots<S: AsRef<str>>(words: &[S], slots: &[S]) -> Result<SerializedSequence> {
    if words.len() != slots.len() {
        return Err(Error::Validation(format!(
            "{} words but {} slot tags",
            words.len(),
            slots.len()
        )));
    }
    let tokens = words
        .iter()
        .zip(slots)
        .flat_map(|(w, s)| [w.as_ref().to_string(), s.as_ref().to_string()])
        .collect();
    Ok(SerializedSequence { tokens })
}

/// Splits an interleaved sequence back into `(words, slots)`.
pub fn deserialize_slots(seq: &SerializedSequence) -> Result<(Vec<String>, Vec<String>)> {
    if !seq.tokens.len().is_multiple_of(2) {
        return Err(Error::Validation(format!(
            "serialized sequence has odd length {}",
            seq.tokens.len()
        )));
    }
    Ok(seq.tokens.chunks_exact(2).map(|p| (p[0].clone(), p[1].clone())).unzip())
}
