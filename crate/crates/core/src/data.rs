//! Dataset records, JSONL manifests and text normalization.
//!
//! A manifest holds one utterance per line:
//!
//! ```text
//! {"id":"u1","words":["show","flights"],"slots":["O","O"],"intent":"flight"}
//! ```
//!
//! Slot tags are stored in canonical BIO form. Bare labels (`toloc`) are
//! promoted to `B-toloc` on ingestion.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUTSIDE: &str = "O";
pub const SAMPLE_RATE: u32 = 16_000;

/// Wire form of one manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub words: Vec<String>,
    pub slots: Vec<String>,
    pub intent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
}

/// One dataset utterance: optional audio, words, slot tags and intent.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio_path: Option<String>,
    /// Mono samples at [`SAMPLE_RATE`], normalized to [-1, 1].
    pub samples: Option<Vec<f64>>,
    pub words: Vec<String>,
    pub slots: Vec<String>,
    pub intent: String,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        words: Vec<String>,
        slots: Vec<String>,
        intent: impl Into<String>,
    ) -> Result<Self> {
        let utt = Utterance {
            id: id.into(),
            audio_path: None,
            samples: None,
            words,
            slots,
            intent: intent.into(),
        };
        utt.canonicalized()
    }

    fn canonicalized(mut self) -> Result<Self> {
        if self.words.len() != self.slots.len() {
            return Err(Error::Validation(format!(
                "record `{}`: {} words but {} slots",
                self.id,
                self.words.len(),
                self.slots.len()
            )));
        }
        if self.intent.is_empty() {
            return Err(Error::Validation(format!("record `{}`: empty intent", self.id)));
        }
        self.slots = self
            .slots
            .iter()
            .map(|t| {
                canonical_tag(t)
                    .ok_or_else(|| Error::Validation(format!("record `{}`: invalid slot tag `{t}`", self.id)))
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn to_record(&self) -> Record {
        Record {
            id: self.id.clone(),
            words: self.words.clone(),
            slots: self.slots.clone(),
            intent: self.intent.clone(),
            audio: self.audio_path.clone(),
        }
    }

    fn from_record(r: Record) -> Result<Self> {
        Utterance {
            id: r.id,
            audio_path: r.audio,
            samples: None,
            words: r.words,
            slots: r.slots,
            intent: r.intent,
        }
        .canonicalized()
    }
}

/// Canonical BIO form of a tag: `O`, `B-x` or `I-x`. `None` for malformed tags.
pub fn canonical_tag(tag: &str) -> Option<String> {
    if tag == OUTSIDE {
        return Some(OUTSIDE.to_string());
    }
    if tag.is_empty() {
        return None;
    }
    match tag.split_once('-') {
        Some(("B" | "I", label)) if !label.is_empty() => Some(tag.to_string()),
        Some(("B" | "I", _)) => None,
        _ => Some(format!("B-{tag}")),
    }
}

/// Slot label with any B-/I- prefix removed.
pub fn slot_label(tag: &str) -> &str {
    tag.strip_prefix("B-").or_else(|| tag.strip_prefix("I-")).unwrap_or(tag)
}

/// A word seen with more than one slot label across the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotConflict {
    pub word: String,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<Utterance>,
    /// Slot labels (without B-/I- prefixes), including `O`.
    pub slot_vocabulary: BTreeSet<String>,
    pub intent_vocabulary: BTreeSet<String>,
    /// Directory that relative audio paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Manifest {
    /// Builds a manifest whose vocabularies are the closure over `records`.
    pub fn from_records(records: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut slot_vocabulary = BTreeSet::new();
        let mut intent_vocabulary = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id `{}`", r.id)));
            }
            for t in &r.slots {
                slot_vocabulary.insert(slot_label(t).to_string());
            }
            intent_vocabulary.insert(r.intent.clone());
        }
        if !records.is_empty() {
            slot_vocabulary.insert(OUTSIDE.to_string());
        }
        Ok(Manifest {
            records,
            slot_vocabulary,
            intent_vocabulary,
            base_dir: None,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Resolves a record's audio path against the manifest directory.
    pub fn audio_path(&self, utt: &Utterance) -> Option<PathBuf> {
        let p = Path::new(utt.audio_path.as_deref()?);
        Some(match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        })
    }

    /// Words tagged with different slot labels in different places.
    pub fn slot_conflicts(&self) -> Vec<SlotConflict> {
        let mut labels: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for r in &self.records {
            for (w, t) in r.words.iter().zip(&r.slots) {
                labels.entry(w.as_str()).or_default().insert(slot_label(t).to_string());
            }
        }
        labels
            .into_iter()
            .filter(|(_, l)| l.len() > 1)
            .map(|(w, labels)| SlotConflict {
                word: w.to_string(),
                labels,
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(&r.to_record()).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses JSONL manifest text. Blank lines are skipped.
pub fn parse_manifest_str(text: &str) -> Result<Manifest> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(Utterance::from_record(record)?);
    }
    Manifest::from_records(records)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest_str(&text)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf);
    Ok(manifest)
}

const PUNCTUATION: &[char] = &['.', ',', '?', '!', ';', ':', '"', '(', ')'];

/// Lowercases, strips punctuation, splits on whitespace and spells out
/// integers in 0..=9999. Larger numbers pass through unchanged.
pub fn normalize_text(raw: &str) -> Vec<String> {
    let cleaned: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| !PUNCTUATION.contains(c))
        .collect();
    let mut words = Vec::new();
    for token in cleaned.split_whitespace() {
        match spell_integer(token) {
            Some(spelled) => words.extend(spelled.split(' ').map(str::to_string)),
            None => words.push(token.to_string()),
        }
    }
    words
}

fn spell_integer(token: &str) -> Option<String> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if token.len() > 1 && token.starts_with('0') {
        return None;
    }
    let n: u32 = token.parse().ok()?;
    (n <= 9999).then(|| number_to_words(n))
}

const ONES: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// English cardinal for `n` in 0..=9999, words separated by single spaces.
pub fn number_to_words(n: u32) -> String {
    assert!(n <= 9999, "number_to_words covers 0..=9999");
    if n == 0 {
        return ONES[0].to_string();
    }
    let mut parts: Vec<&str> = Vec::new();
    let thousands = n / 1000;
    let hundreds = (n / 100) % 10;
    let rest = n % 100;
    if thousands > 0 {
        parts.extend([ONES[thousands as usize], "thousand"]);
    }
    if hundreds > 0 {
        parts.extend([ONES[hundreds as usize], "hundred"]);
    }
    if rest >= 20 {
        parts.push(TENS[(rest / 10) as usize]);
        if !rest.is_multiple_of(10) {
            parts.push(ONES[(rest % 10) as usize]);
        }
    } else if rest > 0 {
        parts.push(ONES[rest as usize]);
    }
    parts.join(" ")
}
