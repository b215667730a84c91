//! A small synthetic flight-domain corpus with tone-coded audio.
//!
//! Each ASR subword is rendered as a fixed pair of sinusoids centred on two
//! front-end bands, so the subword sequence is recoverable from the audio.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{write_wav, AudioClip, FrontendConfig};
use crate::data::{Manifest, Utterance, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::tokenize::{SubwordVocab, VocabKind};

const CITIES: &[&str] = &[
    "boston",
    "denver",
    "new york",
    "dallas",
    "atlanta",
    "san francisco",
    "pittsburgh",
];
const DAYS: &[&str] = &["monday", "tuesday", "friday", "sunday"];
const AIRLINES: &[&str] = &["delta", "united", "american"];

/// A template piece: literal words or a slot drawn from a value list.
enum Part {
    Lit(&'static str),
    Slot(&'static str, &'static [&'static str]),
}

use Part::{Lit, Slot};

fn templates() -> Vec<(&'static str, Vec<Part>)> {
    vec![
        (
            "flight",
            vec![
                Lit("show flights from"),
                Slot("fromloc", CITIES),
                Lit("to"),
                Slot("toloc", CITIES),
            ],
        ),
        (
            "flight",
            vec![
                Lit("i want to fly to"),
                Slot("toloc", CITIES),
                Lit("on"),
                Slot("depart_date", DAYS),
            ],
        ),
        (
            "airfare",
            vec![
                Lit("what is the fare from"),
                Slot("fromloc", CITIES),
                Lit("to"),
                Slot("toloc", CITIES),
            ],
        ),
        (
            "airfare",
            vec![
                Lit("how much is a ticket to"),
                Slot("toloc", CITIES),
                Lit("on"),
                Slot("depart_date", DAYS),
            ],
        ),
        (
            "airline",
            vec![
                Lit("which airlines fly from"),
                Slot("fromloc", CITIES),
                Lit("to"),
                Slot("toloc", CITIES),
            ],
        ),
        (
            "airline",
            vec![
                Lit("does"),
                Slot("airline_name", AIRLINES),
                Lit("fly to"),
                Slot("toloc", CITIES),
            ],
        ),
    ]
}

/// Seconds of audio per subword.
pub const TOKEN_SECONDS: f64 = 0.08;
const EDGE_SILENCE: usize = 320;
const AMPLITUDE: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Records carry their samples in memory and point at `audio/<id>.wav`.
    pub manifest: Manifest,
    pub asr_vocab: SubwordVocab,
    pub nlu_vocab: SubwordVocab,
}

/// Vocabulary with every word of `words` covered by one or two pieces.
pub fn build_vocab<'a>(kind: VocabKind, words: impl IntoIterator<Item = &'a str>) -> Result<SubwordVocab> {
    let mut pieces = BTreeSet::new();
    for w in words {
        let chars: Vec<char> = w.chars().collect();
        match kind {
            VocabKind::Bpe if chars.len() <= 4 => {
                pieces.insert(format!("▁{w}"));
            }
            VocabKind::Bpe => {
                pieces.insert(format!("▁{}", chars[..3].iter().collect::<String>()));
                pieces.insert(chars[3..].iter().collect());
            }
            VocabKind::WordPiece if chars.len() <= 5 => {
                pieces.insert(w.to_string());
            }
            VocabKind::WordPiece => {
                pieces.insert(chars[..2].iter().collect());
                pieces.insert(format!("##{}", chars[2..].iter().collect::<String>()));
            }
        }
    }
    SubwordVocab::new(kind, pieces.into_iter().collect(), kind.default_unk())
}

fn band_pair(token: usize, num_bands: usize) -> (usize, usize) {
    let usable = num_bands - 4;
    let a = token % usable;
    let b = (a + 4 + token / usable) % num_bands;
    (a, b)
}

/// Tone-coded audio for a subword id sequence.
pub fn render_tokens(ids: &[usize], frontend: &FrontendConfig) -> Vec<f64> {
    let per_token = (TOKEN_SECONDS * SAMPLE_RATE as f64) as usize;
    let band_hz = SAMPLE_RATE as f64 / 2.0 / frontend.num_bands as f64;
    let mut out = vec![0.0; EDGE_SILENCE];
    for &id in ids {
        let (a, b) = band_pair(id, frontend.num_bands);
        let (fa, fb) = ((a as f64 + 0.5) * band_hz, (b as f64 + 0.5) * band_hz);
        for n in 0..per_token {
            let t = n as f64 / SAMPLE_RATE as f64;
            let x = AMPLITUDE * ((2.0 * PI * fa * t).sin() + (2.0 * PI * fb * t).sin());
            // Snap to the 16-bit grid so WAV round trips are lossless.
            out.push((x * 32768.0).round() / 32768.0);
        }
    }
    out.extend(std::iter::repeat_n(0.0, EDGE_SILENCE));
    out
}

/// `size` distinct utterances drawn from the templates, with audio.
pub fn synthetic_corpus(size: usize, seed: u64, frontend: &FrontendConfig) -> Result<SyntheticCorpus> {
    let templates = templates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut drafts = Vec::new();
    let mut attempts = 0;
    while drafts.len() < size {
        attempts += 1;
        if attempts > size * 1000 {
            return Err(Error::Config(format!(
                "cannot draw {size} distinct synthetic utterances"
            )));
        }
        let (intent, parts) = &templates[drafts.len() % templates.len()];
        let mut words = Vec::new();
        let mut slots = Vec::new();
        let mut used = Vec::new();
        for part in parts {
            match part {
                Lit(text) => {
                    for w in text.split(' ') {
                        words.push(w.to_string());
                        slots.push("O".to_string());
                    }
                }
                Slot(label, values) => {
                    let choices: Vec<&&str> = values.iter().filter(|v| !used.contains(*v)).collect();
                    let value = **choices.choose(&mut rng).expect("value lists exceed slot count");
                    used.push(value);
                    for (i, w) in value.split(' ').enumerate() {
                        words.push(w.to_string());
                        slots.push(format!("{}-{label}", if i == 0 { "B" } else { "I" }));
                    }
                }
            }
        }
        if seen.insert(words.clone()) {
            drafts.push((words, slots, intent.to_string()));
        }
    }
    drafts.shuffle(&mut rng);

    let vocab_words: BTreeSet<&str> = drafts.iter().flat_map(|d| d.0.iter().map(String::as_str)).collect();
    let asr_vocab = build_vocab(VocabKind::Bpe, vocab_words.iter().copied())?;
    let nlu_vocab = build_vocab(VocabKind::WordPiece, vocab_words.iter().copied())?;

    let mut records = Vec::with_capacity(size);
    for (i, (words, slots, intent)) in drafts.into_iter().enumerate() {
        let id = format!("syn{i:03}");
        let tok = asr_vocab.tokenize(&words)?;
        let mut utt = Utterance::new(id.clone(), words, slots, intent)?;
        utt.audio_path = Some(format!("audio/{id}.wav"));
        utt.samples = Some(render_tokens(&tok.ids, frontend));
        records.push(utt);
    }
    Ok(SyntheticCorpus {
        manifest: Manifest::from_records(records)?,
        asr_vocab,
        nlu_vocab,
    })
}

/// Writes `manifest.jsonl`, `asr.vocab`, `nlu.vocab` and `audio/*.wav` under `dir`.
pub fn write_synthetic_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<()> {
    let audio = dir.join("audio");
    std::fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    for utt in &corpus.manifest.records {
        let samples = utt.samples.clone().expect("synthetic records carry samples");
        let clip = AudioClip::new(samples, SAMPLE_RATE)?;
        write_wav(
            &clip,
            dir.join(utt.audio_path.as_deref().expect("synthetic records have paths")),
        )?;
    }
    write_atomic(dir.join("manifest.jsonl"), corpus.manifest.to_jsonl().as_bytes())?;
    write_atomic(dir.join("asr.vocab"), corpus.asr_vocab.to_file_string().as_bytes())?;
    write_atomic(dir.join("nlu.vocab"), corpus.nlu_vocab.to_file_string().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape() {
        let c = synthetic_corpus(50, 7, &FrontendConfig::default()).unwrap();
        assert_eq!(c.manifest.len(), 50);
        assert_eq!(c.manifest.intent_vocabulary.len(), 3);
        assert_eq!(c.manifest.slot_vocabulary.len(), 5);
        for utt in &c.manifest.records {
            let asr = c.asr_vocab.tokenize(&utt.words).unwrap();
            assert!(!asr.ids.contains(&c.asr_vocab.unk_id()));
            assert_eq!(c.asr_vocab.detokenize(&asr.tokens), utt.words);
        }
    }

    #[test]
    fn band_pairs_are_distinct() {
        let pairs: BTreeSet<_> = (0..200).map(|k| band_pair(k, 32)).collect();
        assert_eq!(pairs.len(), 200);
        assert!(pairs.iter().all(|(a, b)| a != b));
    }
}
