//! Subword tokenization and word-level alignment of subword hidden states.
//!
//! Two piece conventions are supported. `Bpe` marks word-initial pieces with
//! `▁` (SentencePiece style); `WordPiece` marks continuation pieces with `##`.
//! Both are decoded by greedy longest-match. A word that cannot be covered
//! becomes a single unknown piece.
//!
//! For every tokenization the index of each word's first piece is recorded.
//! The binary matrix `M` (tokens × words) built from those indices maps
//! token-level hidden states to word level via `Mᵀ·H`, which lets the
//! outputs of two differently-tokenized encoders be concatenated per word.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

pub const BPE_MARKER: &str = "\u{2581}";
pub const WORDPIECE_MARKER: &str = "##";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    Bpe,
    WordPiece,
}

impl VocabKind {
    pub fn default_unk(self) -> &'static str {
        match self {
            VocabKind::Bpe => "<unk>",
            VocabKind::WordPiece => "[UNK]",
        }
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VocabKind::Bpe => "bpe",
            VocabKind::WordPiece => "wordpiece",
        })
    }
}

impl FromStr for VocabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bpe" => Ok(VocabKind::Bpe),
            "wordpiece" => Ok(VocabKind::WordPiece),
            other => Err(Error::Input(format!("unknown vocab kind `{other}`"))),
        }
    }
}

/// A fixed subword inventory. Piece ids are positions in `pieces`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct SubwordVocab {
    kind: VocabKind,
    pieces: Vec<String>,
    unk: String,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    kind: VocabKind,
    unk: String,
    pieces: Vec<String>,
}

impl TryFrom<VocabRepr> for SubwordVocab {
    type Error = Error;

    fn try_from(r: VocabRepr) -> Result<Self> {
        SubwordVocab::new(r.kind, r.pieces, r.unk)
    }
}

impl From<SubwordVocab> for VocabRepr {
    fn from(v: SubwordVocab) -> Self {
        VocabRepr {
            kind: v.kind,
            unk: v.unk,
            pieces: v.pieces,
        }
    }
}

impl SubwordVocab {
    /// Builds a vocabulary. `unk` is appended if it is not already present;
    /// duplicate pieces are dropped, keeping the first occurrence.
    pub fn new(kind: VocabKind, pieces: Vec<String>, unk: impl Into<String>) -> Result<Self> {
        let unk = unk.into();
        let mut out = Vec::with_capacity(pieces.len() + 1);
        let mut index = HashMap::new();
        for p in pieces.into_iter().chain(std::iter::once(unk.clone())) {
            let body = match kind {
                VocabKind::Bpe => p.strip_prefix(BPE_MARKER).unwrap_or(&p),
                VocabKind::WordPiece => p.strip_prefix(WORDPIECE_MARKER).unwrap_or(&p),
            };
            if body.is_empty() {
                return Err(Error::Input(format!("empty piece `{p}` in {kind} vocab")));
            }
            if !index.contains_key(&p) {
                index.insert(p.clone(), out.len());
                out.push(p);
            }
        }
        Ok(SubwordVocab {
            kind,
            pieces: out,
            unk,
            index,
        })
    }

    /// Parses the vocab file format: a `#kind: bpe|wordpiece` header, then
    /// one piece per line. An optional `#unk: <piece>` header overrides the
    /// default unknown piece.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut unk = None;
        let mut pieces = Vec::new();
        for line in text.lines() {
            if let Some(k) = line.strip_prefix("#kind:") {
                kind = Some(k.parse::<VocabKind>()?);
            } else if let Some(u) = line.strip_prefix("#unk:") {
                unk = Some(u.trim().to_string());
            } else if !line.is_empty() {
                pieces.push(line.to_string());
            }
        }
        let kind = kind.ok_or_else(|| Error::Input("vocab file lacks `#kind:` header".into()))?;
        let unk = unk.unwrap_or_else(|| kind.default_unk().to_string());
        SubwordVocab::new(kind, pieces, unk)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SubwordVocab::parse(&text)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("#kind: {}\n#unk: {}\n", self.kind, self.unk);
        for p in &self.pieces {
            out.push_str(p);
            out.push('\n');
        }
        out
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn unk(&self) -> &str {
        &self.unk
    }

    pub fn unk_id(&self) -> usize {
        self.index[&self.unk]
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    fn initial_piece(&self, body: &str) -> String {
        match self.kind {
            VocabKind::Bpe => format!("{BPE_MARKER}{body}"),
            VocabKind::WordPiece => body.to_string(),
        }
    }

    fn continuation_piece(&self, body: &str) -> String {
        match self.kind {
            VocabKind::Bpe => body.to_string(),
            VocabKind::WordPiece => format!("{WORDPIECE_MARKER}{body}"),
        }
    }

    /// Greedy longest-match pieces for one word, or `None` if it cannot be covered.
    fn split_word(&self, word: &str) -> Option<Vec<usize>> {
        let mut ids = Vec::new();
        let mut rest = word;
        while !rest.is_empty() {
            let bounds: Vec<usize> = rest
                .char_indices()
                .map(|(i, _)| i)
                .skip(1)
                .chain(std::iter::once(rest.len()))
                .collect();
            let found = bounds.iter().rev().find_map(|&end| {
                let body = &rest[..end];
                let piece = if ids.is_empty() {
                    self.initial_piece(body)
                } else {
                    self.continuation_piece(body)
                };
                self.id(&piece).map(|id| (id, end))
            });
            let (id, end) = found?;
            ids.push(id);
            rest = &rest[end..];
        }
        Some(ids)
    }

    /// True if `piece` starts a new word when decoding.
    pub fn is_word_initial(&self, piece: &str) -> bool {
        if piece == self.unk {
            return true;
        }
        match self.kind {
            VocabKind::Bpe => piece.starts_with(BPE_MARKER),
            VocabKind::WordPiece => !piece.starts_with(WORDPIECE_MARKER),
        }
    }

    fn strip_marker<'a>(&self, piece: &'a str) -> &'a str {
        match self.kind {
            VocabKind::Bpe => piece.strip_prefix(BPE_MARKER).unwrap_or(piece),
            VocabKind::WordPiece => piece.strip_prefix(WORDPIECE_MARKER).unwrap_or(piece),
        }
    }

    pub fn tokenize<S: AsRef<str>>(&self, words: &[S]) -> Result<TokenizationResult> {
        tokenize(words, self)
    }

    /// Re-merges pieces into words. A leading continuation piece starts a word.
    pub fn detokenize<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        for t in tokens {
            let t = t.as_ref();
            if self.is_word_initial(t) || words.is_empty() {
                words.push(self.strip_marker(t).to_string());
            } else {
                words.last_mut().expect("non-empty").push_str(self.strip_marker(t));
            }
        }
        words
    }
}

/// Subword pieces for a word sequence plus the index of each word's first piece.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizationResult {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub first_index: Vec<usize>,
}

impl TokenizationResult {
    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_words(&self) -> usize {
        self.first_index.len()
    }

    pub fn matrix(&self) -> Matrix {
        build_first_index_matrix(self).expect("tokenizer output is consistent")
    }
}

pub fn tokenize<S: AsRef<str>>(words: &[S], vocab: &SubwordVocab) -> Result<TokenizationResult> {
    let mut result = TokenizationResult {
        tokens: Vec::new(),
        ids: Vec::new(),
        first_index: Vec::with_capacity(words.len()),
    };
    for word in words {
        let word = word.as_ref();
        if word.is_empty() {
            return Err(Error::Input("empty word in tokenizer input".into()));
        }
        result.first_index.push(result.ids.len());
        let ids = vocab.split_word(word).unwrap_or_else(|| vec![vocab.unk_id()]);
        for id in ids {
            result.tokens.push(vocab.pieces[id].clone());
            result.ids.push(id);
        }
    }
    Ok(result)
}

/// Binary `(num_tokens × num_words)` matrix with `M[first_index[j]][j] = 1`.
pub fn build_first_index_matrix(result: &TokenizationResult) -> Result<Matrix> {
    let rows = result.num_tokens();
    let mut m = Array2::zeros((rows, result.num_words()));
    let mut prev = None;
    for (j, &i) in result.first_index.iter().enumerate() {
        if i >= rows || prev.is_some_and(|p| i <= p) {
            return Err(Error::Input(format!(
                "first_index[{j}] = {i} is out of range or not increasing ({rows} tokens)"
            )));
        }
        m[[i, j]] = 1.0;
        prev = Some(i);
    }
    Ok(m)
}

/// How subword states are reduced to one state per word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordPooling {
    #[default]
    First,
    Last,
    Mean,
}

/// Pooling matrix for `pooling`; equals [`build_first_index_matrix`] for `First`.
pub fn pooling_matrix(result: &TokenizationResult, pooling: WordPooling) -> Result<Matrix> {
    let first = build_first_index_matrix(result)?;
    if pooling == WordPooling::First {
        return Ok(first);
    }
    let n = result.num_tokens();
    let mut m = Array2::zeros(first.dim());
    for (j, &start) in result.first_index.iter().enumerate() {
        let end = result.first_index.get(j + 1).copied().unwrap_or(n);
        match pooling {
            WordPooling::Last => m[[end - 1, j]] = 1.0,
            WordPooling::Mean => {
                let w = 1.0 / (end - start) as f64;
                for i in start..end {
                    m[[i, j]] = w;
                }
            }
            WordPooling::First => unreachable!(),
        }
    }
    Ok(m)
}

/// `Mᵀ·H`: one hidden row per word.
pub fn project_to_words(m: &Matrix, h: &Matrix) -> Result<Matrix> {
    if m.nrows() != h.nrows() {
        return Err(Error::Dimension(format!(
            "alignment matrix has {} rows but hidden states have {}",
            m.nrows(),
            h.nrows()
        )));
    }
    Ok(m.t().dot(h))
}

/// Word-level concatenation `[Maᵀ·Ha, Mbᵀ·Hb]` of shape `N × (Fa + Fb)`.
pub fn concat_hidden(ha: &Matrix, hb: &Matrix, ma: &Matrix, mb: &Matrix) -> Result<Matrix> {
    if ma.ncols() != mb.ncols() {
        return Err(Error::Alignment(format!(
            "tokenizations disagree on word count: {} vs {}",
            ma.ncols(),
            mb.ncols()
        )));
    }
    let a = project_to_words(ma, ha)?;
    let b = project_to_words(mb, hb)?;
    Ok(concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts agree"))
}
