//! The joint ASR + NLU network.
//!
//! ASR branch: `E = tanh(X·W + P + b)` over subsampled features, where `P`
//! holds fixed sinusoidal position codes, then a recurrent subword decoder
//! with dot-product attention over `E`, run with teacher forcing. The decoder state after reading subword `i` is row `i`
//! of `Ha`.
//!
//! NLU branch: word-piece plus position embeddings followed by one
//! self-attention layer with a residual connection, giving `Hb`.
//!
//! Both are projected to word level through their first-index matrices and
//! concatenated into `Hcat` (`N × (Fa + Fb)`). Slot scores are a linear map
//! of `Hcat` rows; intent logits a linear map of the mean of `Hcat` rows with
//! a learned sentinel row prepended.

use std::cell::RefCell;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::autodiff::{log_softmax_rows, Reduction, Tape, Var};
use super::crf::{self, CrfView};
use super::decode::{beam_search, greedy_search, SequenceScorer};
use super::params::{Block, Gradients, Initializer, ModelParams, Param};
use super::subsample::subsample_features;
use crate::audio::FrontendConfig;
use crate::data::{Manifest, Utterance, OUTSIDE};
use crate::error::{Error, Result};
use crate::tokenize::{pooling_matrix, SubwordVocab, TokenizationResult, WordPooling};
use crate::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotHead {
    Linear,
    #[default]
    Crf,
}

/// Whether NLU losses reach the ASR branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientFlow {
    #[default]
    EndToEnd,
    /// Gradients stop at `Ha`; the ASR branch learns from its own loss only.
    TwoStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of the ASR hidden states (`Fa`).
    pub asr_dim: usize,
    /// Width of the NLU hidden states (`Fb`).
    pub nlu_dim: usize,
    pub feature_dim: usize,
    pub max_positions: usize,
    pub subsample_stride: usize,
    pub slot_head: SlotHead,
    pub gradient_flow: GradientFlow,
    pub word_pooling: WordPooling,
    pub label_smoothing: f64,
    pub frontend: FrontendConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let frontend = FrontendConfig::default();
        ModelConfig {
            asr_dim: 32,
            nlu_dim: 32,
            feature_dim: frontend.num_bands,
            max_positions: 64,
            subsample_stride: 2,
            slot_head: SlotHead::Crf,
            gradient_flow: GradientFlow::EndToEnd,
            word_pooling: WordPooling::First,
            label_smoothing: 0.1,
            frontend,
        }
    }
}

/// Which loss a gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Asr,
    Nlu,
    Slu,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub asr: f64,
    pub nlu: f64,
    pub slu: f64,
}

impl LossBreakdown {
    pub fn get(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Asr => self.asr,
            Objective::Nlu => self.nlu,
            Objective::Slu => self.slu,
        }
    }
}

/// A training or evaluation input prepared for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    /// Subsampled features.
    pub features: Matrix,
    pub asr: TokenizationResult,
    pub nlu: TokenizationResult,
    pub tags: Vec<usize>,
    pub intent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub ha: Matrix,
    pub hb: Matrix,
    pub hcat: Matrix,
    pub asr_logits: Matrix,
    pub slot_scores: Matrix,
    pub intent_logits: Matrix,
}

/// Output of two-step decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub words: Vec<String>,
    pub slots: Vec<String>,
    pub intent: String,
    pub asr_tokens: Vec<String>,
    pub asr_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ParamIds {
    enc_w: usize,
    enc_b: usize,
    dec_emb: usize,
    dec_u: usize,
    dec_bs: usize,
    dec_ws: usize,
    dec_wc: usize,
    dec_bh: usize,
    out_w: usize,
    out_b: usize,
    nlu_emb: usize,
    nlu_pos: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    bo: usize,
    sentinel: usize,
    ic_w: usize,
    ic_b: usize,
    sl_w: usize,
    sl_b: usize,
    crf: Option<[usize; 3]>,
}

impl ParamIds {
    fn resolve(params: &ModelParams, head: SlotHead) -> Result<Self> {
        let id = |name: &str| {
            params
                .id(name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
        };
        Ok(ParamIds {
            enc_w: id("asr.enc_w")?,
            enc_b: id("asr.enc_b")?,
            dec_emb: id("asr.dec_emb")?,
            dec_u: id("asr.dec_u")?,
            dec_bs: id("asr.dec_bs")?,
            dec_ws: id("asr.dec_ws")?,
            dec_wc: id("asr.dec_wc")?,
            dec_bh: id("asr.dec_bh")?,
            out_w: id("asr.out_w")?,
            out_b: id("asr.out_b")?,
            nlu_emb: id("nlu.emb")?,
            nlu_pos: id("nlu.pos")?,
            wq: id("nlu.wq")?,
            wk: id("nlu.wk")?,
            wv: id("nlu.wv")?,
            wo: id("nlu.wo")?,
            bo: id("nlu.bo")?,
            sentinel: id("ic.sentinel")?,
            ic_w: id("ic.w")?,
            ic_b: id("ic.b")?,
            sl_w: id("sl.w")?,
            sl_b: id("sl.b")?,
            crf: match head {
                SlotHead::Linear => None,
                SlotHead::Crf => Some([id("sl.crf_trans")?, id("sl.crf_start")?, id("sl.crf_end")?]),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub config: ModelConfig,
    pub asr_vocab: SubwordVocab,
    pub nlu_vocab: SubwordVocab,
    /// Slot tag inventory; index 0 is `O`.
    pub tags: Vec<String>,
    pub intents: Vec<String>,
    params: ModelParams,
    ids: ParamIds,
}

struct LossVars {
    graph: GraphVars,
    asr: Var,
    nlu: Var,
    slu: Var,
}

struct GraphVars {
    ha: Var,
    hb: Var,
    hcat: Var,
    asr_logits: Var,
    slot_scores: Var,
    intent_logits: Var,
}

/// `O` followed by `B-x`, `I-x` for every non-`O` slot label.
pub fn tag_inventory<'a>(labels: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    let mut tags = vec![OUTSIDE.to_string()];
    for l in labels {
        if l != OUTSIDE {
            tags.push(format!("B-{l}"));
            tags.push(format!("I-{l}"));
        }
    }
    tags
}

impl JointModel {
    /// Randomly initialized model.
    pub fn new(
        config: ModelConfig,
        asr_vocab: SubwordVocab,
        nlu_vocab: SubwordVocab,
        tags: Vec<String>,
        intents: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        if config.subsample_stride == 0 || config.max_positions == 0 {
            return Err(Error::Config(
                "subsample_stride and max_positions must be positive".into(),
            ));
        }
        if tags.is_empty() || intents.is_empty() {
            return Err(Error::Config("tag and intent inventories must be non-empty".into()));
        }
        let (fa, fb) = (config.asr_dim, config.nlu_dim);
        let fcat = fa + fb;
        let va = asr_vocab.len() + 1;
        let (k, ni) = (tags.len(), intents.len());
        let mut init = Initializer::new(seed);
        let mut params = Vec::new();
        let mut add = |name: &str, block: Block, value: Matrix| {
            params.push(Param {
                name: name.to_string(),
                block,
                value,
            })
        };
        let zeros = |r, c| Array2::zeros((r, c));
        add("asr.enc_w", Block::Asr, init.glorot(config.feature_dim, fa));
        add("asr.enc_b", Block::Asr, zeros(1, fa));
        add("asr.dec_emb", Block::Asr, init.uniform(va, fa, 0.5));
        add("asr.dec_u", Block::Asr, init.glorot(fa, fa));
        add("asr.dec_bs", Block::Asr, zeros(1, fa));
        add("asr.dec_ws", Block::Asr, init.glorot(fa, fa));
        add("asr.dec_wc", Block::Asr, init.glorot(fa, fa));
        add("asr.dec_bh", Block::Asr, zeros(1, fa));
        add("asr.out_w", Block::Asr, init.glorot(fa, va));
        add("asr.out_b", Block::Asr, zeros(1, va));
        add("nlu.emb", Block::NluEncoder, init.uniform(nlu_vocab.len(), fb, 0.5));
        add(
            "nlu.pos",
            Block::NluEncoder,
            init.uniform(config.max_positions, fb, 0.1),
        );
        add("nlu.wq", Block::NluEncoder, init.glorot(fb, fb));
        add("nlu.wk", Block::NluEncoder, init.glorot(fb, fb));
        add("nlu.wv", Block::NluEncoder, init.glorot(fb, fb));
        add("nlu.wo", Block::NluEncoder, init.glorot(fb, fb));
        add("nlu.bo", Block::NluEncoder, zeros(1, fb));
        add("ic.sentinel", Block::IcHead, init.uniform(1, fcat, 0.1));
        add("ic.w", Block::IcHead, init.glorot(fcat, ni));
        add("ic.b", Block::IcHead, zeros(1, ni));
        add("sl.w", Block::SlHead, init.glorot(fcat, k));
        add("sl.b", Block::SlHead, zeros(1, k));
        if config.slot_head == SlotHead::Crf {
            add("sl.crf_trans", Block::SlHead, zeros(k, k));
            add("sl.crf_start", Block::SlHead, zeros(1, k));
            add("sl.crf_end", Block::SlHead, zeros(1, k));
        }
        JointModel::from_parts(config, asr_vocab, nlu_vocab, tags, intents, ModelParams::new(params)?)
    }

    /// Model whose tag and intent inventories cover `manifest`.
    pub fn for_manifest(
        config: ModelConfig,
        asr_vocab: SubwordVocab,
        nlu_vocab: SubwordVocab,
        manifest: &Manifest,
        seed: u64,
    ) -> Result<Self> {
        let tags = tag_inventory(&manifest.slot_vocabulary);
        let intents = manifest.intent_vocabulary.iter().cloned().collect();
        JointModel::new(config, asr_vocab, nlu_vocab, tags, intents, seed)
    }

    pub fn from_parts(
        config: ModelConfig,
        asr_vocab: SubwordVocab,
        nlu_vocab: SubwordVocab,
        tags: Vec<String>,
        intents: Vec<String>,
        params: ModelParams,
    ) -> Result<Self> {
        let ids = ParamIds::resolve(&params, config.slot_head)?;
        let model = JointModel {
            config,
            asr_vocab,
            nlu_vocab,
            tags,
            intents,
            params,
            ids,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let (fa, fb) = (c.asr_dim, c.nlu_dim);
        let fcat = fa + fb;
        let va = self.asr_vocab.len() + 1;
        let (k, ni) = (self.tags.len(), self.intents.len());
        let i = &self.ids;
        let mut expect = vec![
            (i.enc_w, (c.feature_dim, fa)),
            (i.enc_b, (1, fa)),
            (i.dec_emb, (va, fa)),
            (i.dec_u, (fa, fa)),
            (i.dec_bs, (1, fa)),
            (i.dec_ws, (fa, fa)),
            (i.dec_wc, (fa, fa)),
            (i.dec_bh, (1, fa)),
            (i.out_w, (fa, va)),
            (i.out_b, (1, va)),
            (i.nlu_emb, (self.nlu_vocab.len(), fb)),
            (i.nlu_pos, (c.max_positions, fb)),
            (i.wq, (fb, fb)),
            (i.wk, (fb, fb)),
            (i.wv, (fb, fb)),
            (i.wo, (fb, fb)),
            (i.bo, (1, fb)),
            (i.sentinel, (1, fcat)),
            (i.ic_w, (fcat, ni)),
            (i.ic_b, (1, ni)),
            (i.sl_w, (fcat, k)),
            (i.sl_b, (1, k)),
        ];
        if let Some([t, s, e]) = i.crf {
            expect.extend([(t, (k, k)), (s, (1, k)), (e, (1, k))]);
        }
        for (id, shape) in expect {
            let p = self.params.get(id);
            if p.value.dim() != shape {
                return Err(Error::Dimension(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name,
                    p.value.dim(),
                    shape
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub(crate) fn into_params(self) -> ModelParams {
        self.params
    }

    /// Id of the end (and start) symbol of the ASR decoder.
    pub fn eos(&self) -> usize {
        self.asr_vocab.len()
    }

    pub fn tag_id(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn intent_id(&self, intent: &str) -> Option<usize> {
        self.intents.iter().position(|t| t == intent)
    }

    /// Front-end features of raw samples.
    pub fn features(&self, samples: &[f64]) -> Matrix {
        crate::audio::log_band_energies(samples, &self.config.frontend)
    }

    /// Tokenizes, indexes labels and subsamples `features` for one utterance.
    pub fn example(&self, utt: &Utterance, features: &Matrix) -> Result<Example> {
        self.example_from(&utt.id, &utt.words, &utt.slots, &utt.intent, features)
    }

    pub fn example_from<S: AsRef<str>>(
        &self,
        id: &str,
        words: &[S],
        slots: &[S],
        intent: &str,
        features: &Matrix,
    ) -> Result<Example> {
        if words.len() != slots.len() {
            return Err(Error::Validation(format!(
                "record `{id}`: words and slots differ in length"
            )));
        }
        if features.ncols() != self.config.feature_dim {
            return Err(Error::Dimension(format!(
                "record `{id}`: features have {} columns, model expects {}",
                features.ncols(),
                self.config.feature_dim
            )));
        }
        let tags = slots
            .iter()
            .map(|s| {
                self.tag_id(s.as_ref())
                    .ok_or_else(|| Error::Input(format!("record `{id}`: unknown slot tag `{}`", s.as_ref())))
            })
            .collect::<Result<_>>()?;
        let intent = self
            .intent_id(intent)
            .ok_or_else(|| Error::Input(format!("record `{id}`: unknown intent `{intent}`")))?;
        Ok(Example {
            id: id.to_string(),
            features: subsample_features(features, self.config.subsample_stride)?,
            asr: self.asr_vocab.tokenize(words)?,
            nlu: self.nlu_vocab.tokenize(words)?,
            tags,
            intent,
        })
    }

    fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> Vec<Var> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, &p.value))
            .collect()
    }

    fn encode(&self, tape: &mut Tape<'_>, v: &[Var], features: Var) -> Var {
        let i = &self.ids;
        let frames = tape.value(features).nrows();
        let e = tape.matmul(features, v[i.enc_w]);
        let pos = tape.constant(sinusoid_positions(frames, self.config.asr_dim));
        let e = tape.add(e, pos);
        let e = tape.add_row(e, v[i.enc_b]);
        tape.tanh(e)
    }

    fn initial_state(&self, tape: &mut Tape<'_>) -> Var {
        tape.constant(Array2::zeros((1, self.config.asr_dim)))
    }

    /// One decoder step: reads `token`, returns the new state and next-token logits.
    fn decoder_step(&self, tape: &mut Tape<'_>, v: &[Var], enc: Var, prev: Var, token: usize) -> (Var, Var) {
        let i = &self.ids;
        let emb = tape.gather_rows(v[i.dec_emb], &[token]);
        let rec = tape.matmul(prev, v[i.dec_u]);
        let s = tape.add(emb, rec);
        let s = tape.add_row(s, v[i.dec_bs]);
        let s = tape.tanh(s);
        let scores = tape.matmul_nt(s, enc);
        let scores = tape.scale(scores, 1.0 / (self.config.asr_dim as f64).sqrt());
        let attn = tape.softmax_rows(scores);
        let ctx = tape.matmul(attn, enc);
        let a = tape.matmul(s, v[i.dec_ws]);
        let b = tape.matmul(ctx, v[i.dec_wc]);
        let h = tape.add(a, b);
        let h = tape.add_row(h, v[i.dec_bh]);
        let h = tape.tanh(h);
        let logits = tape.matmul(h, v[i.out_w]);
        let logits = tape.add_row(logits, v[i.out_b]);
        (h, logits)
    }

    /// Teacher-forced decoder over `tokens`; returns logits for
    /// `[tokens.., eos]` and `Ha` (one row per token).
    fn teacher_forced(&self, tape: &mut Tape<'_>, v: &[Var], enc: Var, tokens: &[usize]) -> (Var, Var) {
        let mut state = self.initial_state(tape);
        let mut logits = Vec::with_capacity(tokens.len() + 1);
        let mut states = Vec::with_capacity(tokens.len());
        for (step, &tok) in std::iter::once(&self.eos()).chain(tokens).enumerate() {
            let (h, l) = self.decoder_step(tape, v, enc, state, tok);
            if step > 0 {
                states.push(h);
            }
            logits.push(l);
            state = h;
        }
        let logits = tape.concat_rows(&logits);
        let ha = if states.is_empty() {
            tape.constant(Array2::zeros((0, self.config.asr_dim)))
        } else {
            tape.concat_rows(&states)
        };
        (logits, ha)
    }

    fn nlu_encode(&self, tape: &mut Tape<'_>, v: &[Var], ids: &[usize]) -> Var {
        let fb = self.config.nlu_dim;
        if ids.is_empty() {
            return tape.constant(Array2::zeros((0, fb)));
        }
        let i = &self.ids;
        let positions: Vec<usize> = (0..ids.len()).map(|p| p.min(self.config.max_positions - 1)).collect();
        let emb = tape.gather_rows(v[i.nlu_emb], ids);
        let pos = tape.gather_rows(v[i.nlu_pos], &positions);
        let x = tape.add(emb, pos);
        let q = tape.matmul(x, v[i.wq]);
        let k = tape.matmul(x, v[i.wk]);
        let val = tape.matmul(x, v[i.wv]);
        let scores = tape.matmul_nt(q, k);
        let scores = tape.scale(scores, 1.0 / (fb as f64).sqrt());
        let attn = tape.softmax_rows(scores);
        let mixed = tape.matmul(attn, val);
        let mixed = tape.matmul(mixed, v[i.wo]);
        let h = tape.add(x, mixed);
        let h = tape.add_row(h, v[i.bo]);
        tape.tanh(h)
    }

    fn graph<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        v: &[Var],
        features: Var,
        asr: &TokenizationResult,
        nlu: &TokenizationResult,
    ) -> Result<GraphVars> {
        if asr.num_words() != nlu.num_words() {
            return Err(Error::Alignment(format!(
                "ASR tokenization has {} words, NLU tokenization {}",
                asr.num_words(),
                nlu.num_words()
            )));
        }
        let i = &self.ids;
        let enc = self.encode(tape, v, features);
        let (asr_logits, ha) = self.teacher_forced(tape, v, enc, &asr.ids);
        let hb = self.nlu_encode(tape, v, &nlu.ids);
        tape.check_finite(ha, "Ha")?;
        tape.check_finite(hb, "Hb")?;

        let ha_for_nlu = match self.config.gradient_flow {
            GradientFlow::EndToEnd => ha,
            GradientFlow::TwoStage => tape.stop_grad(ha),
        };
        let ma = tape.constant(pooling_matrix(asr, self.config.word_pooling)?);
        let mb = tape.constant(pooling_matrix(nlu, self.config.word_pooling)?);
        let wa = tape.t_matmul(ma, ha_for_nlu);
        let wb = tape.t_matmul(mb, hb);
        let hcat = tape.concat_cols(wa, wb);

        let with_sentinel = tape.concat_rows(&[v[i.sentinel], hcat]);
        let pooled = tape.mean_rows(with_sentinel);
        let intent_logits = tape.matmul(pooled, v[i.ic_w]);
        let intent_logits = tape.add_row(intent_logits, v[i.ic_b]);
        let slot_scores = tape.matmul(hcat, v[i.sl_w]);
        let slot_scores = tape.add_row(slot_scores, v[i.sl_b]);
        for (var, name) in [
            (asr_logits, "asr_logits"),
            (slot_scores, "slot_scores"),
            (intent_logits, "intent_logits"),
        ] {
            tape.check_finite(var, name)?;
        }
        Ok(GraphVars {
            ha,
            hb,
            hcat,
            asr_logits,
            slot_scores,
            intent_logits,
        })
    }

    fn loss_vars<'a>(&'a self, tape: &mut Tape<'a>, v: &[Var], ex: &'a Example) -> Result<LossVars> {
        let features = tape.constant_ref(&ex.features);
        let graph = self.graph(tape, v, features, &ex.asr, &ex.nlu)?;
        if ex.tags.len() != ex.asr.num_words() {
            return Err(Error::Input(format!(
                "record `{}`: one slot tag per word required",
                ex.id
            )));
        }
        let mut targets = ex.asr.ids.clone();
        targets.push(self.eos());
        let asr = tape.cross_entropy(graph.asr_logits, &targets, self.config.label_smoothing, Reduction::Mean);
        let slot = match self.ids.crf {
            None => tape.cross_entropy(graph.slot_scores, &ex.tags, 0.0, Reduction::Sum),
            Some([t, s, e]) => tape.crf_nll(graph.slot_scores, v[t], v[s], v[e], &ex.tags),
        };
        let intent = tape.cross_entropy(graph.intent_logits, &[ex.intent], 0.0, Reduction::Sum);
        let nlu = tape.add(slot, intent);
        let slu = tape.add(asr, nlu);
        tape.check_finite(slu, "loss_slu")?;
        Ok(LossVars { graph, asr, nlu, slu })
    }

    fn breakdown(tape: &Tape<'_>, l: &LossVars) -> LossBreakdown {
        LossBreakdown {
            asr: tape.scalar(l.asr),
            nlu: tape.scalar(l.nlu),
            slu: tape.scalar(l.slu),
        }
    }

    /// All intermediate matrices of a teacher-forced forward pass.
    pub fn forward(&self, ex: &Example) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let v = self.bind(&mut tape);
        let features = tape.constant_ref(&ex.features);
        let g = self.graph(&mut tape, &v, features, &ex.asr, &ex.nlu)?;
        Ok(ForwardOutput {
            ha: tape.value(g.ha).clone(),
            hb: tape.value(g.hb).clone(),
            hcat: tape.value(g.hcat).clone(),
            asr_logits: tape.value(g.asr_logits).clone(),
            slot_scores: tape.value(g.slot_scores).clone(),
            intent_logits: tape.value(g.intent_logits).clone(),
        })
    }

    pub fn losses(&self, ex: &Example) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let v = self.bind(&mut tape);
        let l = self.loss_vars(&mut tape, &v, ex)?;
        Ok(Self::breakdown(&tape, &l))
    }

    /// Losses and exact gradients of `objective` for every parameter.
    pub fn gradients(&self, ex: &Example, objective: Objective) -> Result<(LossBreakdown, Gradients)> {
        let mut tape = Tape::new();
        let v = self.bind(&mut tape);
        let l = self.loss_vars(&mut tape, &v, ex)?;
        let root = match objective {
            Objective::Asr => l.asr,
            Objective::Nlu => l.nlu,
            Objective::Slu => l.slu,
        };
        let raw = tape.backward(root, self.params.len());
        for (g, p) in raw.iter().zip(self.params.iter()) {
            if let Some(g) = g {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Numeric {
                        tensor: format!("grad({})", p.name),
                        message: "non-finite gradient".into(),
                    });
                }
            }
        }
        let _ = l.graph.hcat;
        Ok((Self::breakdown(&tape, &l), Gradients::from_tape(raw, &self.params)))
    }

    /// Teacher-forced log-probability of `tokens` followed by the end symbol.
    pub fn sequence_log_prob(&self, features: &Matrix, tokens: &[usize]) -> Result<f64> {
        let feats = subsample_features(features, self.config.subsample_stride)?;
        let mut tape = Tape::new();
        let v = self.bind(&mut tape);
        let f = tape.constant(feats);
        let enc = self.encode(&mut tape, &v, f);
        let (logits, _) = self.teacher_forced(&mut tape, &v, enc, tokens);
        let logp = log_softmax_rows(tape.value(logits));
        Ok(tokens
            .iter()
            .chain(std::iter::once(&self.eos()))
            .enumerate()
            .map(|(r, &t)| logp[[r, t]])
            .sum())
    }

    fn scorer<'a>(&'a self, features: &Matrix) -> Result<AsrScorer<'a>> {
        let feats = subsample_features(features, self.config.subsample_stride)?;
        if feats.ncols() != self.config.feature_dim {
            return Err(Error::Dimension(format!(
                "features have {} columns, model expects {}",
                feats.ncols(),
                self.config.feature_dim
            )));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let f = tape.constant(feats);
        let enc = self.encode(&mut tape, &vars, f);
        Ok(AsrScorer {
            model: self,
            tape: RefCell::new(tape),
            vars,
            enc,
        })
    }

    /// Subword hypotheses of the ASR branch, best first.
    pub fn asr_beam(&self, features: &Matrix, beam_size: usize, max_len: usize) -> Result<Vec<super::Hypothesis>> {
        beam_search(&self.scorer(features)?, beam_size, max_len)
    }

    pub fn asr_greedy(&self, features: &Matrix, max_len: usize) -> Result<super::Hypothesis> {
        Ok(greedy_search(&self.scorer(features)?, max_len))
    }

    /// Transcribes with beam search, then labels the top hypothesis.
    ///
    /// The best subword sequence is merged into words `w*`; `w*` is then
    /// re-tokenized for both branches and, together with the same audio
    /// features, yields the intent (argmax) and slot tags (Viterbi under
    /// the CRF head, per-word argmax otherwise).
    pub fn decode_two_step(&self, features: &Matrix, beam_size: usize, max_len: usize) -> Result<Decoded> {
        let best = self
            .asr_beam(features, beam_size, max_len)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Decode("empty beam".into()))?;
        let asr_tokens: Vec<String> = best
            .tokens
            .iter()
            .map(|&t| self.asr_vocab.piece(t).expect("decoder emits vocab ids").to_string())
            .collect();
        let words = self.asr_vocab.detokenize(&asr_tokens);
        let (slots, intent) = self.label(features, &words)?;
        Ok(Decoded {
            words,
            slots,
            intent,
            asr_tokens,
            asr_score: best.score,
        })
    }

    /// Intent and slot tags for a given transcript and audio.
    pub fn label<S: AsRef<str>>(&self, features: &Matrix, words: &[S]) -> Result<(Vec<String>, String)> {
        let feats = subsample_features(features, self.config.subsample_stride)?;
        let asr = self.asr_vocab.tokenize(words)?;
        let nlu = self.nlu_vocab.tokenize(words)?;
        let mut tape = Tape::new();
        let v = self.bind(&mut tape);
        let f = tape.constant(feats);
        let g = self.graph(&mut tape, &v, f, &asr, &nlu)?;
        let scores = tape.value(g.slot_scores);
        let path = match self.ids.crf {
            Some([t, s, e]) => crf::viterbi(
                scores,
                &CrfView {
                    transitions: &self.params.get(t).value,
                    start: &self.params.get(s).value,
                    end: &self.params.get(e).value,
                },
            ),
            None => scores.rows().into_iter().map(|r| argmax(r.iter())).collect(),
        };
        let intent = argmax(tape.value(g.intent_logits).iter());
        Ok((
            path.into_iter().map(|t| self.tags[t].clone()).collect(),
            self.intents[intent].clone(),
        ))
    }
}

/// Fixed sinusoidal position codes; attention over frames is otherwise
/// blind to their order.
fn sinusoid_positions(rows: usize, dim: usize) -> Matrix {
    Array2::from_shape_fn((rows, dim), |(t, j)| {
        let rate = 1.0 / 100f64.powf((j / 2 * 2) as f64 / dim as f64);
        let angle = t as f64 * rate;
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

struct AsrScorer<'a> {
    model: &'a JointModel,
    tape: RefCell<Tape<'a>>,
    vars: Vec<Var>,
    enc: Var,
}

impl AsrScorer<'_> {
    fn step(&self, state: Var, token: usize) -> (Var, Vec<f64>) {
        let mut tape = self.tape.borrow_mut();
        let (h, logits) = self.model.decoder_step(&mut tape, &self.vars, self.enc, state, token);
        let logp = log_softmax_rows(tape.value(logits));
        (h, logp.row(0).to_vec())
    }
}

impl SequenceScorer for AsrScorer<'_> {
    type State = Var;

    fn start(&self) -> (Var, Vec<f64>) {
        let init = self.model.initial_state(&mut self.tape.borrow_mut());
        self.step(init, self.model.eos())
    }

    fn advance(&self, state: &Var, token: usize) -> (Var, Vec<f64>) {
        self.step(*state, token)
    }

    fn eos(&self) -> usize {
        self.model.eos()
    }
}
