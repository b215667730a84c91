use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use slu_core::audio::{augment_corpus, read_wav, write_wav, AudioClip, AugmentSpec, NoisePool, Split};
use slu_core::data::{normalize_text, parse_manifest, Manifest, Record, Utterance, SAMPLE_RATE};
use slu_core::fsutil::write_atomic;
use slu_core::metrics::{align, intent_f1, span_slot_f1, tally_utterance, EditCounts, SlotMatchMode, SlotScoreReport};
use slu_core::model::synth::{synthetic_corpus, write_synthetic_corpus};
use slu_core::model::{
    checkpoint_from_str, checkpoint_to_string, decode_manifest, load_samples, prepare_examples, train, JointModel,
    TrainConfig,
};
use slu_core::tokenize::SubwordVocab;
use slu_core::{Error, Result};

use crate::args::*;

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

fn to_json<T: Serialize>(value: &T, pretty: bool) -> Result<String> {
    let mut s = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    s.push('\n');
    Ok(s)
}

/// Writes `text` atomically to `out`, or prints it.
fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn validate(args: &ValidateArgs, pretty: bool) -> Result<()> {
    let mut reports = Vec::new();
    for path in &args.manifests {
        let m = parse_manifest(path).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        if args.check_audio {
            for utt in &m.records {
                let Some(p) = m.audio_path(utt) else { continue };
                let clip = read_wav(&p).map_err(|e| Error::Validation(format!("record `{}`: {e}", utt.id)))?;
                if clip.sample_rate != SAMPLE_RATE {
                    return Err(Error::Validation(format!(
                        "record `{}`: {} Hz audio, expected {SAMPLE_RATE}",
                        utt.id, clip.sample_rate
                    )));
                }
            }
        }
        let conflicts = m.slot_conflicts();
        for c in &conflicts {
            log::warn!(
                "{}: word `{}` carries several slot labels: {:?}",
                path.display(),
                c.word,
                c.labels
            );
        }
        reports.push(json!({
            "manifest": path.display().to_string(),
            "records": m.len(),
            "slot_labels": m.slot_vocabulary,
            "intents": m.intent_vocabulary,
            "conflicting_words": conflicts.iter().map(|c| &c.word).collect::<Vec<_>>(),
        }));
    }
    emit(&to_json(&reports, pretty)?, None)
}

pub fn tokenize(args: &TokenizeArgs, pretty: bool) -> Result<()> {
    let vocab = SubwordVocab::from_file(&args.vocab)?;
    let inputs: Vec<(String, Vec<String>)> = match (&args.manifest, &args.text) {
        (Some(path), _) => parse_manifest(path)?
            .records
            .into_iter()
            .map(|u| (u.id, u.words))
            .collect(),
        (None, Some(text)) => vec![("text".to_string(), normalize_text(text))],
        (None, None) => return Err(Error::Config("either --manifest or --text is required".into())),
    };
    let mut out = String::new();
    for (id, words) in inputs {
        let t = vocab.tokenize(&words)?;
        let line = json!({
            "id": id,
            "words": words,
            "tokens": t.tokens,
            "ids": t.ids,
            "first_index": t.first_index,
        });
        out.push_str(&to_json(&line, pretty)?);
    }
    emit(&out, args.out.as_deref())
}

/// Hypotheses in reference order; every reference needs exactly one.
fn pair_by_id<'a>(refs: &'a Manifest, hyps: &'a Manifest) -> Result<Vec<(&'a Utterance, &'a Utterance)>> {
    let by_id: HashMap<&str, &Utterance> = hyps.records.iter().map(|u| (u.id.as_str(), u)).collect();
    if hyps.len() != refs.len() {
        return Err(Error::Validation(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    refs.records
        .iter()
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .map(|h| (r, *h))
                .ok_or_else(|| Error::Validation(format!("no hypothesis for reference `{}`", r.id)))
        })
        .collect()
}

fn corpus_counts(pairs: &[(&Utterance, &Utterance)]) -> Result<(EditCounts, usize)> {
    let ref_words: usize = pairs.iter().map(|(r, _)| r.words.len()).sum();
    if ref_words == 0 {
        return Err(Error::Validation(
            "references contain no words; WER is undefined".into(),
        ));
    }
    let counts = pairs
        .par_iter()
        .map(|(r, h)| align(&r.words, &h.words).counts())
        .reduce(EditCounts::default, |a, b| EditCounts {
            matches: a.matches + b.matches,
            substitutions: a.substitutions + b.substitutions,
            deletions: a.deletions + b.deletions,
            insertions: a.insertions + b.insertions,
        });
    Ok((counts, ref_words))
}

pub fn score(args: &ScoreArgs, pretty: bool) -> Result<()> {
    let refs = parse_manifest(&args.refs)?;
    let hyps = parse_manifest(&args.hyps)?;
    let pairs = pair_by_id(&refs, &hyps)?;
    let metrics = if args.metrics.is_empty() {
        vec![Metric::Wer, Metric::SlotsEditF1, Metric::SpanF1, Metric::IntentF1]
    } else {
        args.metrics.clone()
    };
    let mode = match args.match_mode {
        MatchMode::WordAndLabel => SlotMatchMode::WordAndLabel,
        MatchMode::LabelOnly => SlotMatchMode::LabelOnly,
    };
    let tagged = |u: &Utterance| (u.words.clone(), u.slots.clone());
    let report = pool(args.jobs)?.install(|| -> Result<BTreeMap<&str, Value>> {
        let mut report = BTreeMap::new();
        report.insert("utterances", json!(pairs.len()));
        for m in &metrics {
            match m {
                Metric::Wer => {
                    let (c, n) = corpus_counts(&pairs)?;
                    report.insert(
                        "wer",
                        json!({
                            "wer": c.errors() as f64 / n as f64,
                            "substitutions": c.substitutions,
                            "deletions": c.deletions,
                            "insertions": c.insertions,
                            "reference_words": n,
                        }),
                    );
                }
                Metric::SlotsEditF1 => {
                    let tallies = pairs
                        .par_iter()
                        .map(|(r, h)| {
                            let mut t = BTreeMap::new();
                            tally_utterance((&r.words, &r.slots), (&h.words, &h.slots), mode, &mut t);
                            t
                        })
                        .reduce(BTreeMap::new, |mut a, b| {
                            for (k, v) in b {
                                *a.entry(k).or_default() += v;
                            }
                            a
                        });
                    report.insert(
                        "slots_edit_f1",
                        serde_json::to_value(SlotScoreReport::from_tallies(tallies))?,
                    );
                }
                Metric::SpanF1 => {
                    if args.metrics.is_empty() && pairs.iter().any(|(r, h)| r.words.len() != h.words.len()) {
                        log::warn!("span F1 skipped: some hypotheses differ in length from their references");
                        report.insert("span_f1", Value::Null);
                        continue;
                    }
                    let owned: Vec<_> = pairs.iter().map(|(r, h)| (tagged(r), tagged(h))).collect();
                    let r: Vec<_> = owned.iter().map(|(r, _)| (&r.0[..], &r.1[..])).collect();
                    let h: Vec<_> = owned.iter().map(|(_, h)| (&h.0[..], &h.1[..])).collect();
                    report.insert("span_f1", serde_json::to_value(span_slot_f1(&r, &h)?)?);
                }
                Metric::IntentF1 => {
                    let r: Vec<&str> = pairs.iter().map(|(r, _)| r.intent.as_str()).collect();
                    let h: Vec<&str> = pairs.iter().map(|(_, h)| h.intent.as_str()).collect();
                    report.insert("intent_f1", json!(intent_f1(&r, &h)?));
                }
            }
        }
        Ok(report)
    })?;
    let text = if pretty {
        score_table(&report)
    } else {
        to_json(&report, false)?
    };
    emit(&text, args.out.as_deref())
}

fn score_table(report: &BTreeMap<&str, Value>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>10}", "metric", "value");
    if let Some(w) = report.get("wer") {
        let _ = writeln!(s, "{:<16} {:>10.4}", "wer", w["wer"].as_f64().unwrap_or(f64::NAN));
    }
    for key in ["slots_edit_f1", "span_f1"] {
        if let Some(r) = report.get(key) {
            if r.is_null() {
                let _ = writeln!(s, "{:<16} {:>10}", key, "skipped");
                continue;
            }
            let _ = writeln!(s, "{:<16} {:>10.4}", key, r["f1"].as_f64().unwrap_or(f64::NAN));
            if let Some(labels) = r["per_label"].as_object() {
                for (label, t) in labels {
                    let n = |k: &str| t[k].as_u64().unwrap_or(0);
                    let _ = writeln!(
                        s,
                        "  {:<14} tp {:>5} fp {:>5} fn {:>5}",
                        label,
                        n("tp"),
                        n("fp"),
                        n("fn")
                    );
                }
            }
        }
    }
    if let Some(v) = report.get("intent_f1") {
        let _ = writeln!(s, "{:<16} {:>10.4}", "intent_f1", v.as_f64().unwrap_or(f64::NAN));
    }
    s
}

pub fn wer(args: &WerArgs, pretty: bool) -> Result<()> {
    let (refs, hyps) = match (&args.ref_text, &args.hyp_text, &args.refs, &args.hyps) {
        (Some(r), Some(h), _, _) => {
            let utt = |words: Vec<String>| {
                let n = words.len();
                Utterance::new("text", words, vec!["O".to_string(); n], "none")
            };
            (
                Manifest::from_records(vec![utt(normalize_text(r))?])?,
                Manifest::from_records(vec![utt(normalize_text(h))?])?,
            )
        }
        (_, _, Some(r), Some(h)) => (parse_manifest(r)?, parse_manifest(h)?),
        _ => return Err(Error::Config("give --refs/--hyps or --ref-text/--hyp-text".into())),
    };
    let pairs = pair_by_id(&refs, &hyps)?;
    let (c, n) = corpus_counts(&pairs)?;
    let per_utt: Vec<Value> = pairs
        .iter()
        .map(|(r, h)| {
            let c = align(&r.words, &h.words).counts();
            json!({
                "id": r.id,
                "errors": c.errors(),
                "reference_words": r.words.len(),
                "substitutions": c.substitutions,
                "deletions": c.deletions,
                "insertions": c.insertions,
            })
        })
        .collect();
    let report = json!({
        "wer": c.errors() as f64 / n as f64,
        "substitutions": c.substitutions,
        "deletions": c.deletions,
        "insertions": c.insertions,
        "reference_words": n,
        "utterances": per_utt,
    });
    emit(&to_json(&report, pretty)?, args.out.as_deref())
}

pub fn augment(args: &AugmentArgs, pretty: bool) -> Result<()> {
    let mut manifest = parse_manifest(&args.manifest)?;
    let noise = NoisePool::from_dir(&args.noise_dir)?;
    let spec = AugmentSpec {
        random_offset: args.random_offset,
        ..AugmentSpec::with_levels(args.snr.clone(), args.seed)
    };
    log::info!("augmentation: {spec:?}");
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let corpus = pool(args.jobs)?.install(|| -> Result<_> {
        let samples: Vec<Vec<f64>> = manifest
            .records
            .par_iter()
            .map(|u| load_samples(&manifest, u))
            .collect::<Result<_>>()?;
        for (u, s) in manifest.records.iter_mut().zip(samples) {
            u.samples = Some(s);
        }
        let corpus = augment_corpus(&manifest, &noise, &spec, split)?;
        corpus
            .manifest
            .records
            .par_iter()
            .map(|u| {
                let clip = AudioClip::new(u.samples.clone().expect("augmented audio"), SAMPLE_RATE)?;
                write_wav(
                    &clip,
                    args.out_dir.join(u.audio_path.as_deref().expect("augmented path")),
                )
            })
            .collect::<Result<()>>()?;
        Ok(corpus)
    })?;
    write_atomic(
        args.out_dir.join("manifest.jsonl"),
        corpus.manifest.to_jsonl().as_bytes(),
    )?;
    write_atomic(
        args.out_dir.join("provenance.json"),
        to_json(&corpus.provenance, true)?.as_bytes(),
    )?;
    let summary = json!({
        "records": corpus.manifest.len(),
        "clipped_samples": corpus.clipped_total(),
        "out_dir": args.out_dir.display().to_string(),
    });
    emit(&to_json(&summary, pretty)?, None)
}

pub fn synth(args: &SynthArgs, pretty: bool) -> Result<()> {
    let config = TrainConfig {
        asr_vocab: Some(PathBuf::from("asr.vocab")),
        nlu_vocab: Some(PathBuf::from("nlu.vocab")),
        seed: args.seed,
        ..TrainConfig::default()
    };
    let corpus = synthetic_corpus(args.size, args.seed, &config.model.frontend)?;
    write_synthetic_corpus(&corpus, &args.out_dir)?;
    write_atomic(args.out_dir.join("train.json"), to_json(&config, true)?.as_bytes())?;
    let summary = json!({
        "records": corpus.manifest.len(),
        "asr_vocab": corpus.asr_vocab.len(),
        "nlu_vocab": corpus.nlu_vocab.len(),
        "out_dir": args.out_dir.display().to_string(),
    });
    emit(&to_json(&summary, pretty)?, None)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

pub fn train_toy(args: &TrainArgs, pretty: bool) -> Result<()> {
    let mut config: TrainConfig = serde_json::from_str(&read_text(&args.config)?)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    log::info!("training configuration: {}", serde_json::to_string(&config)?);
    let base = args.config.parent().unwrap_or(Path::new("."));
    let vocab = |p: &Option<PathBuf>, which: &str| -> Result<SubwordVocab> {
        let p = p
            .as_ref()
            .ok_or_else(|| Error::Config(format!("config lacks `{which}`")))?;
        SubwordVocab::from_file(resolve(base, p))
    };
    let asr = vocab(&config.asr_vocab, "asr_vocab")?;
    let nlu = vocab(&config.nlu_vocab, "nlu_vocab")?;
    let manifest = parse_manifest(&args.manifest)?;
    let mut model = JointModel::for_manifest(config.model, asr, nlu, &manifest, config.seed)?;
    let examples = prepare_examples(&model, &manifest)?;
    let logs = train(&mut model, &examples, &config)?;
    write_atomic(&args.out, checkpoint_to_string(&model)?.as_bytes())?;
    if let Some(p) = &args.loss_log {
        write_atomic(p, to_json(&logs, true)?.as_bytes())?;
    }
    let summary = json!({
        "epochs": logs.len(),
        "final": logs.last(),
        "checkpoint": args.out.display().to_string(),
    });
    emit(&to_json(&summary, pretty)?, None)
}

pub fn decode(args: &DecodeArgs, pretty: bool) -> Result<()> {
    if args.beam == 0 {
        return Err(Error::Config("--beam must be at least 1".into()));
    }
    let model = checkpoint_from_str(&read_text(&args.ckpt)?)?;
    let manifest = parse_manifest(&args.manifest)?;
    let decoded = pool(args.jobs)?.install(|| decode_manifest(&model, &manifest, args.beam, args.max_len))?;
    let mut out = String::new();
    for (id, d) in &decoded {
        let record = Record {
            id: id.clone(),
            words: d.words.clone(),
            slots: d.slots.clone(),
            intent: d.intent.clone(),
            audio: None,
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    write_atomic(&args.out, out.as_bytes())?;
    let summary = json!({ "records": decoded.len(), "out": args.out.display().to_string() });
    emit(&to_json(&summary, pretty)?, None)
}
