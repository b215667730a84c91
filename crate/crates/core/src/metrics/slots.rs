use std::collections::BTreeMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::align::{align, EditOp};
use crate::data::{slot_label, OUTSIDE};
use crate::error::{Error, Result};

/// Word and slot-tag sequences of one utterance.
pub type Tagged<'a, S> = (&'a [S], &'a [S]);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTally {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl AddAssign for SlotTally {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

/// Per-label tallies and micro-aggregated precision, recall and F1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotScoreReport {
    pub per_label: BTreeMap<String, SlotTally>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SlotScoreReport {
    /// Aggregates summed tallies: `F1 = Σ 2·TP / Σ (2·TP + FP + FN)`.
    pub fn from_tallies(per_label: BTreeMap<String, SlotTally>) -> Self {
        let mut total = SlotTally::default();
        for t in per_label.values() {
            total += *t;
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        SlotScoreReport {
            precision: ratio(total.tp, total.tp + total.fp),
            recall: ratio(total.tp, total.tp + total.fn_),
            f1: ratio(2 * total.tp, 2 * total.tp + total.fp + total.fn_),
            per_label,
        }
    }

    pub fn total(&self) -> SlotTally {
        let mut total = SlotTally::default();
        for t in self.per_label.values() {
            total += *t;
        }
        total
    }
}

/// What an aligned position needs to share with the reference to count as a hit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotMatchMode {
    /// Same word and same slot label.
    #[default]
    WordAndLabel,
    /// Same slot label at any aligned position, including substitutions.
    LabelOnly,
}

fn check_pair<S>(kind: &str, idx: usize, (words, slots): Tagged<'_, S>) -> Result<()> {
    if words.len() != slots.len() {
        return Err(Error::Validation(format!(
            "{kind} #{idx}: {} words but {} slots",
            words.len(),
            slots.len()
        )));
    }
    Ok(())
}

fn check_corpus<S>(refs: &[Tagged<'_, S>], hyps: &[Tagged<'_, S>]) -> Result<()> {
    if refs.len() != hyps.len() {
        return Err(Error::Validation(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    for (i, (r, h)) in refs.iter().zip(hyps).enumerate() {
        check_pair("reference", i, *r)?;
        check_pair("hypothesis", i, *h)?;
    }
    Ok(())
}

fn bump(tallies: &mut BTreeMap<String, SlotTally>, tag: &str, f: impl FnOnce(&mut SlotTally)) {
    let label = slot_label(tag);
    if label != OUTSIDE {
        f(tallies.entry(label.to_string()).or_default());
    }
}

/// Tallies one utterance pair after word alignment.
///
/// An aligned pair with equal label (and, under `WordAndLabel`, equal word)
/// is a TP; otherwise the reference label gets a FN and the hypothesis
/// label a FP. Deletions are FN, insertions FP.
pub fn tally_utterance<S: AsRef<str> + PartialEq>(
    reference: Tagged<'_, S>,
    hypothesis: Tagged<'_, S>,
    mode: SlotMatchMode,
    tallies: &mut BTreeMap<String, SlotTally>,
) {
    let (ref_words, ref_slots) = reference;
    let (hyp_words, hyp_slots) = hypothesis;
    for op in align(ref_words, hyp_words).ops {
        match op {
            EditOp::Match { ref_idx, hyp_idx } | EditOp::Sub { ref_idx, hyp_idx } => {
                let r = ref_slots[ref_idx].as_ref();
                let h = hyp_slots[hyp_idx].as_ref();
                let word_ok = matches!(op, EditOp::Match { .. }) || mode == SlotMatchMode::LabelOnly;
                if word_ok && slot_label(r) == slot_label(h) {
                    bump(tallies, r, |t| t.tp += 1);
                } else {
                    bump(tallies, r, |t| t.fn_ += 1);
                    bump(tallies, h, |t| t.fp += 1);
                }
            }
            EditOp::Del { ref_idx } => bump(tallies, ref_slots[ref_idx].as_ref(), |t| t.fn_ += 1),
            EditOp::Ins { hyp_idx } => bump(tallies, hyp_slots[hyp_idx].as_ref(), |t| t.fp += 1),
        }
    }
}

/// Slots edit F1: slot hits counted over an edit-distance alignment of the
/// words, so hypotheses may differ in length from their references.
pub fn slots_edit_f1<S: AsRef<str> + PartialEq>(
    refs: &[Tagged<'_, S>],
    hyps: &[Tagged<'_, S>],
    mode: SlotMatchMode,
) -> Result<SlotScoreReport> {
    check_corpus(refs, hyps)?;
    let mut tallies = BTreeMap::new();
    for (r, h) in refs.iter().zip(hyps) {
        tally_utterance(*r, *h, mode, &mut tallies);
    }
    Ok(SlotScoreReport::from_tallies(tallies))
}

/// A labelled span with inclusive token bounds.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// conlleval-style BIO chunking. An `I-x` that does not continue an open
/// `x` span starts a new one; bare labels are read as `B-x`.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    let mut open = false;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if tag == OUTSIDE {
            open = false;
            continue;
        }
        let label = slot_label(tag);
        let continues =
            tag.starts_with("I-") && open && spans.last().is_some_and(|s| s.label == label && s.end + 1 == i);
        if continues {
            spans.last_mut().expect("open span").end = i;
        } else {
            spans.push(Span {
                label: label.to_string(),
                start: i,
                end: i,
            });
        }
        open = true;
    }
    spans
}

/// Conventional span-level slot F1; requires hypotheses to have the
/// reference's length (oracle-text setting).
pub fn span_slot_f1<S: AsRef<str>>(refs: &[Tagged<'_, S>], hyps: &[Tagged<'_, S>]) -> Result<SlotScoreReport> {
    check_corpus(refs, hyps)?;
    let mut tallies: BTreeMap<String, SlotTally> = BTreeMap::new();
    for (i, (r, h)) in refs.iter().zip(hyps).enumerate() {
        if r.0.len() != h.0.len() {
            return Err(Error::Validation(format!(
                "pair #{i}: hypothesis has {} words, reference {}; span F1 needs equal lengths, use slots edit F1",
                h.0.len(),
                r.0.len()
            )));
        }
        let ref_spans = extract_spans(r.1);
        let hyp_spans = extract_spans(h.1);
        for s in &ref_spans {
            let t = tallies.entry(s.label.clone()).or_default();
            if hyp_spans.contains(s) {
                t.tp += 1;
            } else {
                t.fn_ += 1;
            }
        }
        for s in hyp_spans.iter().filter(|s| !ref_spans.contains(s)) {
            tallies.entry(s.label.clone()).or_default().fp += 1;
        }
    }
    Ok(SlotScoreReport::from_tallies(tallies))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair<'a>(w: &'a [&'a str], s: &'a [&'a str]) -> Tagged<'a, &'a str> {
        (w, s)
    }

    #[test]
    fn identical_corpus_scores_one() {
        let r = pair(&["to", "new", "york"], &["O", "B-toloc", "I-toloc"]);
        let rep = slots_edit_f1(&[r], &[r], SlotMatchMode::default()).unwrap();
        assert_eq!(rep.f1, 1.0);
        assert_eq!(rep.per_label["toloc"], SlotTally { tp: 2, fp: 0, fn_: 0 });
    }

    #[test]
    fn substituted_value_is_fn_and_fp() {
        let r = pair(&["flights", "to", "boston"], &["O", "O", "B-toloc"]);
        let h = pair(&["flights", "to", "austin"], &["O", "O", "B-toloc"]);
        let rep = slots_edit_f1(&[r], &[h], SlotMatchMode::WordAndLabel).unwrap();
        assert_eq!(rep.per_label["toloc"], SlotTally { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(rep.f1, 0.0);

        let rep = slots_edit_f1(&[r], &[h], SlotMatchMode::LabelOnly).unwrap();
        assert_eq!(rep.per_label["toloc"], SlotTally { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn deleted_slot_is_fn() {
        let r = pair(&["to", "boston"], &["O", "B-toloc"]);
        let h = pair(&["to"], &["O"]);
        let rep = slots_edit_f1(&[r], &[h], SlotMatchMode::default()).unwrap();
        assert_eq!(rep.per_label["toloc"], SlotTally { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(rep.f1, 0.0);
    }

    #[test]
    fn inserted_slot_is_fp() {
        let r = pair(&["to", "boston"], &["O", "B-toloc"]);
        let h = pair(&["to", "boston", "monday"], &["O", "B-toloc", "B-day"]);
        let rep = slots_edit_f1(&[r], &[h], SlotMatchMode::default()).unwrap();
        assert_eq!(rep.per_label["day"], SlotTally { tp: 0, fp: 1, fn_: 0 });
        assert_eq!(rep.f1, 2.0 / 3.0);
        assert_eq!(rep.precision, 0.5);
        assert_eq!(rep.recall, 1.0);
    }

    #[test]
    fn wrong_label_on_matched_word() {
        let r = pair(&["boston"], &["B-toloc"]);
        let h = pair(&["boston"], &["B-fromloc"]);
        let rep = slots_edit_f1(&[r], &[h], SlotMatchMode::default()).unwrap();
        assert_eq!(rep.per_label["toloc"].fn_, 1);
        assert_eq!(rep.per_label["fromloc"].fp, 1);
    }

    #[test]
    fn empty_corpus_and_errors() {
        let rep = slots_edit_f1::<&str>(&[], &[], SlotMatchMode::default()).unwrap();
        assert_eq!(rep.f1, 0.0);
        assert!(rep.per_label.is_empty());

        let bad = pair(&["a", "b"], &["O"]);
        let ok = pair(&["a"], &["O"]);
        assert!(matches!(
            slots_edit_f1(&[bad], &[ok], SlotMatchMode::default()),
            Err(Error::Validation(_))
        ));
        assert!(slots_edit_f1(&[ok], &[], SlotMatchMode::default()).is_err());
    }

    #[test]
    fn spans_follow_conlleval_chunking() {
        let spans = extract_spans(&["O", "B-a", "I-a", "I-b", "O", "I-a", "B-a", "B-a"]);
        let got: Vec<_> = spans.iter().map(|s| (s.label.as_str(), s.start, s.end)).collect();
        assert_eq!(
            got,
            vec![("a", 1, 2), ("b", 3, 3), ("a", 5, 5), ("a", 6, 6), ("a", 7, 7)]
        );
    }

    #[test]
    fn span_f1_examples() {
        let w = ["fly", "to", "new", "york"];
        let r = pair(&w, &["O", "O", "B-toloc", "I-toloc"]);
        assert_eq!(span_slot_f1(&[r], &[r]).unwrap().f1, 1.0);

        let h = pair(&w, &["O", "O", "B-toloc", "O"]);
        let rep = span_slot_f1(&[r], &[h]).unwrap();
        assert_eq!(rep.per_label["toloc"], SlotTally { tp: 0, fp: 1, fn_: 1 });

        let h = pair(&w, &["O", "O", "O", "O"]);
        let rep = span_slot_f1(&[r], &[h]).unwrap();
        assert_eq!(rep.per_label["toloc"], SlotTally { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(rep.f1, 0.0);
    }

    #[test]
    fn span_f1_rejects_length_mismatch() {
        let r = pair(&["a", "b"], &["O", "B-x"]);
        let h = pair(&["a"], &["O"]);
        let err = span_slot_f1(&[r], &[h]).unwrap_err();
        assert!(err.to_string().contains("slots edit F1"));
    }
}
