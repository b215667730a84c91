use std::collections::BTreeMap;

use super::slots::SlotTally;
use crate::error::{Error, Result};

/// Per-class confusion tallies for single-label classification.
pub fn intent_tallies<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<BTreeMap<String, SlotTally>> {
    if refs.len() != hyps.len() {
        return Err(Error::Validation(format!(
            "{} reference intents but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut tallies: BTreeMap<String, SlotTally> = BTreeMap::new();
    for (r, h) in refs.iter().zip(hyps) {
        let (r, h) = (r.as_ref(), h.as_ref());
        if r == h {
            tallies.entry(r.to_string()).or_default().tp += 1;
        } else {
            tallies.entry(r.to_string()).or_default().fn_ += 1;
            tallies.entry(h.to_string()).or_default().fp += 1;
        }
    }
    Ok(tallies)
}

/// Micro-averaged intent F1. For single-label data this equals accuracy.
pub fn intent_f1<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::Validation("intent F1 of an empty corpus".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for t in intent_tallies(refs, hyps)?.values() {
        tp += t.tp;
        fp += t.fp;
        fn_ += t.fn_;
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        assert_eq!(intent_f1(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
    }

    #[test]
    fn micro_f1_is_accuracy() {
        assert_eq!(intent_f1(&["a", "a", "b", "c"], &["a", "a", "b", "a"]).unwrap(), 0.75);
    }

    #[test]
    fn unseen_hypothesis_label() {
        let t = intent_tallies(&["a", "b"], &["a", "zzz"]).unwrap();
        assert_eq!(t["zzz"], SlotTally { tp: 0, fp: 1, fn_: 0 });
        assert_eq!(t["b"], SlotTally { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(intent_f1(&["a", "b"], &["a", "zzz"]).unwrap(), 0.5);
    }

    #[test]
    fn length_mismatch_and_empty() {
        assert!(intent_f1(&["a"], &["a", "b"]).is_err());
        assert!(intent_f1::<&str>(&[], &[]).is_err());
    }
}
