use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One step of a reference/hypothesis alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum EditOp {
    Match { ref_idx: usize, hyp_idx: usize },
    Sub { ref_idx: usize, hyp_idx: usize },
    Del { ref_idx: usize },
    Ins { hyp_idx: usize },
}

impl EditOp {
    pub fn cost(&self) -> usize {
        match self {
            EditOp::Match { .. } => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentTrace {
    pub ops: Vec<EditOp>,
}

/// Substitution, deletion and insertion counts of an alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

impl AlignmentTrace {
    pub fn cost(&self) -> usize {
        self.ops.iter().map(EditOp::cost).sum()
    }

    pub fn counts(&self) -> EditCounts {
        let mut c = EditCounts::default();
        for op in &self.ops {
            match op {
                EditOp::Match { .. } => c.matches += 1,
                EditOp::Sub { .. } => c.substitutions += 1,
                EditOp::Del { .. } => c.deletions += 1,
                EditOp::Ins { .. } => c.insertions += 1,
            }
        }
        c
    }
}

/// Minimum-cost alignment under unit edit costs.
///
/// Among optimal alignments the backtrace (from the end) prefers
/// MATCH, then SUB, then DEL, then INS, so the result is deterministic.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> AlignmentTrace {
    let (m, n) = (reference.len(), hypothesis.len());
    let width = n + 1;
    let mut dist = vec![0usize; (m + 1) * width];
    for (j, d) in dist.iter_mut().take(width).enumerate() {
        *d = j;
    }
    for i in 1..=m {
        dist[i * width] = i;
        for j in 1..=n {
            let diag = dist[(i - 1) * width + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let up = dist[(i - 1) * width + j] + 1;
            let left = dist[i * width + j - 1] + 1;
            dist[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = dist[i * width + j];
        if i > 0 && j > 0 {
            let diag = dist[(i - 1) * width + j - 1];
            let same = reference[i - 1] == hypothesis[j - 1];
            if same && here == diag {
                ops.push(EditOp::Match {
                    ref_idx: i - 1,
                    hyp_idx: j - 1,
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && here == diag + 1 {
                ops.push(EditOp::Sub {
                    ref_idx: i - 1,
                    hyp_idx: j - 1,
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dist[(i - 1) * width + j] + 1 {
            ops.push(EditOp::Del { ref_idx: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Ins { hyp_idx: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    AlignmentTrace { ops }
}

/// Word error rate `(S + D + I) / len(ref)` of one pair.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Validation("WER is undefined for an empty reference".into()));
    }
    let errors = align(reference, hypothesis).counts().errors();
    Ok(errors as f64 / reference.len() as f64)
}

/// Corpus WER: total edit errors over total reference words.
pub fn corpus_wer<T: PartialEq>(pairs: &[(&[T], &[T])]) -> Result<f64> {
    let mut errors = 0usize;
    let mut words = 0usize;
    for (r, h) in pairs {
        errors += align(r, h).counts().errors();
        words += r.len();
    }
    if words == 0 {
        return Err(Error::Validation("WER is undefined for an empty reference".into()));
    }
    Ok(errors as f64 / words as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sequences_all_match() {
        let a = ["a", "b", "c"];
        let t = align(&a, &a);
        assert_eq!(t.ops.len(), 3);
        assert!(t.ops.iter().all(|o| matches!(o, EditOp::Match { .. })));
        assert_eq!(t.cost(), 0);
    }

    #[test]
    fn deletion_in_middle() {
        let t = align(&["show", "me", "flights"], &["show", "flights"]);
        assert_eq!(
            t.ops,
            vec![
                EditOp::Match { ref_idx: 0, hyp_idx: 0 },
                EditOp::Del { ref_idx: 1 },
                EditOp::Match { ref_idx: 2, hyp_idx: 1 },
            ]
        );
        assert_eq!(t.cost(), 1);
    }

    #[test]
    fn empty_reference() {
        let t = align::<&str>(&[], &["a"]);
        assert_eq!(t.ops, vec![EditOp::Ins { hyp_idx: 0 }]);
        assert_eq!(t.cost(), 1);
        assert!(align::<&str>(&[], &[]).ops.is_empty());
    }

    #[test]
    fn tie_break_prefers_sub_over_del_ins() {
        let t = align(&["a"], &["b"]);
        assert_eq!(t.ops, vec![EditOp::Sub { ref_idx: 0, hyp_idx: 0 }]);
        // both "DEL a, MATCH b" and "SUB, SUB"-free paths exist; cost 1 either way
        let t = align(&["a", "b"], &["b"]);
        assert_eq!(
            t.ops,
            vec![EditOp::Del { ref_idx: 0 }, EditOp::Match { ref_idx: 1, hyp_idx: 0 }]
        );
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&["a", "b", "c"], &["a", "b", "c"]).unwrap(), 0.0);
        assert_eq!(wer(&["a", "b", "c"], &["a", "c"]).unwrap(), 1.0 / 3.0);
        assert_eq!(wer(&["a"], &["b", "c"]).unwrap(), 2.0);
        assert!(wer::<&str>(&[], &["a"]).is_err());
    }

    #[test]
    fn corpus_wer_pools_counts() {
        let r1 = ["a", "b"];
        let h1 = ["a"];
        let r2 = ["c", "d", "e", "f"];
        let h2 = ["c", "d", "e", "f"];
        let w = corpus_wer(&[(&r1[..], &h1[..]), (&r2[..], &h2[..])]).unwrap();
        assert_eq!(w, 1.0 / 6.0);
    }
}
