//! The training objectives evaluated on plain matrices.
//!
//! These share their arithmetic with [`super::JointModel`], which builds the
//! same terms on a gradient tape.

use super::autodiff::{Reduction, Tape};
use super::crf::CrfParams;
use super::network::LossBreakdown;
use crate::error::{Error, Result};
use crate::Matrix;

/// Mean per-token cross-entropy against label-smoothed targets.
pub fn loss_asr(logits: &Matrix, targets: &[usize], smoothing: f64) -> Result<f64> {
    if logits.nrows() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} logit rows for {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    check_ids(targets, logits.ncols(), "subword")?;
    let mut tape = Tape::new();
    let l = tape.constant_ref(logits);
    let loss = tape.cross_entropy(l, targets, smoothing, Reduction::Mean);
    Ok(tape.scalar(loss))
}

/// Negative slot log-likelihood plus negative intent log-likelihood.
///
/// The slot term is summed per-token cross-entropy without a CRF, or the
/// sequence negative log-likelihood with one.
pub fn loss_nlu(
    slot_scores: &Matrix,
    intent_logits: &Matrix,
    tags: &[usize],
    intent: usize,
    crf: Option<&CrfParams>,
) -> Result<f64> {
    if slot_scores.nrows() != tags.len() {
        return Err(Error::Dimension(format!(
            "{} slot score rows for {} tags",
            slot_scores.nrows(),
            tags.len()
        )));
    }
    if intent_logits.nrows() != 1 {
        return Err(Error::Dimension("intent logits must be a single row".into()));
    }
    check_ids(tags, slot_scores.ncols(), "slot tag")?;
    check_ids(&[intent], intent_logits.ncols(), "intent")?;
    let mut tape = Tape::new();
    let scores = tape.constant_ref(slot_scores);
    let slot = match crf {
        None => tape.cross_entropy(scores, tags, 0.0, Reduction::Sum),
        Some(c) => {
            if c.num_tags() != slot_scores.ncols() {
                return Err(Error::Dimension(format!(
                    "CRF has {} tags, slot scores {}",
                    c.num_tags(),
                    slot_scores.ncols()
                )));
            }
            let t = tape.constant_ref(&c.transitions);
            let s = tape.constant_ref(&c.start);
            let e = tape.constant_ref(&c.end);
            tape.crf_nll(scores, t, s, e, tags)
        }
    };
    let il = tape.constant_ref(intent_logits);
    let intent = tape.cross_entropy(il, &[intent], 0.0, Reduction::Sum);
    let total = tape.add(slot, intent);
    Ok(tape.scalar(total))
}

/// `L_ASR + L_NLU`, unweighted.
#[allow(clippy::too_many_arguments)]
pub fn loss_slu(
    asr_logits: &Matrix,
    targets: &[usize],
    smoothing: f64,
    slot_scores: &Matrix,
    intent_logits: &Matrix,
    tags: &[usize],
    intent: usize,
    crf: Option<&CrfParams>,
) -> Result<LossBreakdown> {
    let asr = loss_asr(asr_logits, targets, smoothing)?;
    let nlu = loss_nlu(slot_scores, intent_logits, tags, intent, crf)?;
    Ok(LossBreakdown {
        asr,
        nlu,
        slu: asr + nlu,
    })
}

fn check_ids(ids: &[usize], bound: usize, what: &str) -> Result<()> {
    match ids.iter().find(|&&i| i >= bound) {
        Some(i) => Err(Error::Input(format!("unknown {what} id {i} (have {bound})"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn uniform_logits_give_ln_k() {
        let l = Array2::zeros((3, 7));
        let v = loss_asr(&l, &[0, 3, 6], 0.0).unwrap();
        assert!((v - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_is_near_zero() {
        let l = array![[50.0, 0.0], [0.0, 50.0]];
        assert!(loss_asr(&l, &[0, 1], 0.0).unwrap() < 1e-12);
        let i = array![[0.0, 60.0]];
        assert!(loss_nlu(&l, &i, &[0, 1], 1, None).unwrap() < 1e-12);
    }

    #[test]
    fn length_and_id_errors() {
        let l = Array2::zeros((2, 3));
        assert!(loss_asr(&l, &[0], 0.1).is_err());
        assert!(loss_asr(&l, &[0, 3], 0.1).is_err());
        assert!(loss_nlu(&l, &Array2::zeros((1, 2)), &[0, 1], 2, None).is_err());
    }
}
