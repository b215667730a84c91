//! Evaluation metrics: WER, slots edit F1, span-level slot F1 and intent F1.

mod align;
mod intent;
mod slots;

pub use align::{align, corpus_wer, wer, AlignmentTrace, EditCounts, EditOp};
pub use intent::{intent_f1, intent_tallies};
pub use slots::{
    extract_spans, slots_edit_f1, span_slot_f1, tally_utterance, SlotMatchMode, SlotScoreReport, SlotTally, Span,
    Tagged,
};
