//! Toy joint ASR + NLU model: autodiff, CRF, beam search, training.

pub mod autodiff;
mod checkpoint;
pub mod crf;
mod decode;
mod losses;
mod network;
mod params;
mod serialized;
mod subsample;
pub mod synth;
mod train;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use crf::{crf_forward_log_z, crf_marginals, crf_path_score, crf_viterbi, CrfMarginals, CrfParams};
pub use decode::{beam_search, greedy_search, Hypothesis, SequenceScorer};
pub use losses::{loss_asr, loss_nlu, loss_slu};
pub use network::{
    tag_inventory, Decoded, Example, ForwardOutput, GradientFlow, JointModel, LossBreakdown, ModelConfig, Objective,
    SlotHead,
};
pub use params::{Block, Gradients, ModelParams, Param};
pub use serialized::{deserialize_slots, serialize_slots, SerializedSequence};
pub use subsample::subsample_features;
pub use train::{
    decode_manifest, load_samples, prepare_examples, train, train_with, EpochLog, Optimizer, Stage, StageConfig,
    TrainConfig,
};
