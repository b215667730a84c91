//! Staged per-example SGD training.

use std::path::PathBuf;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Decoded, Example, JointModel, ModelConfig, Objective};
use super::params::Block;
use crate::audio::read_wav;
use crate::data::{Manifest, Utterance, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// ASR loss, ASR parameters only.
    AsrPretrain,
    /// ASR loss, ASR parameters only, typically on in-domain or noisy audio.
    AsrFinetune,
    /// Full `L_ASR + L_NLU`, every parameter.
    Joint,
}

impl Stage {
    fn objective(self) -> Objective {
        match self {
            Stage::AsrPretrain | Stage::AsrFinetune => Objective::Asr,
            Stage::Joint => Objective::Slu,
        }
    }

    fn trains(self, block: Block) -> bool {
        self == Stage::Joint || block == Block::Asr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Momentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stages: Vec<StageConfig>,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub momentum: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub beam_size: usize,
    pub max_decode_len: usize,
    pub model: ModelConfig,
    /// Vocabulary files, resolved relative to the config file.
    pub asr_vocab: Option<PathBuf>,
    pub nlu_vocab: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stages: vec![
                StageConfig {
                    stage: Stage::AsrPretrain,
                    epochs: 200,
                    learning_rate: 0.01,
                },
                StageConfig {
                    stage: Stage::AsrFinetune,
                    epochs: 50,
                    learning_rate: 0.003,
                },
                StageConfig {
                    stage: Stage::Joint,
                    epochs: 100,
                    learning_rate: 0.003,
                },
            ],
            seed: 0,
            optimizer: Optimizer::Momentum,
            momentum: 0.9,
            clip_norm: Some(5.0),
            beam_size: 5,
            max_decode_len: 32,
            model: ModelConfig::default(),
            asr_vocab: None,
            nlu_vocab: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        for s in &self.stages {
            if !(s.learning_rate.is_finite() && s.learning_rate > 0.0) {
                return Err(Error::Config(format!(
                    "stage {:?}: learning rate must be positive, got {}",
                    s.stage, s.learning_rate
                )));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }
}

/// Mean training losses over one epoch, measured before each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: Stage,
    pub epoch: usize,
    pub loss_asr: f64,
    pub loss_nlu: f64,
    pub loss_slu: f64,
}

/// Trains `model` in place through the configured stages.
///
/// `on_epoch` sees every epoch log and the current model; returning
/// `false` ends training early.
pub fn train_with(
    model: &mut JointModel,
    examples: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &JointModel) -> bool,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut logs = Vec::new();
    for sc in &config.stages {
        let trainable: Vec<bool> = model.params().iter().map(|p| sc.stage.trains(p.block)).collect();
        let mut velocity: Vec<Matrix> = model.params().iter().map(|p| Array2::zeros(p.value.dim())).collect();
        for epoch in 0..sc.epochs {
            order.shuffle(&mut rng);
            let mut sums = [0.0; 3];
            for &i in &order {
                let ex = &examples[i];
                let (losses, grads) = model.gradients(ex, sc.stage.objective()).map_err(|e| match e {
                    Error::Numeric { tensor, message } => Error::Numeric {
                        tensor,
                        message: format!("{message} ({:?} epoch {epoch}, example `{}`)", sc.stage, ex.id),
                    },
                    other => other,
                })?;
                sums[0] += losses.asr;
                sums[1] += losses.nlu;
                sums[2] += losses.slu;
                let scale = match config.clip_norm {
                    Some(c) => {
                        let norm = trainable
                            .iter()
                            .zip(&grads.grads)
                            .filter(|(t, _)| **t)
                            .flat_map(|(_, g)| g.iter())
                            .map(|v| v * v)
                            .sum::<f64>()
                            .sqrt();
                        if norm > c {
                            c / norm
                        } else {
                            1.0
                        }
                    }
                    None => 1.0,
                };
                for (k, g) in grads.grads.iter().enumerate() {
                    if !trainable[k] {
                        continue;
                    }
                    let step = match config.optimizer {
                        Optimizer::Sgd => g * (sc.learning_rate * scale),
                        Optimizer::Momentum => {
                            let v = &mut velocity[k];
                            v.zip_mut_with(g, |v, g| *v = config.momentum * *v + scale * g);
                            &*v * sc.learning_rate
                        }
                    };
                    *model.params_mut().value_mut(k) -= &step;
                }
            }
            let n = examples.len() as f64;
            let log = EpochLog {
                stage: sc.stage,
                epoch,
                loss_asr: sums[0] / n,
                loss_nlu: sums[1] / n,
                loss_slu: sums[2] / n,
            };
            if !log.loss_slu.is_finite() {
                return Err(Error::Numeric {
                    tensor: "loss_slu".into(),
                    message: format!("diverged in {:?} epoch {epoch}", sc.stage),
                });
            }
            log::debug!(
                "{:?} epoch {epoch}: asr {:.5} nlu {:.5} slu {:.5}",
                sc.stage,
                log.loss_asr,
                log.loss_nlu,
                log.loss_slu
            );
            logs.push(log);
            if !on_epoch(&log, model) {
                return Ok(logs);
            }
        }
    }
    Ok(logs)
}

pub fn train(model: &mut JointModel, examples: &[Example], config: &TrainConfig) -> Result<Vec<EpochLog>> {
    train_with(model, examples, config, |_, _| true)
}

/// Samples of `utt`, from memory or its audio file.
pub fn load_samples(manifest: &Manifest, utt: &Utterance) -> Result<Vec<f64>> {
    if let Some(s) = &utt.samples {
        return Ok(s.clone());
    }
    let path = manifest
        .audio_path(utt)
        .ok_or_else(|| Error::Input(format!("record `{}` has no audio", utt.id)))?;
    let clip = read_wav(&path)?;
    if clip.sample_rate != SAMPLE_RATE {
        return Err(Error::Format(format!(
            "{}: sample rate {} Hz, expected {SAMPLE_RATE}",
            path.display(),
            clip.sample_rate
        )));
    }
    Ok(clip.samples)
}

/// Front-end features and labels for every record, in manifest order.
pub fn prepare_examples(model: &JointModel, manifest: &Manifest) -> Result<Vec<Example>> {
    manifest
        .records
        .par_iter()
        .map(|utt| {
            let feats = model.features(&load_samples(manifest, utt)?);
            model.example(utt, &feats)
        })
        .collect()
}

/// Two-step decoding of every record; results keep manifest order.
pub fn decode_manifest(
    model: &JointModel,
    manifest: &Manifest,
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<(String, Decoded)>> {
    manifest
        .records
        .par_iter()
        .map(|utt| {
            let feats = model.features(&load_samples(manifest, utt)?);
            Ok((utt.id.clone(), model.decode_two_step(&feats, beam_size, max_len)?))
        })
        .collect()
}
