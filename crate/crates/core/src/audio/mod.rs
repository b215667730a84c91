//! Audio clips, WAV I/O, SNR-controlled noise mixing and augmentation.

mod augment;
mod features;
mod mask;
mod mix;
mod wav;

pub use augment::{
    augment_corpus, augmented_id, AugmentSpec, AugmentedCorpus, NoiseFile, NoisePool, Provenance, Split,
    DEFAULT_SNR_LEVELS_DB,
};
pub use features::{log_band_energies, FrontendConfig};
pub use mask::{mask_features, MaskSpec};
pub use mix::{fit_noise, measured_snr_db, mix_at_snr, MixOutcome};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("audio clip has no samples".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples).expect("clip is non-empty")
    }
}

/// Root mean square of a non-empty signal.
pub fn rms(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("RMS of an empty signal".into()));
    }
    let energy: f64 = samples.iter().map(|s| s * s).sum();
    Ok((energy / samples.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_examples() {
        assert_eq!(rms(&[0.5; 100]).unwrap(), 0.5);
        assert_eq!(rms(&[0.0; 10]).unwrap(), 0.0);
        assert!(rms(&[]).is_err());
    }

    #[test]
    fn unit_sine_rms() {
        // 200 periods, 80 samples each
        let n = 200 * 80;
        let s: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 80.0).sin())
            .collect();
        assert!((rms(&s).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
    }

    #[test]
    fn empty_clip_rejected() {
        assert!(AudioClip::new(vec![], 16_000).is_err());
    }
}
