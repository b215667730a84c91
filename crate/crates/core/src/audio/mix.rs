use super::{rms, AudioClip};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutcome {
    pub clip: AudioClip,
    /// Gain applied to the (looped or truncated) noise.
    pub gain: f64,
    /// Output samples hard-clipped to [-1, 1].
    pub clipped: usize,
}

/// Noise of exactly `len` samples starting at `offset`, looping as needed.
pub fn fit_noise(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    noise
        .iter()
        .cycle()
        .skip(offset % noise.len())
        .take(len)
        .copied()
        .collect()
}

/// `20·log10(rms(signal) / rms(noise))`.
pub fn measured_snr_db(signal: &[f64], noise: &[f64]) -> Result<f64> {
    Ok(20.0 * (rms(signal)? / rms(noise)?).log10())
}

/// Adds `noise` to `clean` at the requested SNR.
///
/// The noise is looped or truncated to the clean length (starting at
/// `offset`) and scaled by `rms(clean) / (rms(noise) · 10^(snr/20))`.
pub fn mix_at_snr(clean: &AudioClip, noise: &AudioClip, snr_db: f64, offset: usize) -> Result<MixOutcome> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::Input(format!(
            "sample rate mismatch: clean {} Hz, noise {} Hz",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Input(format!("SNR must be finite, got {snr_db}")));
    }
    let clean_rms = clean.rms();
    if clean_rms == 0.0 {
        return Err(Error::Input("clean signal is silent; SNR is undefined".into()));
    }
    let fitted = fit_noise(&noise.samples, clean.len(), offset);
    let noise_rms = rms(&fitted)?;
    if noise_rms == 0.0 {
        return Err(Error::Input("noise segment is silent; SNR is undefined".into()));
    }
    let gain = clean_rms / (noise_rms * 10f64.powf(snr_db / 20.0));
    let mut clipped = 0;
    let samples = clean
        .samples
        .iter()
        .zip(&fitted)
        .map(|(c, n)| {
            let v = c + gain * n;
            if v.abs() > 1.0 {
                clipped += 1;
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("{clipped} samples clipped while mixing at {snr_db} dB");
    }
    Ok(MixOutcome {
        clip: AudioClip {
            samples,
            sample_rate: clean.sample_rate,
        },
        gain,
        clipped,
    })
}
