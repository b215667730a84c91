use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::Matrix;

/// Framing and band layout of the log band-energy front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    /// Equal-width bands spanning 0 Hz to Nyquist.
    pub num_bands: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            frame_len: 400,
            hop: 160,
            fft_size: 512,
            num_bands: 32,
        }
    }
}

const FLOOR: f64 = 1e-6;

/// Log band energies of Hann-windowed frames, shape `(frames × num_bands)`.
///
/// Values are `ln(energy + 1e-6)` rescaled by 1/10 so they sit roughly in [-1.5, 0.5].
pub fn log_band_energies(samples: &[f64], cfg: &FrontendConfig) -> Matrix {
    assert!(cfg.frame_len <= cfg.fft_size && cfg.hop > 0 && cfg.num_bands > 0);
    let frames = if samples.len() <= cfg.frame_len {
        1
    } else {
        1 + (samples.len() - cfg.frame_len).div_ceil(cfg.hop)
    };
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let window: Vec<f64> = (0..cfg.frame_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / cfg.frame_len as f64).cos())
        .collect();
    let bins = cfg.fft_size / 2;
    let per_band = bins as f64 / cfg.num_bands as f64;
    let mut out = Matrix::zeros((frames, cfg.num_bands));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let s = if i < cfg.frame_len {
                samples.get(start + i).copied().unwrap_or(0.0) * window[i]
            } else {
                0.0
            };
            *b = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        for band in 0..cfg.num_bands {
            let lo = (band as f64 * per_band) as usize;
            let hi = (((band + 1) as f64 * per_band) as usize).max(lo + 1);
            let energy: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>() / (hi - lo) as f64;
            out[[f, band]] = (energy + FLOOR).ln() / 10.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_peaks_in_its_band() {
        let cfg = FrontendConfig::default();
        // band width is 8000/32 = 250 Hz; 1125 Hz is the center of band 4
        let s: Vec<f64> = (0..3200)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1125.0 * i as f64 / 16_000.0).sin())
            .collect();
        let f = log_band_energies(&s, &cfg);
        assert_eq!(f.nrows(), 1 + (3200 - 400usize).div_ceil(160));
        for row in f.rows() {
            let best = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(best, 4);
        }
    }

    #[test]
    fn short_signal_gives_one_frame() {
        let f = log_band_energies(&[0.1; 50], &FrontendConfig::default());
        assert_eq!(f.dim(), (1, 32));
        assert!(f.iter().all(|v| v.is_finite()));
    }
}
