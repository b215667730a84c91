use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// Time and feature-dimension masking. Widths are drawn uniformly from the
/// inclusive `(min, max)` ranges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub time_masks: usize,
    pub freq_masks: usize,
    pub time_width: (usize, usize),
    pub freq_width: (usize, usize),
}

fn check_width(what: &str, (lo, hi): (usize, usize), extent: usize) -> Result<()> {
    if lo > hi || hi > extent {
        return Err(Error::Input(format!(
            "{what} mask width range ({lo}, {hi}) is invalid for extent {extent}"
        )));
    }
    Ok(())
}

/// Replaces randomly placed time ranges and feature bands with the matrix mean.
pub fn mask_features(features: &Matrix, spec: &MaskSpec, seed: u64) -> Result<Matrix> {
    let (frames, dims) = features.dim();
    if spec.time_masks > 0 {
        check_width("time", spec.time_width, frames)?;
    }
    if spec.freq_masks > 0 {
        check_width("feature", spec.freq_width, dims)?;
    }
    let mut out = features.clone();
    if frames == 0 || dims == 0 {
        return Ok(out);
    }
    let mean = features.mean().expect("non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..spec.time_masks {
        let w = rng.gen_range(spec.time_width.0..=spec.time_width.1);
        let start = rng.gen_range(0..=frames - w);
        out.slice_mut(ndarray::s![start..start + w, ..]).fill(mean);
    }
    for _ in 0..spec.freq_masks {
        let w = rng.gen_range(spec.freq_width.0..=spec.freq_width.1);
        let start = rng.gen_range(0..=dims - w);
        out.slice_mut(ndarray::s![.., start..start + w]).fill(mean);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn feats() -> Matrix {
        Array2::from_shape_fn((20, 6), |(t, d)| (t * 6 + d) as f64 * 0.1)
    }

    #[test]
    fn no_masks_is_identity() {
        let f = feats();
        assert_eq!(mask_features(&f, &MaskSpec::default(), 3).unwrap(), f);
    }

    #[test]
    fn full_width_time_mask_fills_with_mean() {
        let f = feats();
        let spec = MaskSpec {
            time_masks: 1,
            time_width: (20, 20),
            ..MaskSpec::default()
        };
        let out = mask_features(&f, &spec, 3).unwrap();
        let mean = f.mean().unwrap();
        assert!(out.iter().all(|&v| v == mean));
    }

    #[test]
    fn seeded_runs_reproduce() {
        let f = feats();
        let spec = MaskSpec {
            time_masks: 2,
            freq_masks: 1,
            time_width: (1, 5),
            freq_width: (1, 2),
        };
        let a = mask_features(&f, &spec, 9).unwrap();
        assert_eq!(a, mask_features(&f, &spec, 9).unwrap());
        assert_eq!(a.dim(), f.dim());
        assert_ne!(a, f);
    }

    #[test]
    fn invalid_widths() {
        let f = feats();
        let spec = MaskSpec {
            time_masks: 1,
            time_width: (1, 21),
            ..MaskSpec::default()
        };
        assert!(mask_features(&f, &spec, 0).is_err());
        let spec = MaskSpec {
            freq_masks: 1,
            freq_width: (3, 2),
            ..MaskSpec::default()
        };
        assert!(mask_features(&f, &spec, 0).is_err());
    }
}
