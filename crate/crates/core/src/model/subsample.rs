use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::Matrix;

/// Mean of each run of `stride` consecutive frames; the last run may be
/// shorter. Output has `ceil(T / stride)` rows.
pub fn subsample_features(features: &Matrix, stride: usize) -> Result<Matrix> {
    if stride == 0 {
        return Err(Error::Config("subsampling stride must be at least 1".into()));
    }
    if stride == 1 {
        return Ok(features.clone());
    }
    let (t, d) = features.dim();
    let out_len = t.div_ceil(stride);
    let mut out = Array2::zeros((out_len, d));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let chunk = features.slice(s![i * stride..((i + 1) * stride).min(t), ..]);
        row.assign(&chunk.mean_axis(Axis(0)).expect("chunk is non-empty"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pairs_are_averaged() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        assert_eq!(subsample_features(&x, 2).unwrap(), array![[2.0, 3.0], [6.0, 7.0]]);
    }

    #[test]
    fn ragged_tail() {
        let x = array![[1.0], [3.0], [5.0]];
        assert_eq!(subsample_features(&x, 2).unwrap(), array![[2.0], [5.0]]);
        assert_eq!(subsample_features(&x, 1).unwrap(), x);
        assert!(subsample_features(&x, 0).is_err());
    }
}
