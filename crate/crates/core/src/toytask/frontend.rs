//! Window pooling frontend: frames are mean-pooled over fixed windows and
//! projected into the model width. The projection weights are the model's
//! `audio_w`/`audio_b`, so the forward pass applies them and training updates
//! them end to end; [`frontend_pool`] exposes the same computation standalone.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nncore::Real;

/// Mean over consecutive windows of `window` frames; the last window may be
/// shorter. Output has `ceil(num_frames / window)` rows.
pub fn mean_pool<F: Real>(frames: ArrayView2<'_, f32>, window: usize) -> Result<Array2<F>> {
    if window == 0 {
        return Err(Error::Contract("pooling window must be at least 1".into()));
    }
    if frames.nrows() == 0 {
        return Err(Error::Contract("cannot pool an empty frame sequence".into()));
    }
    let n = frames.nrows().div_ceil(window);
    let mut out = Array2::zeros((n, frames.ncols()));
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let chunk = frames.slice(s![i * window..((i + 1) * window).min(frames.nrows()), ..]);
        let count = chunk.nrows() as f64;
        for (j, x) in row.iter_mut().enumerate() {
            let sum: f64 = chunk.column(j).iter().map(|&v| v as f64).sum();
            *x = F::of(sum / count);
        }
    }
    Ok(out)
}

/// Pooled frames projected by `weight` (`feature_dim × model_dim`) and `bias` (`1 × model_dim`).
pub fn frontend_pool<F: Real>(
    frames: ArrayView2<'_, f32>,
    window: usize,
    weight: ArrayView2<'_, F>,
    bias: ArrayView2<'_, F>,
) -> Result<Array2<F>> {
    let pooled = mean_pool::<F>(frames, window)?;
    if weight.nrows() != pooled.ncols() || bias.dim() != (1, weight.ncols()) {
        return Err(Error::Contract(format!(
            "projection {:?} + {:?} does not fit features of width {}",
            weight.dim(),
            bias.dim(),
            pooled.ncols()
        )));
    }
    Ok(pooled.dot(&weight) + &bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_one_identity_projection_is_identity() {
        let frames = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f32 * 0.5);
        let eye = Array2::<f64>::eye(3);
        let zero = Array2::<f64>::zeros((1, 3));
        let out = frontend_pool(frames.view(), 1, eye.view(), zero.view()).unwrap();
        assert_eq!(out, frames.mapv(|x| x as f64));
    }

    #[test]
    fn constant_frames_pool_to_identical_vectors() {
        let frames = Array2::from_elem((9, 4), 0.75f32);
        let out = mean_pool::<f64>(frames.view(), 4).unwrap();
        assert!(out.outer_iter().all(|r| r.iter().all(|&x| x == 0.75)));
    }

    #[test]
    fn ragged_last_window() {
        let frames = Array2::from_shape_fn((10, 1), |(i, _)| i as f32);
        let out = mean_pool::<f64>(frames.view(), 4).unwrap();
        assert_eq!(out.nrows(), 3);
        assert_eq!(out.column(0).to_vec(), vec![1.5, 5.5, 8.5]);
    }

    #[test]
    fn empty_and_zero_window_are_rejected() {
        let empty = Array2::<f32>::zeros((0, 3));
        assert!(mean_pool::<f64>(empty.view(), 2).is_err());
        let frames = Array2::<f32>::zeros((2, 3));
        assert!(mean_pool::<f64>(frames.view(), 0).is_err());
    }
}
