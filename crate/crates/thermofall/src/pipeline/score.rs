//! Reconstruction errors and anomaly scores.
//!
//! Window i (1-indexed) spans frames i..i+T-1. Frame-level scores aggregate
//! R_{i,j} over the windows containing frame j: the first j windows while
//! j < T, the last T windows afterwards (clipped to the windows that exist
//! near the end of a sub-video). Window-level scores aggregate over the T
//! frames of one window. All standard deviations are population.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::train::diff_frames;

/// Per-frame anomaly score pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameScore {
    pub c_mu: f64,
    pub c_sigma: f64,
}

/// Per-window anomaly score pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowScore {
    pub w_mu: f64,
    pub w_sigma: f64,
}

fn frame_volume(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [t, h, w, c] => Ok((t, h * w * c)),
        _ => Err(Error::Shape {
            context: "score window".into(),
            expected: vec![4],
            actual: shape.to_vec(),
        }),
    }
}

/// Reconstruction error between an input window and its reconstruction.
///
/// `per_frame` yields one value per frame (mean squared error over that
/// frame's pixels); otherwise one value over the whole window. With `masks`,
/// the mean runs over mask-interior pixels only; a frame with an empty mask
/// scores 0.
pub fn reconstruction_error<T: Scalar>(
    input: &Tensor<T>,
    output: &Tensor<T>,
    masks: Option<&Tensor<T>>,
    per_frame: bool,
) -> Result<Vec<f64>> {
    if input.shape() != output.shape() {
        return Err(Error::Shape {
            context: "reconstruction_error".into(),
            expected: input.shape().to_vec(),
            actual: output.shape().to_vec(),
        });
    }
    let (t, vol) = frame_volume(input.shape())?;
    if let Some(m) = masks {
        if m.shape() != input.shape() {
            return Err(Error::Shape {
                context: "reconstruction_error masks".into(),
                expected: input.shape().to_vec(),
                actual: m.shape().to_vec(),
            });
        }
    }
    let mut per: Vec<f64> = Vec::with_capacity(t);
    for j in 0..t {
        let lo = j * vol;
        let hi = lo + vol;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in lo..hi {
            let d = input.data()[k].as_f64() - output.data()[k].as_f64();
            let m = masks.map_or(1.0, |m| m.data()[k].as_f64());
            num += m * d * d;
            den += m;
        }
        per.push(if den > 0.0 { num / den } else { 0.0 });
    }
    if per_frame {
        Ok(per)
    } else {
        Ok(vec![per.iter().sum::<f64>() / t as f64])
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Frame-level scores from the per-window, per-frame error table of one
/// sub-video. `errors[i][k]` is R_{i+1, i+k+1}: window i's error at its k-th
/// frame. Scores come back for all N = W + T - 1 frames.
pub fn frame_scores(errors: &[Vec<f64>], window_len: usize) -> Vec<FrameScore> {
    let w = errors.len();
    if w == 0 {
        return Vec::new();
    }
    debug_assert!(errors.iter().all(|r| r.len() == window_len));
    let n = w + window_len - 1;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let i_lo = j.saturating_sub(window_len - 1);
        let i_hi = j.min(w - 1);
        let vals: Vec<f64> = (i_lo..=i_hi).map(|i| errors[i][j - i]).collect();
        let (mu, sigma) = mean_std(&vals);
        out.push(FrameScore {
            c_mu: mu,
            c_sigma: sigma,
        });
    }
    out
}

/// Window-level score: mean and population standard deviation of one
/// window's per-frame errors.
pub fn window_scores(frame_errors: &[f64]) -> WindowScore {
    let (mu, sigma) = mean_std(frame_errors);
    WindowScore {
        w_mu: mu,
        w_sigma: sigma,
    }
}

/// Window-level score over the T-1 residual frames of the difference
/// constraint.
pub fn diff_window_scores<T: Scalar>(
    input: &Tensor<T>,
    output: &Tensor<T>,
    union_masks: &Tensor<T>,
) -> Result<WindowScore> {
    let di = diff_frames(input)?;
    let dout = diff_frames(output)?;
    let errors = reconstruction_error(&di, &dout, Some(union_masks), true)?;
    Ok(window_scores(&errors))
}

/// Ground-truth window labels: a window is a fall iff it contains at least
/// `alpha` fall frames.
pub fn label_windows(frame_labels: &[bool], window_len: usize, alpha: usize) -> Vec<bool> {
    if frame_labels.len() < window_len {
        return Vec::new();
    }
    (0..frame_labels.len() - window_len + 1)
        .map(|s| {
            frame_labels[s..s + window_len]
                .iter()
                .filter(|&&l| l)
                .count()
                >= alpha
        })
        .collect()
}
