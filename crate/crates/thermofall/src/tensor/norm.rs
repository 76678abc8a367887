//! Batch normalization over the channel axis of (n, d, h, w, c) tensors.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Learnable scale/shift plus running statistics for one layer.
#[derive(Clone, Debug)]
pub struct BatchNormState<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: Tensor::filled(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn cast<U: Scalar>(&self) -> BatchNormState<U> {
        BatchNormState {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            momentum: self.momentum,
            epsilon: self.epsilon,
        }
    }
}

/// Cache for the backward pass: the normalized activations and the per-channel
/// inverse standard deviation of the batch.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<f64>,
    /// Per-channel batch statistics, applied to the running stats by the
    /// caller after the step (keeps the forward pass itself pure).
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

fn check_channels<T: Scalar>(input: &Tensor<T>, state: &BatchNormState<T>) -> Result<usize> {
    let c = *input.shape().last().ok_or_else(|| Error::Shape {
        context: "batchnorm input".into(),
        expected: vec![1],
        actual: vec![],
    })?;
    if c != state.channels() {
        return Err(Error::Shape {
            context: "batchnorm channels".into(),
            expected: vec![state.channels()],
            actual: vec![c],
        });
    }
    Ok(c)
}

/// Forward pass. Train mode normalizes with batch statistics and reports them
/// in the cache; infer mode uses the running statistics and returns no cache.
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    state: &BatchNormState<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    let c = check_channels(input, state)?;
    let rows = input.len() / c;
    let mut out = Tensor::zeros(input.shape());
    match mode {
        BnMode::Infer => {
            let scale: Vec<T> = (0..c)
                .map(|j| {
                    state.gamma.data()[j]
                        / T::of_f64(
                            (state.running_var.data()[j].as_f64() + state.epsilon).sqrt(),
                        )
                })
                .collect();
            for (orow, xrow) in out
                .data_mut()
                .chunks_exact_mut(c)
                .zip(input.data().chunks_exact(c))
            {
                for j in 0..c {
                    orow[j] = (xrow[j] - state.running_mean.data()[j]) * scale[j]
                        + state.beta.data()[j];
                }
            }
            Ok((out, None))
        }
        BnMode::Train => {
            // Per-channel batch statistics, 64-bit accumulation.
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for row in input.data().chunks_exact(c) {
                for j in 0..c {
                    mean[j] += row[j].as_f64();
                }
            }
            for m in mean.iter_mut() {
                *m /= rows as f64;
            }
            for row in input.data().chunks_exact(c) {
                for j in 0..c {
                    let d = row[j].as_f64() - mean[j];
                    var[j] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= rows as f64;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.epsilon).sqrt()).collect();
            let mut xhat = Tensor::zeros(input.shape());
            for ((orow, hrow), xrow) in out
                .data_mut()
                .chunks_exact_mut(c)
                .zip(xhat.data_mut().chunks_exact_mut(c))
                .zip(input.data().chunks_exact(c))
            {
                for j in 0..c {
                    let h = T::of_f64((xrow[j].as_f64() - mean[j]) * inv_std[j]);
                    hrow[j] = h;
                    orow[j] = state.gamma.data()[j] * h + state.beta.data()[j];
                }
            }
            Ok((
                out,
                Some(BatchNormCache {
                    xhat,
                    inv_std,
                    batch_mean: mean,
                    batch_var: var,
                }),
            ))
        }
    }
}

/// Folds the cached batch statistics into the running statistics.
pub fn batchnorm_update_running<T: Scalar>(state: &mut BatchNormState<T>, cache: &BatchNormCache<T>) {
    let m = state.momentum;
    for j in 0..state.channels() {
        let rm = state.running_mean.data()[j].as_f64();
        let rv = state.running_var.data()[j].as_f64();
        state.running_mean.data_mut()[j] = T::of_f64((1.0 - m) * rm + m * cache.batch_mean[j]);
        state.running_var.data_mut()[j] = T::of_f64((1.0 - m) * rv + m * cache.batch_var[j]);
    }
}

/// Gradients of a train-mode batchnorm: input, gamma, beta.
pub fn batchnorm_backward<T: Scalar>(
    grad_output: &Tensor<T>,
    state: &BatchNormState<T>,
    cache: &BatchNormCache<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = state.channels();
    let rows = grad_output.len() / c;
    let m = rows as f64;

    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    let mut sum_dxhat = vec![0.0f64; c];
    let mut sum_dxhat_xhat = vec![0.0f64; c];
    for (grow, hrow) in grad_output
        .data()
        .chunks_exact(c)
        .zip(cache.xhat.data().chunks_exact(c))
    {
        for j in 0..c {
            let g = grow[j].as_f64();
            let h = hrow[j].as_f64();
            dgamma[j] += g * h;
            dbeta[j] += g;
            let dxh = g * state.gamma.data()[j].as_f64();
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * h;
        }
    }

    // dx = (1/m) * inv_std * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
    let mut gx = Tensor::zeros(grad_output.shape());
    for ((xrow, grow), hrow) in gx
        .data_mut()
        .chunks_exact_mut(c)
        .zip(grad_output.data().chunks_exact(c))
        .zip(cache.xhat.data().chunks_exact(c))
    {
        for j in 0..c {
            let dxh = grow[j].as_f64() * state.gamma.data()[j].as_f64();
            let h = hrow[j].as_f64();
            let v = cache.inv_std[j] / m * (m * dxh - sum_dxhat[j] - h * sum_dxhat_xhat[j]);
            xrow[j] = T::of_f64(v);
        }
    }
    let dgamma = Tensor::from_vec(&[c], dgamma.iter().map(|&v| T::of_f64(v)).collect()).unwrap();
    let dbeta = Tensor::from_vec(&[c], dbeta.iter().map(|&v| T::of_f64(v)).collect()).unwrap();
    (gx, dgamma, dbeta)
}
