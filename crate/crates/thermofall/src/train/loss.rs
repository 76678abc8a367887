//! Loss functions for adversarial training: GAN cross-entropy, plain and
//! ROI-masked reconstruction, and the difference constraint on consecutive
//! frames. Every loss value accumulates in 64-bit; gradients come back in the
//! working precision.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Floor for log arguments; keeps perfect-discriminator batches finite.
pub const LOG_CLAMP: f64 = 1e-7;

/// Standard GAN cross-entropy from discriminator probabilities.
///
/// Returns `(loss_D, loss_R_adv)`: the discriminator term
/// `-[mean log d_real + mean log(1 - d_fake)]` and the non-saturating
/// generator term `-mean log d_fake`.
pub fn gan_loss<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> (f64, f64) {
    let nr = d_real.len() as f64;
    let nf = d_fake.len() as f64;
    let mut loss_d = 0.0;
    for &p in d_real.data() {
        loss_d -= p.as_f64().max(LOG_CLAMP).ln() / nr;
    }
    let mut adv = 0.0;
    for &p in d_fake.data() {
        loss_d -= (1.0 - p.as_f64()).max(LOG_CLAMP).ln() / nf;
        adv -= p.as_f64().max(LOG_CLAMP).ln() / nf;
    }
    (loss_d, adv)
}

/// Gradients of `loss_D` with respect to the real and fake probabilities.
pub fn gan_loss_d_grads<T: Scalar>(
    d_real: &Tensor<T>,
    d_fake: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let nr = d_real.len() as f64;
    let nf = d_fake.len() as f64;
    let gr = d_real.map(|p| {
        let pf = p.as_f64();
        if pf > LOG_CLAMP {
            T::of_f64(-1.0 / (nr * pf))
        } else {
            T::zero()
        }
    });
    let gf = d_fake.map(|p| {
        let q = 1.0 - p.as_f64();
        if q > LOG_CLAMP {
            T::of_f64(1.0 / (nf * q))
        } else {
            T::zero()
        }
    });
    (gr, gf)
}

/// Gradient of the non-saturating generator term with respect to `d_fake`.
pub fn adv_loss_grad<T: Scalar>(d_fake: &Tensor<T>) -> Tensor<T> {
    let nf = d_fake.len() as f64;
    d_fake.map(|p| {
        let pf = p.as_f64();
        if pf > LOG_CLAMP {
            T::of_f64(-1.0 / (nf * pf))
        } else {
            T::zero()
        }
    })
}

/// Mean squared error over all elements.
pub fn mse_loss<T: Scalar>(input: &Tensor<T>, output: &Tensor<T>) -> f64 {
    debug_assert_eq!(input.shape(), output.shape());
    let n = input.len() as f64;
    input
        .data()
        .iter()
        .zip(output.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum::<f64>()
        / n
}

/// d(mse)/d(output).
pub fn mse_loss_grad<T: Scalar>(input: &Tensor<T>, output: &Tensor<T>) -> Tensor<T> {
    let n = input.len() as f64;
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .map(|(&a, &b)| T::of_f64(2.0 * (b.as_f64() - a.as_f64()) / n))
        .collect();
    Tensor::from_vec(input.shape(), data).unwrap()
}

fn mask_count<T: Scalar>(masks: &Tensor<T>) -> f64 {
    masks.data().iter().map(|&m| m.as_f64()).sum()
}

/// Mean squared error over pixels inside the per-frame masks only. An empty
/// total mask yields 0 with a warning.
pub fn roi_mse_loss<T: Scalar>(input: &Tensor<T>, output: &Tensor<T>, masks: &Tensor<T>) -> f64 {
    debug_assert_eq!(input.shape(), output.shape());
    debug_assert_eq!(input.shape(), masks.shape());
    let count = mask_count(masks);
    if count == 0.0 {
        log::warn!("roi_mse_loss: empty ROI mask, loss defined as 0");
        return 0.0;
    }
    let mut acc = 0.0;
    for ((&a, &b), &m) in input.data().iter().zip(output.data()).zip(masks.data()) {
        let d = a.as_f64() - b.as_f64();
        acc += m.as_f64() * d * d;
    }
    acc / count
}

/// d(roi_mse)/d(output).
pub fn roi_mse_loss_grad<T: Scalar>(
    input: &Tensor<T>,
    output: &Tensor<T>,
    masks: &Tensor<T>,
) -> Tensor<T> {
    let count = mask_count(masks);
    if count == 0.0 {
        return Tensor::zeros(output.shape());
    }
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .zip(masks.data())
        .map(|((&a, &b), &m)| T::of_f64(2.0 * m.as_f64() * (b.as_f64() - a.as_f64()) / count))
        .collect();
    Tensor::from_vec(output.shape(), data).unwrap()
}

/// Axis along which frames run: (n, t, h, w, c) batched or (t, h, w, c) bare.
fn time_extent<T: Scalar>(window: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (t, frame) = match *window.shape() {
        [n, t, h, w, c] => return Ok((n, t, h * w * c)),
        [t, h, w, c] => (t, h * w * c),
        _ => {
            return Err(Error::Shape {
                context: "frame window".into(),
                expected: vec![5],
                actual: window.shape().to_vec(),
            })
        }
    };
    Ok((1, t, frame))
}

/// Residual frames: output frame j = frame j+1 - frame j.
pub fn diff_frames<T: Scalar>(window: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, t, frame) = time_extent(window)?;
    if t < 2 {
        return Err(Error::Config("difference frames need T >= 2".into()));
    }
    let mut shape = window.shape().to_vec();
    let taxis = shape.len() - 4;
    shape[taxis] = t - 1;
    let mut out = Tensor::zeros(&shape);
    for ni in 0..n {
        let src = &window.data()[ni * t * frame..(ni + 1) * t * frame];
        let dst = &mut out.data_mut()[ni * (t - 1) * frame..(ni + 1) * (t - 1) * frame];
        for j in 0..t - 1 {
            for k in 0..frame {
                dst[j * frame + k] = src[(j + 1) * frame + k] - src[j * frame + k];
            }
        }
    }
    Ok(out)
}

/// Mask for residual frame j: the union of the masks of frames j and j+1.
pub fn union_masks<T: Scalar>(masks: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, t, frame) = time_extent(masks)?;
    if t < 2 {
        return Err(Error::Config("mask union needs T >= 2".into()));
    }
    let mut shape = masks.shape().to_vec();
    let taxis = shape.len() - 4;
    shape[taxis] = t - 1;
    let mut out = Tensor::zeros(&shape);
    for ni in 0..n {
        let src = &masks.data()[ni * t * frame..(ni + 1) * t * frame];
        let dst = &mut out.data_mut()[ni * (t - 1) * frame..(ni + 1) * (t - 1) * frame];
        for j in 0..t - 1 {
            for k in 0..frame {
                dst[j * frame + k] = src[(j + 1) * frame + k].max(src[j * frame + k]);
            }
        }
    }
    Ok(out)
}

/// Difference constraint: ROI-masked MSE between the residual frames of the
/// input and reconstructed windows.
pub fn diff_loss<T: Scalar>(
    input: &Tensor<T>,
    output: &Tensor<T>,
    union: &Tensor<T>,
) -> Result<f64> {
    let di = diff_frames(input)?;
    let dout = diff_frames(output)?;
    Ok(roi_mse_loss(&di, &dout, union))
}

/// d(diff_loss)/d(output): the adjoint of frame differencing scatters each
/// residual gradient into its two source frames.
pub fn diff_loss_grad<T: Scalar>(
    input: &Tensor<T>,
    output: &Tensor<T>,
    union: &Tensor<T>,
) -> Result<Tensor<T>> {
    let di = diff_frames(input)?;
    let dout = diff_frames(output)?;
    let g = roi_mse_loss_grad(&di, &dout, union);
    let (n, t, frame) = time_extent(output)?;
    let mut out = Tensor::zeros(output.shape());
    for ni in 0..n {
        let gsrc = &g.data()[ni * (t - 1) * frame..(ni + 1) * (t - 1) * frame];
        let dst = &mut out.data_mut()[ni * t * frame..(ni + 1) * t * frame];
        for j in 0..t - 1 {
            for k in 0..frame {
                let gv = gsrc[j * frame + k];
                dst[(j + 1) * frame + k] = dst[(j + 1) * frame + k] + gv;
                dst[j * frame + k] = dst[j * frame + k] - gv;
            }
        }
    }
    Ok(out)
}
