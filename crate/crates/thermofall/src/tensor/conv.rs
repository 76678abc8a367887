//! 3D convolution and transposed convolution, forward and backward.
//!
//! Layouts: activations are (n, d, h, w, c) row-major (a leading batch axis
//! is optional on the public entry points), regular kernels are
//! (kd, kh, kw, in_ch, out_ch). A transposed layer stores the kernel of its
//! associated forward convolution — the one mapping the layer's output space
//! back to its input space — so its weight tensor is (kd, kh, kw, out_ch,
//! in_ch) and the transposed forward pass is exactly the adjoint of that
//! convolution.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::tensor::Activation;

/// Static description of one (de)convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerSpec {
    pub name: String,
    /// (temporal depth, kernel height, kernel width)
    pub kernel: (usize, usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    /// (stride depth, stride height, stride width)
    pub stride: (usize, usize, usize),
    /// Explicit (before, after) padding per d/h/w axis. For a transposed
    /// layer these are the padding amounts of the associated convolution.
    pub padding: [(usize, usize); 3],
    pub has_batchnorm: bool,
    pub activation: Activation,
    pub transposed: bool,
}

impl ConvLayerSpec {
    /// Shape of the weight tensor this spec expects.
    pub fn weight_shape(&self) -> [usize; 5] {
        let (kd, kh, kw) = self.kernel;
        if self.transposed {
            [kd, kh, kw, self.out_channels, self.in_channels]
        } else {
            [kd, kh, kw, self.in_channels, self.out_channels]
        }
    }

    /// Spatial output extents for a (d, h, w) input.
    pub fn output_dhw(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let dims_in = [input.0, input.1, input.2];
        let k = [self.kernel.0, self.kernel.1, self.kernel.2];
        let s = [self.stride.0, self.stride.1, self.stride.2];
        let mut out = [0usize; 3];
        for ax in 0..3 {
            let (pb, pa) = self.padding[ax];
            if self.transposed {
                let raw = (dims_in[ax] - 1) * s[ax] + k[ax];
                if pb + pa > raw {
                    return Err(Error::ModelBuild {
                        layer: self.name.clone(),
                        reason: format!("crop {}+{} exceeds raw extent {raw}", pb, pa),
                    });
                }
                out[ax] = raw - pb - pa;
            } else {
                let padded = dims_in[ax] + pb + pa;
                if padded < k[ax] {
                    return Err(Error::ModelBuild {
                        layer: self.name.clone(),
                        reason: format!(
                            "padded extent {padded} smaller than kernel {}",
                            k[ax]
                        ),
                    });
                }
                out[ax] = (padded - k[ax]) / s[ax] + 1;
            }
        }
        Ok((out[0], out[1], out[2]))
    }
}

/// (before, after) padding that makes a strided convolution land exactly on
/// `output` extents; the extra unit goes after when parity forces asymmetry.
pub fn same_conv_padding(
    input: usize,
    kernel: usize,
    stride: usize,
    output: usize,
) -> Result<(usize, usize)> {
    let needed = (output - 1) * stride + kernel;
    if needed < input {
        return Err(Error::Config(format!(
            "no non-negative padding maps extent {input} to {output} with kernel {kernel}, stride {stride}"
        )));
    }
    let total = needed - input;
    let before = total / 2;
    let after = total - before;
    let got = (input + total - kernel) / stride + 1;
    if got != output {
        return Err(Error::Config(format!(
            "extent {input} with kernel {kernel}, stride {stride}, padding {total} yields {got}, not {output}"
        )));
    }
    Ok((before, after))
}

/// Padding of the associated convolution of a transposed layer mapping
/// `input` extents to `output` extents.
pub fn transposed_crop(
    input: usize,
    kernel: usize,
    stride: usize,
    output: usize,
) -> Result<(usize, usize)> {
    same_conv_padding(output, kernel, stride, input)
}

/// Gradients produced by a (de)convolution backward pass.
#[derive(Clone, Debug)]
pub struct Conv3dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

struct Geometry {
    n: usize,
    in_dhw: (usize, usize, usize),
    out_dhw: (usize, usize, usize),
    batched: bool,
}

fn check_shapes<T: Scalar>(
    spec: &ConvLayerSpec,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<Geometry> {
    if weights.shape() != spec.weight_shape() {
        return Err(Error::Shape {
            context: format!("layer `{}` weights", spec.name),
            expected: spec.weight_shape().to_vec(),
            actual: weights.shape().to_vec(),
        });
    }
    let (batched, n, dhw, c) = match *input.shape() {
        [d, h, w, c] => (false, 1, (d, h, w), c),
        [n, d, h, w, c] => (true, n, (d, h, w), c),
        _ => {
            return Err(Error::Shape {
                context: format!("layer `{}` input rank", spec.name),
                expected: vec![5],
                actual: input.shape().to_vec(),
            })
        }
    };
    let expect_c = spec.in_channels;
    if c != expect_c {
        return Err(Error::Shape {
            context: format!("layer `{}` input channels", spec.name),
            expected: vec![expect_c],
            actual: vec![c],
        });
    }
    let out_dhw = spec.output_dhw(dhw)?;
    Ok(Geometry {
        n,
        in_dhw: dhw,
        out_dhw,
        batched,
    })
}

/// Valid kernel range on one axis: the `ki` with `0 <= o*s + ki - pad < dim`.
#[inline]
fn kernel_range(o: usize, stride: usize, pad: usize, kernel: usize, dim: usize) -> (usize, usize) {
    let base = (o * stride) as isize - pad as isize;
    let lo = (-base).max(0) as usize;
    let hi = ((dim as isize - base).max(0) as usize).min(kernel);
    (lo, hi.max(lo))
}

/// y[n,o,co] = sum_k sum_ci x[n, o*s + k - p, ci] * w[k, ci, co] (+ bias).
///
/// Dispatches on the output-channel count so the accumulator is a
/// fixed-size array the optimizer can keep in registers.
fn kernel_fwd<T: Scalar>(
    x: &[T],
    n: usize,
    dhw: (usize, usize, usize),
    ci: usize,
    wgt: &[T],
    k: (usize, usize, usize),
    co: usize,
    stride: (usize, usize, usize),
    pad: [(usize, usize); 3],
    out_dhw: (usize, usize, usize),
    bias: Option<&[T]>,
    y: &mut [T],
) {
    match co {
        1 => kernel_fwd_co::<T, 1>(x, n, dhw, ci, wgt, k, stride, pad, out_dhw, bias, y),
        8 => kernel_fwd_co::<T, 8>(x, n, dhw, ci, wgt, k, stride, pad, out_dhw, bias, y),
        16 => kernel_fwd_co::<T, 16>(x, n, dhw, ci, wgt, k, stride, pad, out_dhw, bias, y),
        _ => kernel_fwd_dyn(x, n, dhw, ci, wgt, k, co, stride, pad, out_dhw, bias, y),
    }
}

fn kernel_fwd_co<T: Scalar, const CO: usize>(
    x: &[T],
    n: usize,
    (d, h, w): (usize, usize, usize),
    ci: usize,
    wgt: &[T],
    (kd, kh, kw): (usize, usize, usize),
    (sd, sh, sw): (usize, usize, usize),
    pad: [(usize, usize); 3],
    (od, oh, ow): (usize, usize, usize),
    bias: Option<&[T]>,
    y: &mut [T],
) {
    let x_row = w * ci;
    let x_plane = h * x_row;
    let x_samp = d * x_plane;
    let w_pos = ci * CO;
    let mut yi = 0usize;
    for ni in 0..n {
        let xs = &x[ni * x_samp..(ni + 1) * x_samp];
        for odi in 0..od {
            let (kd_lo, kd_hi) = kernel_range(odi, sd, pad[0].0, kd, d);
            let id_base = (odi * sd) as isize - pad[0].0 as isize;
            for ohi in 0..oh {
                let (kh_lo, kh_hi) = kernel_range(ohi, sh, pad[1].0, kh, h);
                let ih_base = (ohi * sh) as isize - pad[1].0 as isize;
                for owi in 0..ow {
                    let (kw_lo, kw_hi) = kernel_range(owi, sw, pad[2].0, kw, w);
                    let iw_base = (owi * sw) as isize - pad[2].0 as isize;
                    let mut acc = [T::zero(); CO];
                    if let Some(b) = bias {
                        acc.copy_from_slice(b);
                    }
                    let run = (kw_hi - kw_lo) * ci;
                    for kdi in kd_lo..kd_hi {
                        let id = (id_base + kdi as isize) as usize;
                        for khi in kh_lo..kh_hi {
                            let ih = (ih_base + khi as isize) as usize;
                            let iw0 = (iw_base + kw_lo as isize) as usize;
                            let x0 = id * x_plane + ih * x_row + iw0 * ci;
                            let xseg = &xs[x0..x0 + run];
                            let w0 = ((kdi * kh + khi) * kw + kw_lo) * w_pos;
                            let wseg = &wgt[w0..w0 + run * CO];
                            for (xv, wrow) in xseg.iter().zip(wseg.chunks_exact(CO)) {
                                let v = *xv;
                                for a in 0..CO {
                                    acc[a] = acc[a] + v * wrow[a];
                                }
                            }
                        }
                    }
                    y[yi..yi + CO].copy_from_slice(&acc);
                    yi += CO;
                }
            }
        }
    }
}

fn kernel_fwd_dyn<T: Scalar>(
    x: &[T],
    n: usize,
    (d, h, w): (usize, usize, usize),
    ci: usize,
    wgt: &[T],
    (kd, kh, kw): (usize, usize, usize),
    co: usize,
    (sd, sh, sw): (usize, usize, usize),
    pad: [(usize, usize); 3],
    (od, oh, ow): (usize, usize, usize),
    bias: Option<&[T]>,
    y: &mut [T],
) {
    let x_row = w * ci;
    let x_plane = h * x_row;
    let x_samp = d * x_plane;
    let w_pos = ci * co; // one (kd,kh,kw) cell
    let mut acc = vec![T::zero(); co];
    let mut yi = 0usize;
    for ni in 0..n {
        let xs = &x[ni * x_samp..(ni + 1) * x_samp];
        for odi in 0..od {
            let (kd_lo, kd_hi) = kernel_range(odi, sd, pad[0].0, kd, d);
            let id_base = (odi * sd) as isize - pad[0].0 as isize;
            for ohi in 0..oh {
                let (kh_lo, kh_hi) = kernel_range(ohi, sh, pad[1].0, kh, h);
                let ih_base = (ohi * sh) as isize - pad[1].0 as isize;
                for owi in 0..ow {
                    let (kw_lo, kw_hi) = kernel_range(owi, sw, pad[2].0, kw, w);
                    let iw_base = (owi * sw) as isize - pad[2].0 as isize;
                    match bias {
                        Some(b) => acc.copy_from_slice(b),
                        None => acc.iter_mut().for_each(|a| *a = T::zero()),
                    }
                    let run = (kw_hi - kw_lo) * ci;
                    for kdi in kd_lo..kd_hi {
                        let id = (id_base + kdi as isize) as usize;
                        for khi in kh_lo..kh_hi {
                            let ih = (ih_base + khi as isize) as usize;
                            let iw0 = (iw_base + kw_lo as isize) as usize;
                            let x0 = id * x_plane + ih * x_row + iw0 * ci;
                            let xseg = &xs[x0..x0 + run];
                            let w0 = ((kdi * kh + khi) * kw + kw_lo) * w_pos;
                            let wseg = &wgt[w0..w0 + run * co];
                            for (xv, wrow) in xseg.iter().zip(wseg.chunks_exact(co)) {
                                let v = *xv;
                                for (a, wv) in acc.iter_mut().zip(wrow) {
                                    *a = *a + v * *wv;
                                }
                            }
                        }
                    }
                    y[yi..yi + co].copy_from_slice(&acc);
                    yi += co;
                }
            }
        }
    }
}

/// Contiguous output interval [lo, hi) whose receptive field hits valid input
/// on one axis for a fixed kernel offset `k`: the o with 0 <= o*s + k - pad < dim.
#[inline]
fn out_interval(k: usize, pad: usize, stride: usize, in_dim: usize, out_dim: usize) -> (usize, usize) {
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    let hi_raw = in_dim as isize - 1 + pad as isize - k as isize;
    if hi_raw < 0 {
        return (0, 0);
    }
    let hi = (hi_raw as usize / stride + 1).min(out_dim);
    (lo.min(hi), hi)
}

/// gx[n,i,ci] += sum_{o,k: o*s+k-p=i} sum_co gy[n,o,co] * w[k, ci, co].
fn kernel_bwd_input<T: Scalar>(
    gy: &[T],
    n: usize,
    dhw: (usize, usize, usize),
    ci: usize,
    wgt: &[T],
    k: (usize, usize, usize),
    co: usize,
    stride: (usize, usize, usize),
    pad: [(usize, usize); 3],
    out_dhw: (usize, usize, usize),
    gx: &mut [T],
) {
    // Transposed kernel view (kd, kh, kw, co, ci) so the inner row is
    // contiguous over input channels.
    let (kd, kh, kw) = k;
    let mut wt = vec![T::zero(); wgt.len()];
    for cell in 0..kd * kh * kw {
        let src = &wgt[cell * ci * co..(cell + 1) * ci * co];
        let dst = &mut wt[cell * ci * co..(cell + 1) * ci * co];
        for i in 0..ci {
            for o in 0..co {
                dst[o * ci + i] = src[i * co + o];
            }
        }
    }
    match ci {
        1 => kernel_bwd_input_ci::<T, 1>(gy, n, dhw, &wt, k, co, stride, pad, out_dhw, gx),
        8 => kernel_bwd_input_ci::<T, 8>(gy, n, dhw, &wt, k, co, stride, pad, out_dhw, gx),
        16 => kernel_bwd_input_ci::<T, 16>(gy, n, dhw, &wt, k, co, stride, pad, out_dhw, gx),
        _ => kernel_bwd_input_dyn(gy, n, dhw, ci, &wt, k, co, stride, pad, out_dhw, gx),
    }
}

fn kernel_bwd_input_ci<T: Scalar, const CI: usize>(
    gy: &[T],
    n: usize,
    (d, h, w): (usize, usize, usize),
    wt: &[T],
    (kd, kh, kw): (usize, usize, usize),
    co: usize,
    (sd, sh, sw): (usize, usize, usize),
    pad: [(usize, usize); 3],
    (od, oh, ow): (usize, usize, usize),
    gx: &mut [T],
) {
    let x_row = w * CI;
    let x_plane = h * x_row;
    let x_samp = d * x_plane;
    let y_row = ow * co;
    let y_plane = oh * y_row;
    let y_samp = od * y_plane;
    for ni in 0..n {
        let gxs = &mut gx[ni * x_samp..(ni + 1) * x_samp];
        let gys = &gy[ni * y_samp..(ni + 1) * y_samp];
        for kdi in 0..kd {
            let (od_lo, od_hi) = out_interval(kdi, pad[0].0, sd, d, od);
            for khi in 0..kh {
                let (oh_lo, oh_hi) = out_interval(khi, pad[1].0, sh, h, oh);
                for kwi in 0..kw {
                    let (ow_lo, ow_hi) = out_interval(kwi, pad[2].0, sw, w, ow);
                    let wcell = &wt[((kdi * kh + khi) * kw + kwi) * CI * co..][..CI * co];
                    for odi in od_lo..od_hi {
                        let id = odi * sd + kdi - pad[0].0;
                        for ohi in oh_lo..oh_hi {
                            let ih = ohi * sh + khi - pad[1].0;
                            let mut goff = (odi * oh + ohi) * y_row + ow_lo * co;
                            let mut xoff =
                                id * x_plane + ih * x_row + (ow_lo * sw + kwi - pad[2].0) * CI;
                            for _ in ow_lo..ow_hi {
                                let go = &gys[goff..goff + co];
                                let gxrow = &mut gxs[xoff..xoff + CI];
                                let mut acc = [T::zero(); CI];
                                acc.copy_from_slice(gxrow);
                                for (g, wrow) in go.iter().zip(wcell.chunks_exact(CI)) {
                                    let v = *g;
                                    for c in 0..CI {
                                        acc[c] = acc[c] + v * wrow[c];
                                    }
                                }
                                gxrow.copy_from_slice(&acc);
                                goff += co;
                                xoff += sw * CI;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn kernel_bwd_input_dyn<T: Scalar>(
    gy: &[T],
    n: usize,
    (d, h, w): (usize, usize, usize),
    ci: usize,
    wt: &[T],
    (kd, kh, kw): (usize, usize, usize),
    co: usize,
    (sd, sh, sw): (usize, usize, usize),
    pad: [(usize, usize); 3],
    (od, oh, ow): (usize, usize, usize),
    gx: &mut [T],
) {
    let x_row = w * ci;
    let x_plane = h * x_row;
    let x_samp = d * x_plane;
    let y_row = ow * co;
    let y_plane = oh * y_row;
    let y_samp = od * y_plane;
    for ni in 0..n {
        let gxs = &mut gx[ni * x_samp..(ni + 1) * x_samp];
        let gys = &gy[ni * y_samp..(ni + 1) * y_samp];
        for kdi in 0..kd {
            let (od_lo, od_hi) = out_interval(kdi, pad[0].0, sd, d, od);
            for khi in 0..kh {
                let (oh_lo, oh_hi) = out_interval(khi, pad[1].0, sh, h, oh);
                for kwi in 0..kw {
                    let (ow_lo, ow_hi) = out_interval(kwi, pad[2].0, sw, w, ow);
                    let wcell = &wt[((kdi * kh + khi) * kw + kwi) * ci * co..][..ci * co];
                    for odi in od_lo..od_hi {
                        let id = odi * sd + kdi - pad[0].0;
                        for ohi in oh_lo..oh_hi {
                            let ih = ohi * sh + khi - pad[1].0;
                            let mut goff = (odi * oh + ohi) * y_row + ow_lo * co;
                            let mut xoff =
                                id * x_plane + ih * x_row + (ow_lo * sw + kwi - pad[2].0) * ci;
                            for _ in ow_lo..ow_hi {
                                let go = &gys[goff..goff + co];
                                let gxrow = &mut gxs[xoff..xoff + ci];
                                for (g, wrow) in go.iter().zip(wcell.chunks_exact(ci)) {
                                    let v = *g;
                                    for (a, wv) in gxrow.iter_mut().zip(wrow) {
                                        *a = *a + v * *wv;
                                    }
                                }
                                goff += co;
                                xoff += sw * ci;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// gw[k,ci,co] += x[n, o*s+k-p, ci] * gy[n,o,co]; gb[co] += gy[n,o,co].
fn kernel_bwd_params<T: Scalar>(
    x: &[T],
    gy: &[T],
    n: usize,
    dhw: (usize, usize, usize),
    ci: usize,
    k: (usize, usize, usize),
    co: usize,
    stride: (usize, usize, usize),
    pad: [(usize, usize); 3],
    out_dhw: (usize, usize, usize),
    gw: &mut [T],
    gb: Option<&mut [T]>,
) {
    if let Some(gb) = gb {
        for row in gy.chunks_exact(co) {
            for (b, g) in gb.iter_mut().zip(row) {
                *b = *b + *g;
            }
        }
    }
    match (ci, co) {
        (1, 16) => kernel_bwd_params_tile::<T, 1, 16>(x, gy, n, dhw, k, stride, pad, out_dhw, gw),
        (16, 8) => kernel_bwd_params_tile::<T, 16, 8>(x, gy, n, dhw, k, stride, pad, out_dhw, gw),
        (8, 8) => kernel_bwd_params_tile::<T, 8, 8>(x, gy, n, dhw, k, stride, pad, out_dhw, gw),
        (8, 16) => kernel_bwd_params_tile::<T, 8, 16>(x, gy, n, dhw, k, stride, pad, out_dhw, gw),
        (16, 1) => kernel_bwd_params_tile::<T, 16, 1>(x, gy, n, dhw, k, stride, pad, out_dhw, gw),
        (1, 8) => kernel_bwd_params_tile::<T, 1, 8>(x, gy, n, dhw, k, stride, pad, out_dhw, gw),
        (8, 1) => kernel_bwd_params_tile::<T, 8, 1>(x, gy, n, dhw, k, stride, pad, out_dhw, gw),
        _ => kernel_bwd_params_dyn(x, gy, n, dhw, ci, k, co, stride, pad, out_dhw, gw),
    }
}

/// For each kernel cell, sweep every valid output position once and rank-one
/// update a register tile of all (in_ch, out_ch) weight gradients.
#[allow(clippy::too_many_arguments)]
fn kernel_bwd_params_tile<T: Scalar, const CI: usize, const CO: usize>(
    x: &[T],
    gy: &[T],
    n: usize,
    (d, h, w): (usize, usize, usize),
    (kd, kh, kw): (usize, usize, usize),
    (sd, sh, sw): (usize, usize, usize),
    pad: [(usize, usize); 3],
    (od, oh, ow): (usize, usize, usize),
    gw: &mut [T],
) {
    let x_row = w * CI;
    let x_plane = h * x_row;
    let x_samp = d * x_plane;
    let y_row = ow * CO;
    let y_plane = oh * y_row;
    let y_samp = od * y_plane;
    for kdi in 0..kd {
        let (od_lo, od_hi) = out_interval(kdi, pad[0].0, sd, d, od);
        for khi in 0..kh {
            let (oh_lo, oh_hi) = out_interval(khi, pad[1].0, sh, h, oh);
            for kwi in 0..kw {
                let (ow_lo, ow_hi) = out_interval(kwi, pad[2].0, sw, w, ow);
                let cell = ((kdi * kh + khi) * kw + kwi) * CI * CO;
                let mut acc = [[T::zero(); CO]; CI];
                for ni in 0..n {
                    let xs = &x[ni * x_samp..(ni + 1) * x_samp];
                    let gys = &gy[ni * y_samp..(ni + 1) * y_samp];
                    for odi in od_lo..od_hi {
                        let id = odi * sd + kdi - pad[0].0;
                        for ohi in oh_lo..oh_hi {
                            let ih = ohi * sh + khi - pad[1].0;
                            let mut goff = (odi * oh + ohi) * y_row + ow_lo * CO;
                            let mut xoff =
                                id * x_plane + ih * x_row + (ow_lo * sw + kwi - pad[2].0) * CI;
                            for _ in ow_lo..ow_hi {
                                let xrow = &xs[xoff..xoff + CI];
                                let go = &gys[goff..goff + CO];
                                for ic in 0..CI {
                                    let v = xrow[ic];
                                    let row = &mut acc[ic];
                                    for a in 0..CO {
                                        row[a] = row[a] + v * go[a];
                                    }
                                }
                                goff += CO;
                                xoff += sw * CI;
                            }
                        }
                    }
                }
                for (ic, row) in acc.iter().enumerate() {
                    let gwrow = &mut gw[cell + ic * CO..cell + (ic + 1) * CO];
                    for (gwv, a) in gwrow.iter_mut().zip(row.iter()) {
                        *gwv = *gwv + *a;
                    }
                }
            }
        }
    }
}

fn kernel_bwd_params_dyn<T: Scalar>(
    x: &[T],
    gy: &[T],
    n: usize,
    (d, h, w): (usize, usize, usize),
    ci: usize,
    (kd, kh, kw): (usize, usize, usize),
    co: usize,
    (sd, sh, sw): (usize, usize, usize),
    pad: [(usize, usize); 3],
    (od, oh, ow): (usize, usize, usize),
    gw: &mut [T],
) {
    let x_row = w * ci;
    let x_plane = h * x_row;
    let x_samp = d * x_plane;
    let y_row = ow * co;
    let y_plane = oh * y_row;
    let y_samp = od * y_plane;
    for kdi in 0..kd {
        let (od_lo, od_hi) = out_interval(kdi, pad[0].0, sd, d, od);
        for khi in 0..kh {
            let (oh_lo, oh_hi) = out_interval(khi, pad[1].0, sh, h, oh);
            for kwi in 0..kw {
                let (ow_lo, ow_hi) = out_interval(kwi, pad[2].0, sw, w, ow);
                let cell = ((kdi * kh + khi) * kw + kwi) * ci * co;
                for ni in 0..n {
                    let xs = &x[ni * x_samp..(ni + 1) * x_samp];
                    let gys = &gy[ni * y_samp..(ni + 1) * y_samp];
                    for odi in od_lo..od_hi {
                        let id = odi * sd + kdi - pad[0].0;
                        for ohi in oh_lo..oh_hi {
                            let ih = ohi * sh + khi - pad[1].0;
                            let mut goff = (odi * oh + ohi) * y_row + ow_lo * co;
                            let mut xoff =
                                id * x_plane + ih * x_row + (ow_lo * sw + kwi - pad[2].0) * ci;
                            for _ in ow_lo..ow_hi {
                                let go = &gys[goff..goff + co];
                                let xrow = &xs[xoff..xoff + ci];
                                let gwseg = &mut gw[cell..cell + ci * co];
                                for (ic, xv) in xrow.iter().enumerate() {
                                    let v = *xv;
                                    for (gwv, g) in
                                        gwseg[ic * co..(ic + 1) * co].iter_mut().zip(go)
                                    {
                                        *gwv = *gwv + v * *g;
                                    }
                                }
                                goff += co;
                                xoff += sw * ci;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn out_tensor_shape(geo: &Geometry, co: usize) -> Vec<usize> {
    let (od, oh, ow) = geo.out_dhw;
    if geo.batched {
        vec![geo.n, od, oh, ow, co]
    } else {
        vec![od, oh, ow, co]
    }
}

fn check_grad_output<T: Scalar>(
    spec: &ConvLayerSpec,
    geo: &Geometry,
    co: usize,
    grad_output: &Tensor<T>,
) -> Result<()> {
    let want = out_tensor_shape(geo, co);
    if grad_output.shape() != want.as_slice() {
        return Err(Error::Shape {
            context: format!("layer `{}` grad_output", spec.name),
            expected: want,
            actual: grad_output.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_bias<T: Scalar>(spec: &ConvLayerSpec, co: usize, bias: &Tensor<T>) -> Result<()> {
    if bias.shape() != [co] {
        return Err(Error::Shape {
            context: format!("layer `{}` bias", spec.name),
            expected: vec![co],
            actual: bias.shape().to_vec(),
        });
    }
    Ok(())
}

/// Forward 3D convolution. Input may be (d,h,w,c) or (n,d,h,w,c).
pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    assert!(!spec.transposed, "conv3d_forward on transposed spec");
    let geo = check_shapes(spec, input, weights)?;
    check_bias(spec, spec.out_channels, bias)?;
    let mut out = Tensor::zeros(&out_tensor_shape(&geo, spec.out_channels));
    kernel_fwd(
        input.data(),
        geo.n,
        geo.in_dhw,
        spec.in_channels,
        weights.data(),
        spec.kernel,
        spec.out_channels,
        spec.stride,
        spec.padding,
        geo.out_dhw,
        Some(bias.data()),
        out.data_mut(),
    );
    Ok(out)
}

/// Backward 3D convolution: gradients for input, weights and bias.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<Conv3dGrads<T>> {
    assert!(!spec.transposed, "conv3d_backward on transposed spec");
    let geo = check_shapes(spec, input, weights)?;
    check_grad_output(spec, &geo, spec.out_channels, grad_output)?;
    let mut gx = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(&[spec.out_channels]);
    kernel_bwd_input(
        grad_output.data(),
        geo.n,
        geo.in_dhw,
        spec.in_channels,
        weights.data(),
        spec.kernel,
        spec.out_channels,
        spec.stride,
        spec.padding,
        geo.out_dhw,
        gx.data_mut(),
    );
    kernel_bwd_params(
        input.data(),
        grad_output.data(),
        geo.n,
        geo.in_dhw,
        spec.in_channels,
        spec.kernel,
        spec.out_channels,
        spec.stride,
        spec.padding,
        geo.out_dhw,
        gw.data_mut(),
        Some(gb.data_mut()),
    );
    Ok(Conv3dGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}

/// Input gradient only, for backprop paths that do not update this layer.
pub fn conv3d_backward_input<T: Scalar>(
    input_shape: &[usize],
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>> {
    assert!(!spec.transposed);
    let probe = Tensor::<T>::zeros(input_shape);
    let geo = check_shapes(spec, &probe, weights)?;
    check_grad_output(spec, &geo, spec.out_channels, grad_output)?;
    let mut gx = Tensor::zeros(input_shape);
    kernel_bwd_input(
        grad_output.data(),
        geo.n,
        geo.in_dhw,
        spec.in_channels,
        weights.data(),
        spec.kernel,
        spec.out_channels,
        spec.stride,
        spec.padding,
        geo.out_dhw,
        gx.data_mut(),
    );
    Ok(gx)
}

/// Input gradient only for a transposed layer.
pub fn deconv3d_backward_input<T: Scalar>(
    input_shape: &[usize],
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>> {
    assert!(spec.transposed);
    let probe = Tensor::<T>::zeros(input_shape);
    let geo = check_shapes(spec, &probe, weights)?;
    check_grad_output(spec, &geo, spec.out_channels, grad_output)?;
    let mut gx = Tensor::zeros(input_shape);
    kernel_fwd(
        grad_output.data(),
        geo.n,
        geo.out_dhw,
        spec.out_channels,
        weights.data(),
        spec.kernel,
        spec.in_channels,
        spec.stride,
        spec.padding,
        geo.in_dhw,
        None,
        gx.data_mut(),
    );
    Ok(gx)
}

/// Forward transposed convolution: the adjoint of the associated convolution,
/// plus a per-channel bias.
pub fn deconv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    assert!(spec.transposed, "deconv3d_forward on non-transposed spec");
    let geo = check_shapes(spec, input, weights)?;
    check_bias(spec, spec.out_channels, bias)?;
    let mut out = Tensor::zeros(&out_tensor_shape(&geo, spec.out_channels));
    // The associated convolution maps this layer's output space back to its
    // input space, so the forward pass scatters through kernel_bwd_input.
    kernel_bwd_input(
        input.data(),
        geo.n,
        geo.out_dhw,
        spec.out_channels,
        weights.data(),
        spec.kernel,
        spec.in_channels,
        spec.stride,
        spec.padding,
        geo.in_dhw,
        out.data_mut(),
    );
    let co = spec.out_channels;
    for row in out.data_mut().chunks_exact_mut(co) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v = *v + *b;
        }
    }
    Ok(out)
}

/// Backward transposed convolution.
pub fn deconv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvLayerSpec,
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<Conv3dGrads<T>> {
    assert!(spec.transposed, "deconv3d_backward on non-transposed spec");
    let geo = check_shapes(spec, input, weights)?;
    check_grad_output(spec, &geo, spec.out_channels, grad_output)?;
    let mut gx = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(&[spec.out_channels]);
    // d/d(input): the adjoint of the adjoint is the associated convolution.
    kernel_fwd(
        grad_output.data(),
        geo.n,
        geo.out_dhw,
        spec.out_channels,
        weights.data(),
        spec.kernel,
        spec.in_channels,
        spec.stride,
        spec.padding,
        geo.in_dhw,
        None,
        gx.data_mut(),
    );
    // d/d(weights): the associated convolution sees grad_output as its input
    // and this layer's input as its cotangent.
    kernel_bwd_params(
        grad_output.data(),
        input.data(),
        geo.n,
        geo.out_dhw,
        spec.out_channels,
        spec.kernel,
        spec.in_channels,
        spec.stride,
        spec.padding,
        geo.in_dhw,
        gw.data_mut(),
        None,
    );
    for row in grad_output.data().chunks_exact(spec.out_channels) {
        for (b, g) in gb.data_mut().iter_mut().zip(row) {
            *b = *b + *g;
        }
    }
    Ok(Conv3dGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}
