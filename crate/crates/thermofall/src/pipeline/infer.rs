//! Batched reconstruction of a sub-video's windows and the per-window error
//! tables the anomaly scores aggregate.

use super::score::{reconstruction_error, WindowScore};
use super::{SubVideo, WINDOW_LEN};
use crate::error::Result;
use crate::model::ModelInput;
use crate::tensor::{BnMode, Tensor};
use crate::train::{diff_frames, union_masks, ChannelSet, GanModels, TrainSample};

/// Per-window error tables for one sub-video.
#[derive(Clone, Debug, Default)]
pub struct SubVideoErrors {
    /// Per window, per frame (T=8) thermal reconstruction errors.
    pub thermal: Option<Vec<Vec<f64>>>,
    /// Per window, per frame (T-1=7) flow reconstruction errors.
    pub flow: Option<Vec<Vec<f64>>>,
    /// Per window difference-constraint score over the residual frames.
    pub diff: Option<Vec<WindowScore>>,
}

fn stack_windows(samples: &[TrainSample], pick: impl Fn(&TrainSample) -> &Tensor<f32>) -> Tensor<f32> {
    let first = pick(&samples[0]);
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(shape.iter().product());
    for s in samples {
        data.extend_from_slice(pick(s).data());
    }
    Tensor::from_vec(&shape, data).unwrap()
}

fn split_batch(batch: &Tensor<f32>) -> Vec<Tensor<f32>> {
    let n = batch.shape()[0];
    let rest: Vec<usize> = batch.shape()[1..].to_vec();
    let vol: usize = rest.iter().product();
    (0..n)
        .map(|i| {
            Tensor::from_vec(&rest, batch.data()[i * vol..(i + 1) * vol].to_vec()).unwrap()
        })
        .collect()
}

/// Reconstructs every window of `sv` and returns the error tables the
/// variant's anomaly scores need. `masked` selects the region-based error
/// (the plain variants average over the full frame).
pub fn score_subvideo(
    models: &GanModels<f32>,
    sv: &SubVideo,
    masked: bool,
    batch_size: usize,
) -> Result<SubVideoErrors> {
    let count = sv.window_count();
    let mut out = SubVideoErrors::default();
    let channels = models.variant.channels();
    let want_thermal = channels != ChannelSet::Flow;
    let want_flow = channels != ChannelSet::Thermal;
    let want_diff = models.variant.uses_diff_loss();
    if want_thermal {
        out.thermal = Some(Vec::with_capacity(count));
        if want_diff {
            out.diff = Some(Vec::with_capacity(count));
        }
    }
    if want_flow {
        out.flow = Some(Vec::with_capacity(count));
    }
    let mut start = 0;
    while start < count {
        let hi = (start + batch_size).min(count);
        let samples: Vec<TrainSample> = (start..hi).map(|s| sv.window_at(s)).collect();
        if want_thermal {
            let r = models.thermal_recon.as_ref().expect("thermal model");
            let input = stack_windows(&samples, |s| &s.thermal);
            let recon = r.forward(ModelInput::One(&input), BnMode::Infer)?;
            let recons = split_batch(&recon);
            for (sample, o) in samples.iter().zip(&recons) {
                let masks = sample.mask.clone();
                let errs = reconstruction_error(
                    &sample.thermal,
                    o,
                    if masked { Some(&masks) } else { None },
                    true,
                )?;
                debug_assert_eq!(errs.len(), WINDOW_LEN);
                out.thermal.as_mut().unwrap().push(errs);
                if want_diff {
                    let union = union_masks(&masks)?;
                    let di = diff_frames(&sample.thermal)?;
                    let dout = diff_frames(o)?;
                    let derrs = reconstruction_error(&di, &dout, Some(&union), true)?;
                    out.diff
                        .as_mut()
                        .unwrap()
                        .push(super::score::window_scores(&derrs));
                }
            }
        }
        if want_flow {
            let r = models.flow_recon.as_ref().expect("flow model");
            let input = stack_windows(&samples, |s| s.flow.as_ref().expect("flow window"));
            let recon = r.forward(ModelInput::One(&input), BnMode::Infer)?;
            let recons = split_batch(&recon);
            for (sample, o) in samples.iter().zip(&recons) {
                let flow_in = sample.flow.as_ref().unwrap();
                let union = union_masks(&sample.mask)?;
                let errs = reconstruction_error(
                    flow_in,
                    o,
                    if masked { Some(&union) } else { None },
                    true,
                )?;
                debug_assert_eq!(errs.len(), WINDOW_LEN - 1);
                out.flow.as_mut().unwrap().push(errs);
            }
        }
        start = hi;
    }
    Ok(out)
}
