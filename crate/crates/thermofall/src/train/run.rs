//! The alternating adversarial training loop: one discriminator step then one
//! generator step per batch, SGD vs Adadelta, deterministic under a fixed
//! seed.

use super::{ChannelSet, LossConfig, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::model::{
    build_discriminator, build_flow_3dcae, build_joint_discriminator, build_thermal_3dcae,
    Channel, InputGrad, Model, ModelGrads, ModelInput,
};
use crate::tensor::{
    load_checkpoint, save_checkpoint, BnMode, OptimizerState, Scalar, Tensor,
};
use crate::train::loss::{
    adv_loss_grad, diff_loss, diff_loss_grad, gan_loss, gan_loss_d_grads, mse_loss, mse_loss_grad,
    roi_mse_loss, roi_mse_loss_grad, union_masks,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// One preprocessed training window: the thermal window, its per-frame ROI
/// masks, and the corresponding flow-magnitude window when present.
#[derive(Clone, Debug)]
pub struct TrainSample {
    /// (8, 64, 64, 1), values in [-1, 1].
    pub thermal: Tensor<f32>,
    /// (8, 64, 64, 1), 0/1.
    pub mask: Tensor<f32>,
    /// (7, 64, 64, 1), values in [-1, 1].
    pub flow: Option<Tensor<f32>>,
}

/// Source of training windows; implementations may build samples on demand.
pub trait WindowSet {
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> TrainSample;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl WindowSet for [TrainSample] {
    fn len(&self) -> usize {
        <[TrainSample]>::len(self)
    }
    fn get(&self, i: usize) -> TrainSample {
        self[i].clone()
    }
}

impl WindowSet for Vec<TrainSample> {
    fn len(&self) -> usize {
        <[TrainSample]>::len(self)
    }
    fn get(&self, i: usize) -> TrainSample {
        self[i].clone()
    }
}

/// A stacked mini-batch.
#[derive(Clone, Debug)]
pub struct Batch<T = f32> {
    pub thermal: Tensor<T>,
    pub masks: Tensor<T>,
    /// Union of consecutive frame masks; masks the difference loss and the
    /// flow ROI loss.
    pub union: Tensor<T>,
    pub flow: Option<Tensor<T>>,
}

fn stack<T: Scalar>(samples: &[&TrainSample], pick: impl Fn(&TrainSample) -> &Tensor<f32>) -> Tensor<T> {
    let first = pick(samples[0]);
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(shape.iter().product());
    for s in samples {
        data.extend(pick(s).data().iter().map(|&v| T::of_f64(v as f64)));
    }
    Tensor::from_vec(&shape, data).unwrap()
}

impl<T: Scalar> Batch<T> {
    pub fn assemble(samples: &[&TrainSample], needs_flow: bool) -> Result<Batch<T>> {
        if samples.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let thermal = stack(samples, |s| &s.thermal);
        let masks = stack(samples, |s| &s.mask);
        let union = union_masks(&masks)?;
        let flow = if needs_flow {
            if samples.iter().any(|s| s.flow.is_none()) {
                return Err(Error::Config(
                    "variant needs flow windows but the dataset has none".into(),
                ));
            }
            Some(stack(samples, |s| s.flow.as_ref().unwrap()))
        } else {
            None
        };
        Ok(Batch {
            thermal,
            masks,
            union,
            flow,
        })
    }
}

/// The models of one variant: its reconstructors and discriminator.
#[derive(Clone, Debug)]
pub struct GanModels<T = f32> {
    pub variant: Variant,
    pub thermal_recon: Option<Model<T>>,
    pub flow_recon: Option<Model<T>>,
    pub discriminator: Model<T>,
}

impl GanModels<f32> {
    pub fn build(variant: Variant, seed: u64) -> Result<GanModels<f32>> {
        let (thermal_recon, flow_recon, discriminator) = match variant.channels() {
            ChannelSet::Thermal => (
                Some(build_thermal_3dcae(seed)?),
                None,
                build_discriminator(Channel::Thermal, seed.wrapping_add(2))?,
            ),
            ChannelSet::Flow => (
                None,
                Some(build_flow_3dcae(seed.wrapping_add(1))?),
                build_discriminator(Channel::Flow, seed.wrapping_add(2))?,
            ),
            ChannelSet::Fusion => (
                Some(build_thermal_3dcae(seed)?),
                Some(build_flow_3dcae(seed.wrapping_add(1))?),
                build_joint_discriminator(seed.wrapping_add(2))?,
            ),
        };
        Ok(GanModels {
            variant,
            thermal_recon,
            flow_recon,
            discriminator,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries: Vec<(String, &Tensor<f32>)> = Vec::new();
        for m in self.models() {
            entries.extend(m.named_tensors());
        }
        save_checkpoint(path, &entries)
    }

    pub fn load(variant: Variant, path: &Path) -> Result<GanModels<f32>> {
        let entries = load_checkpoint(path)?;
        let mut models = GanModels::build(variant, 0)?;
        for m in models.models_mut() {
            m.load_named(&entries)?;
        }
        Ok(models)
    }

    fn models(&self) -> Vec<&Model<f32>> {
        let mut out = Vec::new();
        if let Some(m) = &self.thermal_recon {
            out.push(m);
        }
        if let Some(m) = &self.flow_recon {
            out.push(m);
        }
        out.push(&self.discriminator);
        out
    }

    fn models_mut(&mut self) -> Vec<&mut Model<f32>> {
        let mut out: Vec<&mut Model<f32>> = Vec::new();
        if let Some(m) = &mut self.thermal_recon {
            out.push(m);
        }
        if let Some(m) = &mut self.flow_recon {
            out.push(m);
        }
        out.push(&mut self.discriminator);
        out
    }

    pub fn cast<U: Scalar>(&self) -> GanModels<U> {
        GanModels {
            variant: self.variant,
            thermal_recon: self.thermal_recon.as_ref().map(|m| m.cast()),
            flow_recon: self.flow_recon.as_ref().map(|m| m.cast()),
            discriminator: self.discriminator.cast(),
        }
    }
}

/// Reconstructor outputs for one batch.
pub struct GeneratorOutputs<'a, T> {
    pub thermal: Option<&'a Tensor<T>>,
    pub flow: Option<&'a Tensor<T>>,
}

/// Unweighted loss terms plus the weighted total the generator minimizes.
#[derive(Clone, Copy, Debug, Default)]
pub struct GeneratorLossTerms {
    pub adversarial: f64,
    pub recon_thermal: f64,
    pub diff: f64,
    pub recon_flow: f64,
    pub total: f64,
}

/// Gradients of the weighted generator loss with respect to the
/// reconstructions and the fake-probability vector.
#[derive(Debug)]
pub struct GeneratorGrads<T> {
    pub thermal: Option<Tensor<T>>,
    pub flow: Option<Tensor<T>>,
    pub d_fake: Tensor<T>,
}

/// Assembles the variant's generator loss from reconstructions and the
/// discriminator's fake probabilities; gradients flow to the generators only.
pub fn generator_loss_and_grads<T: Scalar>(
    cfg: &LossConfig,
    batch: &Batch<T>,
    outputs: &GeneratorOutputs<'_, T>,
    d_fake: &Tensor<T>,
) -> Result<(GeneratorLossTerms, GeneratorGrads<T>)> {
    let mut terms = GeneratorLossTerms::default();
    let (_, adv) = gan_loss(d_fake, d_fake);
    terms.adversarial = adv;
    let mut grads = GeneratorGrads {
        thermal: None,
        flow: None,
        d_fake: adv_loss_grad(d_fake),
    };
    let need = |o: Option<&Tensor<T>>, what: &str| -> Result<Tensor<T>> {
        o.cloned()
            .ok_or_else(|| Error::Config(format!("variant {} needs {what}", cfg.variant)))
    };
    let need_flow_input = || -> Result<Tensor<T>> {
        batch
            .flow
            .clone()
            .ok_or_else(|| Error::Config(format!("variant {} needs flow windows", cfg.variant)))
    };
    match cfg.variant {
        Variant::Thermal3dcae => {
            let o = need(outputs.thermal, "a thermal reconstruction")?;
            let w = cfg.lambda_value();
            terms.recon_thermal = mse_loss(&batch.thermal, &o);
            grads.thermal = Some(mse_loss_grad(&batch.thermal, &o).scale(T::of_f64(w)));
            terms.total = terms.adversarial + w * terms.recon_thermal;
        }
        Variant::Flow3dcae => {
            let i = need_flow_input()?;
            let o = need(outputs.flow, "a flow reconstruction")?;
            let w = cfg.lambda_value();
            terms.recon_flow = mse_loss(&i, &o);
            grads.flow = Some(mse_loss_grad(&i, &o).scale(T::of_f64(w)));
            terms.total = terms.adversarial + w * terms.recon_flow;
        }
        Variant::ThermalRoi3dcae => {
            let o = need(outputs.thermal, "a thermal reconstruction")?;
            let w = cfg.lambda_value();
            terms.recon_thermal = roi_mse_loss(&batch.thermal, &o, &batch.masks);
            grads.thermal =
                Some(roi_mse_loss_grad(&batch.thermal, &o, &batch.masks).scale(T::of_f64(w)));
            terms.total = terms.adversarial + w * terms.recon_thermal;
        }
        Variant::ThermalDiffRoi3dcae => {
            let o = need(outputs.thermal, "a thermal reconstruction")?;
            let (ws, wd) = (cfg.lambda_s_value(), cfg.lambda_d_value());
            terms.recon_thermal = roi_mse_loss(&batch.thermal, &o, &batch.masks);
            terms.diff = diff_loss(&batch.thermal, &o, &batch.union)?;
            let mut g = roi_mse_loss_grad(&batch.thermal, &o, &batch.masks).scale(T::of_f64(ws));
            g.add_assign(&diff_loss_grad(&batch.thermal, &o, &batch.union)?.scale(T::of_f64(wd)));
            grads.thermal = Some(g);
            terms.total = terms.adversarial + ws * terms.recon_thermal + wd * terms.diff;
        }
        Variant::FlowRoi3dcae => {
            let i = need_flow_input()?;
            let o = need(outputs.flow, "a flow reconstruction")?;
            let w = cfg.lambda_value();
            terms.recon_flow = roi_mse_loss(&i, &o, &batch.union);
            grads.flow = Some(roi_mse_loss_grad(&i, &o, &batch.union).scale(T::of_f64(w)));
            terms.total = terms.adversarial + w * terms.recon_flow;
        }
        Variant::FusionRoi3dcae => {
            let ot = need(outputs.thermal, "a thermal reconstruction")?;
            let i_f = need_flow_input()?;
            let of = need(outputs.flow, "a flow reconstruction")?;
            let (wt, wf) = (cfg.lambda_t_value(), cfg.lambda_f_value());
            terms.recon_thermal = roi_mse_loss(&batch.thermal, &ot, &batch.masks);
            terms.recon_flow = roi_mse_loss(&i_f, &of, &batch.union);
            grads.thermal =
                Some(roi_mse_loss_grad(&batch.thermal, &ot, &batch.masks).scale(T::of_f64(wt)));
            grads.flow = Some(roi_mse_loss_grad(&i_f, &of, &batch.union).scale(T::of_f64(wf)));
            terms.total =
                terms.adversarial + wt * terms.recon_thermal + wf * terms.recon_flow;
        }
        Variant::FusionDiffRoi3dcae => {
            let ot = need(outputs.thermal, "a thermal reconstruction")?;
            let i_f = need_flow_input()?;
            let of = need(outputs.flow, "a flow reconstruction")?;
            let (wts, wtd, wf) = (
                cfg.lambda_t_s_value(),
                cfg.lambda_t_d_value(),
                cfg.lambda_f_value(),
            );
            terms.recon_thermal = roi_mse_loss(&batch.thermal, &ot, &batch.masks);
            terms.diff = diff_loss(&batch.thermal, &ot, &batch.union)?;
            terms.recon_flow = roi_mse_loss(&i_f, &of, &batch.union);
            let mut g = roi_mse_loss_grad(&batch.thermal, &ot, &batch.masks).scale(T::of_f64(wts));
            g.add_assign(
                &diff_loss_grad(&batch.thermal, &ot, &batch.union)?.scale(T::of_f64(wtd)),
            );
            grads.thermal = Some(g);
            grads.flow = Some(roi_mse_loss_grad(&i_f, &of, &batch.union).scale(T::of_f64(wf)));
            terms.total = terms.adversarial
                + wts * terms.recon_thermal
                + wtd * terms.diff
                + wf * terms.recon_flow;
        }
    }
    Ok((terms, grads))
}

/// One loss-log record, mirroring the CSV columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub batch: usize,
    pub loss_d: f64,
    pub loss_r_adv: f64,
    pub loss_roi_thermal: f64,
    pub loss_diff: f64,
    pub loss_roi_flow: f64,
    pub total: f64,
}

impl LossRow {
    pub const CSV_HEADER: &'static str =
        "epoch,batch,loss_D,loss_R_adv,loss_roi_thermal,loss_diff,loss_roi_flow,total";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.batch,
            self.loss_d,
            self.loss_r_adv,
            self.loss_roi_thermal,
            self.loss_diff,
            self.loss_roi_flow,
            self.total
        )
    }
}

struct Optimizers {
    disc: OptimizerState,
    thermal: OptimizerState,
    flow: OptimizerState,
}

fn apply_grads(model: &mut Model<f32>, grads: &ModelGrads<f32>, opt: &mut OptimizerState) {
    let gtensors = grads.tensors();
    let mut params = model.params_mut();
    assert_eq!(gtensors.len(), params.len(), "parameter/gradient mismatch");
    for (slot, (p, g)) in params.iter_mut().zip(gtensors).enumerate() {
        opt.step(slot, p, g);
    }
}

fn check_finite(value: f64, term: &str, epoch: usize, batch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss {
            epoch,
            batch,
            term: term.into(),
        })
    }
}

/// Inputs for the discriminator per channel set.
fn disc_input<'a>(
    variant: Variant,
    thermal: &'a Tensor<f32>,
    flow: Option<&'a Tensor<f32>>,
) -> Result<ModelInput<'a, f32>> {
    Ok(match variant.channels() {
        ChannelSet::Thermal => ModelInput::One(thermal),
        ChannelSet::Flow => ModelInput::One(
            flow.ok_or_else(|| Error::Config("flow windows missing".into()))?,
        ),
        ChannelSet::Fusion => ModelInput::Pair(
            thermal,
            flow.ok_or_else(|| Error::Config("flow windows missing".into()))?,
        ),
    })
}

/// Runs the alternating training loop over preprocessed windows; returns the
/// per-batch loss log. Deterministic for a fixed config.
pub fn train(
    models: &mut GanModels<f32>,
    dataset: &dyn WindowSet,
    tc: &TrainConfig,
    lc: &LossConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<Vec<LossRow>> {
    tc.validate()?;
    lc.validate()?;
    if lc.variant != models.variant {
        return Err(Error::Config(format!(
            "loss config is for {} but models are {}",
            lc.variant, models.variant
        )));
    }
    let needs_flow = models.variant.channels() != ChannelSet::Thermal;
    let mut indices: Vec<usize> = (0..dataset.len()).step_by(tc.window_stride).collect();
    if indices.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut opts = Optimizers {
        disc: OptimizerState::sgd(tc.disc_learning_rate),
        thermal: OptimizerState::adadelta(
            tc.adadelta_rho,
            tc.adadelta_epsilon,
            tc.adadelta_learning_rate,
        ),
        flow: OptimizerState::adadelta(
            tc.adadelta_rho,
            tc.adadelta_epsilon,
            tc.adadelta_learning_rate,
        ),
    };
    let mut log = Vec::new();
    for epoch in 0..tc.epochs {
        indices.shuffle(&mut rng);
        for (batch_idx, chunk) in indices.chunks(tc.batch_size).enumerate() {
            let owned: Vec<TrainSample> = chunk.iter().map(|&i| dataset.get(i)).collect();
            let samples: Vec<&TrainSample> = owned.iter().collect();
            let batch: Batch<f32> = Batch::assemble(&samples, needs_flow)?;
            let row = train_step(models, &batch, lc, &mut opts, epoch, batch_idx)?;
            log.push(row);
        }
        if let Some(dir) = checkpoint_dir {
            if tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 {
                let path = dir.join(format!("{}_e{:04}.tfad", models.variant.name(), epoch + 1));
                models.save(&path)?;
            }
        }
    }
    Ok(log)
}

fn train_step(
    models: &mut GanModels<f32>,
    batch: &Batch<f32>,
    lc: &LossConfig,
    opts: &mut Optimizers,
    epoch: usize,
    batch_idx: usize,
) -> Result<LossRow> {
    // Reconstruct once; the same outputs feed the discriminator step (as
    // constants) and the generator step.
    let thermal_out = match &models.thermal_recon {
        Some(r) => {
            let (o, cache) = r.forward_cached(ModelInput::One(&batch.thermal), BnMode::Train)?;
            Some((o, cache))
        }
        None => None,
    };
    let flow_out = match (&models.flow_recon, &batch.flow) {
        (Some(r), Some(i_f)) => {
            let (o, cache) = r.forward_cached(ModelInput::One(i_f), BnMode::Train)?;
            Some((o, cache))
        }
        (Some(_), None) => return Err(Error::Config("flow windows missing".into())),
        _ => None,
    };
    let o_t = thermal_out.as_ref().map(|(o, _)| o);
    let o_f = flow_out.as_ref().map(|(o, _)| o);

    // Discriminator step.
    let real_in = disc_input(models.variant, &batch.thermal, batch.flow.as_ref())?;
    let fake_in = disc_input(
        models.variant,
        o_t.unwrap_or(&batch.thermal),
        o_f.or(batch.flow.as_ref()),
    )?;
    let (p_real, cache_real) = models.discriminator.forward_cached(real_in, BnMode::Train)?;
    let (p_fake, cache_fake) = models.discriminator.forward_cached(fake_in, BnMode::Train)?;
    let (loss_d, _) = gan_loss(&p_real, &p_fake);
    check_finite(loss_d, "loss_D", epoch, batch_idx)?;
    let (g_real, g_fake) = gan_loss_d_grads(&p_real, &p_fake);
    let (_, mut d_grads) = models.discriminator.backward(&cache_real, &g_real)?;
    let (_, d_grads_fake) = models.discriminator.backward(&cache_fake, &g_fake)?;
    d_grads.add_assign(&d_grads_fake);
    models.discriminator.update_running_stats(&cache_real);
    models.discriminator.update_running_stats(&cache_fake);
    apply_grads(&mut models.discriminator, &d_grads, &mut opts.disc);

    // Generator step against the updated discriminator.
    let fake_in = disc_input(
        models.variant,
        o_t.unwrap_or(&batch.thermal),
        o_f.or(batch.flow.as_ref()),
    )?;
    let (p_fake2, cache_fake2) = models.discriminator.forward_cached(fake_in, BnMode::Train)?;
    let outputs = GeneratorOutputs {
        thermal: o_t,
        flow: o_f,
    };
    let (terms, ggrads) = generator_loss_and_grads(lc, batch, &outputs, &p_fake2)?;
    check_finite(terms.adversarial, "loss_R_adv", epoch, batch_idx)?;
    check_finite(terms.recon_thermal, "loss_roi_thermal", epoch, batch_idx)?;
    check_finite(terms.diff, "loss_diff", epoch, batch_idx)?;
    check_finite(terms.recon_flow, "loss_roi_flow", epoch, batch_idx)?;
    check_finite(terms.total, "total", epoch, batch_idx)?;
    let (adv_input_grad, _) =
        models
            .discriminator
            .backward_with(&cache_fake2, &ggrads.d_fake, false)?;
    models.discriminator.update_running_stats(&cache_fake2);

    // Total gradient at each reconstruction: adversarial path + weighted
    // reconstruction terms.
    let (adv_gt, adv_gf) = match adv_input_grad {
        InputGrad::One(g) => match models.variant.channels() {
            ChannelSet::Flow => (None, Some(g)),
            _ => (Some(g), None),
        },
        InputGrad::Pair(gt, gf) => (Some(gt), Some(gf)),
    };
    if let (Some((_, cache)), Some(r)) = (&thermal_out, &mut models.thermal_recon) {
        let g = match (ggrads.thermal, adv_gt) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b);
                a
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => Tensor::zeros(batch.thermal.shape()),
        };
        let (_, r_grads) = r.backward(cache, &g)?;
        apply_grads(r, &r_grads, &mut opts.thermal);
    }
    if let (Some((_, cache)), Some(r)) = (&flow_out, &mut models.flow_recon) {
        let flow_shape = batch.flow.as_ref().unwrap().shape().to_vec();
        let g = match (ggrads.flow, adv_gf) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b);
                a
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => Tensor::zeros(&flow_shape),
        };
        let (_, r_grads) = r.backward(cache, &g)?;
        apply_grads(r, &r_grads, &mut opts.flow);
    }

    Ok(LossRow {
        epoch,
        batch: batch_idx,
        loss_d,
        loss_r_adv: terms.adversarial,
        loss_roi_thermal: terms.recon_thermal,
        loss_diff: terms.diff,
        loss_roi_flow: terms.recon_flow,
        total: terms.total,
    })
}

/// Mean generator loss over (up to) `max_windows` windows with frozen
/// parameters and inference-mode batchnorm. Used to verify checkpoint
/// fidelity.
pub fn eval_generator_loss(
    models: &GanModels<f32>,
    dataset: &dyn WindowSet,
    lc: &LossConfig,
    max_windows: usize,
) -> Result<f64> {
    let needs_flow = models.variant.channels() != ChannelSet::Thermal;
    let n = dataset.len().min(max_windows).max(1);
    let owned: Vec<TrainSample> = (0..n).map(|i| dataset.get(i)).collect();
    let samples: Vec<&TrainSample> = owned.iter().collect();
    let batch: Batch<f32> = Batch::assemble(&samples, needs_flow)?;
    let o_t = match &models.thermal_recon {
        Some(r) => Some(r.forward(ModelInput::One(&batch.thermal), BnMode::Infer)?),
        None => None,
    };
    let o_f = match (&models.flow_recon, &batch.flow) {
        (Some(r), Some(i_f)) => Some(r.forward(ModelInput::One(i_f), BnMode::Infer)?),
        _ => None,
    };
    let fake_in = disc_input(
        models.variant,
        o_t.as_ref().unwrap_or(&batch.thermal),
        o_f.as_ref().or(batch.flow.as_ref()),
    )?;
    let p_fake = models.discriminator.forward(fake_in, BnMode::Infer)?;
    let outputs = GeneratorOutputs {
        thermal: o_t.as_ref(),
        flow: o_f.as_ref(),
    };
    let (terms, _) = generator_loss_and_grads(lc, &batch, &outputs, &p_fake)?;
    Ok(terms.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Synthetic windows: a drifting bright block on a dark background plus
    /// noise, masks covering the block.
    fn synth_windows(count: usize, seed: u64) -> Vec<TrainSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|k| {
                let mut thermal = Tensor::<f32>::filled(&[8, 64, 64, 1], -1.0);
                let mut mask = Tensor::<f32>::zeros(&[8, 64, 64, 1]);
                let cx = 16 + (k % 24);
                for t in 0..8 {
                    let x0 = cx + t; // slow drift
                    for y in 20..44 {
                        for x in x0..x0 + 12 {
                            thermal.data_mut()[(t * 64 + y) * 64 + x] =
                                0.5 + rng.gen_range(-0.1..0.1);
                            mask.data_mut()[(t * 64 + y) * 64 + x] = 1.0;
                        }
                    }
                }
                let mut flow = Tensor::<f32>::filled(&[7, 64, 64, 1], -1.0);
                for t in 0..7 {
                    for y in 20..44 {
                        for x in cx + t..cx + t + 12 {
                            flow.data_mut()[(t * 64 + y) * 64 + x] = rng.gen_range(-0.2..0.2);
                        }
                    }
                }
                TrainSample {
                    thermal,
                    mask,
                    flow: Some(flow),
                }
            })
            .collect()
    }

    #[test]
    fn zero_weights_collapse_to_adversarial_term() {
        let mut cfg = LossConfig::defaults(Variant::Thermal3dcae);
        cfg.lambda = Some(0.0);
        let samples = synth_windows(2, 3);
        let refs: Vec<&TrainSample> = samples.iter().collect();
        let batch: Batch<f64> = Batch::assemble(&refs, false).unwrap();
        let o = batch.thermal.map(|v| v * 0.5);
        let d_fake = Tensor::from_vec(&[2, 1], vec![0.3f64, 0.6]).unwrap();
        let (terms, grads) = generator_loss_and_grads(
            &cfg,
            &batch,
            &GeneratorOutputs {
                thermal: Some(&o),
                flow: None,
            },
            &d_fake,
        )
        .unwrap();
        assert_eq!(terms.total, terms.adversarial);
        assert!(grads.thermal.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fusion_variant_without_flow_is_a_config_error() {
        let cfg = LossConfig::defaults(Variant::FusionDiffRoi3dcae);
        let samples = synth_windows(2, 4);
        let refs: Vec<&TrainSample> = samples.iter().collect();
        let mut batch: Batch<f64> = Batch::assemble(&refs, true).unwrap();
        batch.flow = None;
        let o = batch.thermal.clone();
        let d_fake = Tensor::from_vec(&[2, 1], vec![0.5f64, 0.5]).unwrap();
        let err = generator_loss_and_grads(
            &cfg,
            &batch,
            &GeneratorOutputs {
                thermal: Some(&o),
                flow: Some(&o),
            },
            &d_fake,
        )
        .unwrap_err();
        assert!(err.to_string().contains("flow"), "{err}");
    }

    #[test]
    fn smoke_run_reconstruction_loss_decreases() {
        let dataset = synth_windows(32, 11);
        let mut models = GanModels::build(Variant::Thermal3dcae, 5).unwrap();
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 16,
            seed: 9,
            ..TrainConfig::default()
        };
        let lc = LossConfig::defaults(Variant::Thermal3dcae);
        let log = train(&mut models, &dataset, &tc, &lc, None).unwrap();
        let epoch_mean = |e: usize| {
            let rows: Vec<&LossRow> = log.iter().filter(|r| r.epoch == e).collect();
            rows.iter().map(|r| r.loss_roi_thermal).sum::<f64>() / rows.len() as f64
        };
        assert!(
            epoch_mean(1) < epoch_mean(0),
            "epoch reconstruction means: {} then {}",
            epoch_mean(0),
            epoch_mean(1)
        );
    }

    #[test]
    fn seed_fixed_runs_produce_identical_loss_logs() {
        let dataset = synth_windows(8, 21);
        let tc = TrainConfig {
            epochs: 1,
            batch_size: 8,
            seed: 33,
            ..TrainConfig::default()
        };
        let lc = LossConfig::defaults(Variant::ThermalRoi3dcae);
        let mut m1 = GanModels::build(Variant::ThermalRoi3dcae, 7).unwrap();
        let log1 = train(&mut m1, &dataset, &tc, &lc, None).unwrap();
        let mut m2 = GanModels::build(Variant::ThermalRoi3dcae, 7).unwrap();
        let log2 = train(&mut m2, &dataset, &tc, &lc, None).unwrap();
        assert_eq!(log1, log2);
    }

    #[test]
    fn checkpoint_round_trip_preserves_validation_loss() {
        let dataset = synth_windows(8, 31);
        let tc = TrainConfig {
            epochs: 1,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let lc = LossConfig::defaults(Variant::Thermal3dcae);
        let mut models = GanModels::build(Variant::Thermal3dcae, 1).unwrap();
        train(&mut models, &dataset, &tc, &lc, None).unwrap();
        let before = eval_generator_loss(&models, &dataset, &lc, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tfad");
        models.save(&path).unwrap();
        let restored = GanModels::load(Variant::Thermal3dcae, &path).unwrap();
        let after = eval_generator_loss(&restored, &dataset, &lc, 4).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn lambda_scaled_loss_equals_scaled_gradients_for_sgd() {
        // One SGD step with a lambda-weighted loss equals the same step with
        // gradients scaled by lambda (single dense layer).
        let w0 = Tensor::from_vec(&[2, 1], vec![0.4f32, -0.2]).unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![1.0f32, 2.0]).unwrap();
        let target = 1.5f32;
        let lambda = 0.1f32;
        let forward = |w: &Tensor<f32>| x.data()[0] * w.data()[0] + x.data()[1] * w.data()[1];
        // Analytic gradient of (y - t)^2 wrt w.
        let grad = |w: &Tensor<f32>| {
            let y = forward(w);
            Tensor::from_vec(
                &[2, 1],
                vec![2.0 * (y - target) * x.data()[0], 2.0 * (y - target) * x.data()[1]],
            )
            .unwrap()
        };
        let lr = 0.05f32;
        let mut w_a = w0.clone();
        let g_weighted = grad(&w_a).scale(lambda);
        crate::tensor::sgd_step(&mut w_a, &g_weighted, lr);
        let mut w_b = w0.clone();
        let g_scaled = grad(&w_b).scale(lambda);
        crate::tensor::sgd_step(&mut w_b, &g_scaled, lr);
        assert_eq!(w_a.data(), w_b.data());
    }
}
