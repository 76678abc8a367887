//! Networks assembled from tensor-engine layers: sequential stacks for the
//! autoencoders and per-channel discriminators, plus the joint discriminator
//! with two encoder branches fused into a single sigmoid unit.

mod build;

pub use build::{
    build_discriminator, build_flow_3dcae, build_joint_discriminator, build_thermal_3dcae,
    Channel, FLOW_INPUT_SHAPE, THERMAL_INPUT_SHAPE,
};

use crate::error::{Error, Result};
use crate::tensor::{
    activation_apply, activation_backward, batchnorm_backward, batchnorm_forward,
    batchnorm_update_running, conv3d_backward, conv3d_backward_input, conv3d_forward,
    deconv3d_backward, deconv3d_backward_input, deconv3d_forward, Activation, BatchNormCache,
    BatchNormState, BnMode, ConvLayerSpec, Scalar, Tensor,
};

/// Which network a model is, also the checkpoint name prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    ThermalReconstructor,
    FlowReconstructor,
    ThermalDiscriminator,
    FlowDiscriminator,
    JointDiscriminator,
}

impl Role {
    pub fn tag(self) -> &'static str {
        match self {
            Role::ThermalReconstructor => "R_T",
            Role::FlowReconstructor => "R_F",
            Role::ThermalDiscriminator => "D_T",
            Role::FlowDiscriminator => "D_F",
            Role::JointDiscriminator => "D_TF",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Role> {
        Some(match tag {
            "R_T" => Role::ThermalReconstructor,
            "R_F" => Role::FlowReconstructor,
            "D_T" => Role::ThermalDiscriminator,
            "D_F" => Role::FlowDiscriminator,
            "D_TF" => Role::JointDiscriminator,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct DenseLayer<T = f32> {
    pub name: String,
    /// (in_features, out_features)
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub enum Layer<T = f32> {
    Conv {
        spec: ConvLayerSpec,
        weights: Tensor<T>,
        bias: Tensor<T>,
    },
    BatchNorm {
        name: String,
        state: BatchNormState<T>,
    },
    Act(Activation),
    Flatten,
    Dense(DenseLayer<T>),
}

#[derive(Clone, Debug)]
pub enum Net<T = f32> {
    Seq(Vec<Layer<T>>),
    /// Two encoder branches whose flattened features concatenate into one
    /// sigmoid unit.
    Joint {
        thermal: Vec<Layer<T>>,
        flow: Vec<Layer<T>>,
        head: DenseLayer<T>,
    },
}

#[derive(Clone, Debug)]
pub struct Model<T = f32> {
    pub role: Role,
    pub net: Net<T>,
}

/// Input to a model: one window, or a (thermal, flow) pair for the joint
/// discriminator.
#[derive(Clone, Copy, Debug)]
pub enum ModelInput<'a, T> {
    One(&'a Tensor<T>),
    Pair(&'a Tensor<T>, &'a Tensor<T>),
}

#[derive(Clone, Debug)]
pub enum InputGrad<T> {
    One(Tensor<T>),
    Pair(Tensor<T>, Tensor<T>),
}

impl<T> InputGrad<T> {
    pub fn unwrap_one(self) -> Tensor<T> {
        match self {
            InputGrad::One(t) => t,
            InputGrad::Pair(..) => panic!("expected single-input gradient"),
        }
    }
    pub fn unwrap_pair(self) -> (Tensor<T>, Tensor<T>) {
        match self {
            InputGrad::Pair(a, b) => (a, b),
            InputGrad::One(_) => panic!("expected pair-input gradient"),
        }
    }
}

/// Per-layer gradients, aligned with the layer list.
#[derive(Clone, Debug)]
pub enum LayerGrads<T> {
    Conv { weights: Tensor<T>, bias: Tensor<T> },
    BatchNorm { gamma: Tensor<T>, beta: Tensor<T> },
    Dense { weights: Tensor<T>, bias: Tensor<T> },
    None,
}

#[derive(Clone, Debug)]
pub struct ModelGrads<T>(pub Vec<LayerGrads<T>>);

impl<T: Scalar> ModelGrads<T> {
    /// Flattens to parameter tensors in the model's canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for g in &self.0 {
            match g {
                LayerGrads::Conv { weights, bias } | LayerGrads::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    out.push(gamma);
                    out.push(beta);
                }
                LayerGrads::None => {}
            }
        }
        out
    }

    pub fn scaled(&self, k: T) -> ModelGrads<T> {
        ModelGrads(
            self.0
                .iter()
                .map(|g| match g {
                    LayerGrads::Conv { weights, bias } => LayerGrads::Conv {
                        weights: weights.scale(k),
                        bias: bias.scale(k),
                    },
                    LayerGrads::Dense { weights, bias } => LayerGrads::Dense {
                        weights: weights.scale(k),
                        bias: bias.scale(k),
                    },
                    LayerGrads::BatchNorm { gamma, beta } => LayerGrads::BatchNorm {
                        gamma: gamma.scale(k),
                        beta: beta.scale(k),
                    },
                    LayerGrads::None => LayerGrads::None,
                })
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &ModelGrads<T>) {
        assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            match (a, b) {
                (
                    LayerGrads::Conv { weights, bias },
                    LayerGrads::Conv {
                        weights: w2,
                        bias: b2,
                    },
                )
                | (
                    LayerGrads::Dense { weights, bias },
                    LayerGrads::Dense {
                        weights: w2,
                        bias: b2,
                    },
                ) => {
                    weights.add_assign(w2);
                    bias.add_assign(b2);
                }
                (
                    LayerGrads::BatchNorm { gamma, beta },
                    LayerGrads::BatchNorm {
                        gamma: g2,
                        beta: b2,
                    },
                ) => {
                    gamma.add_assign(g2);
                    beta.add_assign(b2);
                }
                (LayerGrads::None, LayerGrads::None) => {}
                _ => panic!("gradient structure mismatch"),
            }
        }
    }
}

/// Caches for one stack forward pass: `xs[i]` is the input of layer i and
/// `xs[len]` the stack output; batchnorm caches sit at their layer index.
pub struct StackCache<T> {
    xs: Vec<Tensor<T>>,
    bn: Vec<Option<BatchNormCache<T>>>,
}

pub enum ModelCache<T> {
    Seq(StackCache<T>),
    Joint {
        thermal: StackCache<T>,
        flow: StackCache<T>,
        /// Concatenated features entering the head and the head output.
        fused_in: Tensor<T>,
        out: Tensor<T>,
    },
}

fn dense_forward<T: Scalar>(layer: &DenseLayer<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k) = match *x.shape() {
        [n, k] => (n, k),
        _ => {
            return Err(Error::Shape {
                context: format!("dense `{}` input", layer.name),
                expected: vec![2],
                actual: x.shape().to_vec(),
            })
        }
    };
    let (wk, m) = (layer.weights.shape()[0], layer.weights.shape()[1]);
    if wk != k {
        return Err(Error::Shape {
            context: format!("dense `{}` features", layer.name),
            expected: vec![wk],
            actual: vec![k],
        });
    }
    let mut y = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let xrow = &x.data()[i * k..(i + 1) * k];
        let yrow = &mut y.data_mut()[i * m..(i + 1) * m];
        yrow.copy_from_slice(layer.bias.data());
        for (j, &xv) in xrow.iter().enumerate() {
            let wrow = &layer.weights.data()[j * m..(j + 1) * m];
            for (o, wv) in yrow.iter_mut().zip(wrow) {
                *o = *o + xv * *wv;
            }
        }
    }
    Ok(y)
}

fn dense_backward<T: Scalar>(
    layer: &DenseLayer<T>,
    x: &Tensor<T>,
    gy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, k) = (x.shape()[0], x.shape()[1]);
    let m = layer.weights.shape()[1];
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(layer.weights.shape());
    let mut gb = Tensor::zeros(&[m]);
    for i in 0..n {
        let xrow = &x.data()[i * k..(i + 1) * k];
        let grow = &gy.data()[i * m..(i + 1) * m];
        for (b, g) in gb.data_mut().iter_mut().zip(grow) {
            *b = *b + *g;
        }
        let gxrow = &mut gx.data_mut()[i * k..(i + 1) * k];
        for j in 0..k {
            let wrow = &layer.weights.data()[j * m..(j + 1) * m];
            let gwrow = &mut gw.data_mut()[j * m..(j + 1) * m];
            let mut dot = T::zero();
            let xv = xrow[j];
            for ((g, wv), gwv) in grow.iter().zip(wrow).zip(gwrow.iter_mut()) {
                dot = dot + *g * *wv;
                *gwv = *gwv + xv * *g;
            }
            gxrow[j] = dot;
        }
    }
    (gx, gw, gb)
}

fn flatten<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.shape()[0];
    let rest: usize = x.shape()[1..].iter().product();
    x.clone().reshaped(&[n, rest]).expect("volume unchanged")
}

fn stack_forward<T: Scalar>(
    layers: &[Layer<T>],
    input: &Tensor<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, StackCache<T>)> {
    let mut xs = Vec::with_capacity(layers.len() + 1);
    let mut bn = Vec::with_capacity(layers.len());
    xs.push(input.clone());
    for layer in layers {
        let x = xs.last().unwrap();
        let (y, bn_cache) = match layer {
            Layer::Conv {
                spec,
                weights,
                bias,
            } => {
                let y = if spec.transposed {
                    deconv3d_forward(x, spec, weights, bias)?
                } else {
                    conv3d_forward(x, spec, weights, bias)?
                };
                (y, None)
            }
            Layer::BatchNorm { state, .. } => {
                let (y, cache) = batchnorm_forward(x, state, mode)?;
                (y, cache)
            }
            Layer::Act(kind) => (activation_apply(x, *kind), None),
            Layer::Flatten => (flatten(x), None),
            Layer::Dense(d) => (dense_forward(d, x)?, None),
        };
        bn.push(bn_cache);
        xs.push(y);
    }
    let out = xs.last().unwrap().clone();
    Ok((out, StackCache { xs, bn }))
}

fn stack_backward<T: Scalar>(
    layers: &[Layer<T>],
    cache: &StackCache<T>,
    grad_out: &Tensor<T>,
    need_params: bool,
) -> Result<(Tensor<T>, Vec<LayerGrads<T>>)> {
    let mut grads = vec![];
    let mut g = grad_out.clone();
    for (i, layer) in layers.iter().enumerate().rev() {
        let x = &cache.xs[i];
        let y = &cache.xs[i + 1];
        let lg = match layer {
            Layer::Conv {
                spec,
                weights,
                ..
            } => {
                if need_params {
                    let out = if spec.transposed {
                        deconv3d_backward(x, spec, weights, &g)?
                    } else {
                        conv3d_backward(x, spec, weights, &g)?
                    };
                    g = out.input;
                    LayerGrads::Conv {
                        weights: out.weights,
                        bias: out.bias,
                    }
                } else {
                    g = if spec.transposed {
                        deconv3d_backward_input(x.shape(), spec, weights, &g)?
                    } else {
                        conv3d_backward_input(x.shape(), spec, weights, &g)?
                    };
                    LayerGrads::None
                }
            }
            Layer::BatchNorm { state, name } => {
                let bn_cache = cache.bn[i].as_ref().ok_or_else(|| {
                    Error::Config(format!("batchnorm `{name}` has no train-mode cache"))
                })?;
                let (gx, dgamma, dbeta) = batchnorm_backward(&g, state, bn_cache);
                g = gx;
                LayerGrads::BatchNorm {
                    gamma: dgamma,
                    beta: dbeta,
                }
            }
            Layer::Act(kind) => {
                g = activation_backward(y, &g, *kind);
                LayerGrads::None
            }
            Layer::Flatten => {
                g = g.clone().reshaped(x.shape())?;
                LayerGrads::None
            }
            Layer::Dense(d) => {
                let (gx, gw, gb) = dense_backward(d, x, &g);
                g = gx;
                LayerGrads::Dense {
                    weights: gw,
                    bias: gb,
                }
            }
        };
        grads.push(lg);
    }
    grads.reverse();
    Ok((g, grads))
}

impl<T: Scalar> Model<T> {
    /// Forward pass without gradient bookkeeping.
    pub fn forward(&self, input: ModelInput<'_, T>, mode: BnMode) -> Result<Tensor<T>> {
        self.forward_cached(input, mode).map(|(y, _)| y)
    }

    /// Forward pass retaining everything backward will need. Train-mode
    /// batchnorm statistics live in the cache; apply them to the running
    /// stats explicitly via [`Model::update_running_stats`].
    pub fn forward_cached(
        &self,
        input: ModelInput<'_, T>,
        mode: BnMode,
    ) -> Result<(Tensor<T>, ModelCache<T>)> {
        match (&self.net, input) {
            (Net::Seq(layers), ModelInput::One(x)) => {
                let (y, cache) = stack_forward(layers, x, mode)?;
                Ok((y, ModelCache::Seq(cache)))
            }
            (
                Net::Joint {
                    thermal,
                    flow,
                    head,
                },
                ModelInput::Pair(xt, xf),
            ) => {
                let (ft, ct) = stack_forward(thermal, xt, mode)?;
                let (ff, cf) = stack_forward(flow, xf, mode)?;
                let n = ft.shape()[0];
                if ff.shape()[0] != n {
                    return Err(Error::Shape {
                        context: "joint discriminator batch".into(),
                        expected: vec![n],
                        actual: vec![ff.shape()[0]],
                    });
                }
                let (kt, kf) = (ft.shape()[1], ff.shape()[1]);
                let mut fused = Tensor::zeros(&[n, kt + kf]);
                for i in 0..n {
                    let row = &mut fused.data_mut()[i * (kt + kf)..(i + 1) * (kt + kf)];
                    row[..kt].copy_from_slice(&ft.data()[i * kt..(i + 1) * kt]);
                    row[kt..].copy_from_slice(&ff.data()[i * kf..(i + 1) * kf]);
                }
                let z = dense_forward(head, &fused)?;
                let y = activation_apply(&z, Activation::Sigmoid);
                Ok((
                    y.clone(),
                    ModelCache::Joint {
                        thermal: ct,
                        flow: cf,
                        fused_in: fused,
                        out: y,
                    },
                ))
            }
            (Net::Seq(_), ModelInput::Pair(..)) => Err(Error::Config(format!(
                "model {} takes a single input window",
                self.role.tag()
            ))),
            (Net::Joint { .. }, ModelInput::One(_)) => Err(Error::Config(format!(
                "model {} takes a (thermal, flow) window pair",
                self.role.tag()
            ))),
        }
    }

    pub fn backward(
        &self,
        cache: &ModelCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(InputGrad<T>, ModelGrads<T>)> {
        self.backward_with(cache, grad_out, true)
    }

    /// Like [`Model::backward`] but can skip parameter gradients when the
    /// caller only needs the gradient at the input (the generator step
    /// backpropagates through a frozen discriminator).
    pub fn backward_with(
        &self,
        cache: &ModelCache<T>,
        grad_out: &Tensor<T>,
        need_params: bool,
    ) -> Result<(InputGrad<T>, ModelGrads<T>)> {
        match (&self.net, cache) {
            (Net::Seq(layers), ModelCache::Seq(c)) => {
                let (gx, grads) = stack_backward(layers, c, grad_out, need_params)?;
                Ok((InputGrad::One(gx), ModelGrads(grads)))
            }
            (
                Net::Joint {
                    thermal,
                    flow,
                    head,
                },
                ModelCache::Joint {
                    thermal: ct,
                    flow: cf,
                    fused_in,
                    out,
                },
            ) => {
                let gz = activation_backward(out, grad_out, Activation::Sigmoid);
                let (gfused, gw, gb) = dense_backward(head, fused_in, &gz);
                let kt = ct.xs.last().unwrap().shape()[1];
                let kf = cf.xs.last().unwrap().shape()[1];
                let n = gfused.shape()[0];
                let mut gt = Tensor::zeros(&[n, kt]);
                let mut gf = Tensor::zeros(&[n, kf]);
                for i in 0..n {
                    let row = &gfused.data()[i * (kt + kf)..(i + 1) * (kt + kf)];
                    gt.data_mut()[i * kt..(i + 1) * kt].copy_from_slice(&row[..kt]);
                    gf.data_mut()[i * kf..(i + 1) * kf].copy_from_slice(&row[kt..]);
                }
                let (gxt, mut grads_t) = stack_backward(thermal, ct, &gt, need_params)?;
                let (gxf, grads_f) = stack_backward(flow, cf, &gf, need_params)?;
                grads_t.extend(grads_f);
                grads_t.push(LayerGrads::Dense {
                    weights: gw,
                    bias: gb,
                });
                Ok((InputGrad::Pair(gxt, gxf), ModelGrads(grads_t)))
            }
            _ => Err(Error::Config("cache does not match model topology".into())),
        }
    }

    /// Folds train-mode batch statistics from a cached forward pass into the
    /// running statistics.
    pub fn update_running_stats(&mut self, cache: &ModelCache<T>) {
        fn apply<T: Scalar>(layers: &mut [Layer<T>], cache: &StackCache<T>) {
            for (i, layer) in layers.iter_mut().enumerate() {
                if let (Layer::BatchNorm { state, .. }, Some(c)) = (layer, cache.bn[i].as_ref()) {
                    batchnorm_update_running(state, c);
                }
            }
        }
        match (&mut self.net, cache) {
            (Net::Seq(layers), ModelCache::Seq(c)) => apply(layers, c),
            (
                Net::Joint { thermal, flow, .. },
                ModelCache::Joint {
                    thermal: ct,
                    flow: cf,
                    ..
                },
            ) => {
                apply(thermal, ct);
                apply(flow, cf);
            }
            _ => {}
        }
    }

    fn layer_lists(&self) -> Vec<(&str, &[Layer<T>])> {
        match &self.net {
            Net::Seq(layers) => vec![("", layers.as_slice())],
            Net::Joint { thermal, flow, .. } => {
                vec![("", thermal.as_slice()), ("", flow.as_slice())]
            }
        }
    }

    /// Learnable parameters with checkpoint names, in canonical order
    /// (matches [`ModelGrads::tensors`]).
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let tag = self.role.tag();
        let mut out = Vec::new();
        for (_, layers) in self.layer_lists() {
            for layer in layers {
                match layer {
                    Layer::Conv {
                        spec,
                        weights,
                        bias,
                    } => {
                        out.push((format!("{tag}/{}/w", spec.name), weights));
                        out.push((format!("{tag}/{}/b", spec.name), bias));
                    }
                    Layer::BatchNorm { name, state } => {
                        out.push((format!("{tag}/{name}/gamma"), &state.gamma));
                        out.push((format!("{tag}/{name}/beta"), &state.beta));
                    }
                    Layer::Dense(d) => {
                        out.push((format!("{tag}/{}/w", d.name), &d.weights));
                        out.push((format!("{tag}/{}/b", d.name), &d.bias));
                    }
                    _ => {}
                }
            }
        }
        if let Net::Joint { head, .. } = &self.net {
            out.push((format!("{tag}/{}/w", head.name), &head.weights));
            out.push((format!("{tag}/{}/b", head.name), &head.bias));
        }
        out
    }

    /// Mutable learnable parameters, same order as [`Model::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        let push_layers = |layers: &mut Vec<Layer<T>>, out: &mut Vec<*mut Tensor<T>>| {
            for layer in layers {
                match layer {
                    Layer::Conv { weights, bias, .. } => {
                        out.push(weights);
                        out.push(bias);
                    }
                    Layer::BatchNorm { state, .. } => {
                        out.push(&mut state.gamma);
                        out.push(&mut state.beta);
                    }
                    Layer::Dense(d) => {
                        out.push(&mut d.weights);
                        out.push(&mut d.bias);
                    }
                    _ => {}
                }
            }
        };
        let mut raw: Vec<*mut Tensor<T>> = Vec::new();
        match &mut self.net {
            Net::Seq(layers) => push_layers(layers, &mut raw),
            Net::Joint {
                thermal,
                flow,
                head,
            } => {
                push_layers(thermal, &mut raw);
                push_layers(flow, &mut raw);
                raw.push(&mut head.weights);
                raw.push(&mut head.bias);
            }
        }
        // Distinct fields yield distinct pointers, so this stays sound.
        for p in raw {
            out.push(unsafe { &mut *p });
        }
        out
    }

    /// Every tensor worth checkpointing: learnable parameters plus batchnorm
    /// running statistics.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let tag = self.role.tag();
        let mut out = self.params();
        for (_, layers) in self.layer_lists() {
            for layer in layers {
                if let Layer::BatchNorm { name, state } = layer {
                    out.push((format!("{tag}/{name}/running_mean"), &state.running_mean));
                    out.push((format!("{tag}/{name}/running_var"), &state.running_var));
                }
            }
        }
        out
    }

    /// Restores tensors by name; shapes must match exactly.
    pub fn load_named(&mut self, entries: &[(String, Tensor<T>)]) -> Result<()> {
        use std::collections::HashMap;
        let by_name: HashMap<&str, &Tensor<T>> =
            entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let names: Vec<String> = self.named_tensors().iter().map(|(n, _)| n.clone()).collect();
        let mut slots = self.named_tensors_mut();
        for (name, slot) in names.iter().zip(slots.iter_mut()) {
            let src = by_name.get(name.as_str()).ok_or_else(|| {
                Error::Config(format!("checkpoint is missing tensor `{name}`"))
            })?;
            if src.shape() != slot.shape() {
                return Err(Error::Shape {
                    context: format!("checkpoint tensor `{name}`"),
                    expected: slot.shape().to_vec(),
                    actual: src.shape().to_vec(),
                });
            }
            **slot = (*src).clone();
        }
        Ok(())
    }

    fn named_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut raw: Vec<*mut Tensor<T>> = Vec::new();
        let push_layers = |layers: &mut Vec<Layer<T>>, raw: &mut Vec<*mut Tensor<T>>| {
            for layer in layers.iter_mut() {
                match layer {
                    Layer::Conv { weights, bias, .. } => {
                        raw.push(weights);
                        raw.push(bias);
                    }
                    Layer::BatchNorm { state, .. } => {
                        raw.push(&mut state.gamma);
                        raw.push(&mut state.beta);
                    }
                    Layer::Dense(d) => {
                        raw.push(&mut d.weights);
                        raw.push(&mut d.bias);
                    }
                    _ => {}
                }
            }
        };
        let mut bn_raw: Vec<*mut Tensor<T>> = Vec::new();
        let push_bn = |layers: &mut Vec<Layer<T>>, raw: &mut Vec<*mut Tensor<T>>| {
            for layer in layers.iter_mut() {
                if let Layer::BatchNorm { state, .. } = layer {
                    raw.push(&mut state.running_mean);
                    raw.push(&mut state.running_var);
                }
            }
        };
        match &mut self.net {
            Net::Seq(layers) => {
                push_layers(layers, &mut raw);
                push_bn(layers, &mut bn_raw);
            }
            Net::Joint {
                thermal,
                flow,
                head,
            } => {
                push_layers(thermal, &mut raw);
                push_layers(flow, &mut raw);
                raw.push(&mut head.weights);
                raw.push(&mut head.bias);
                push_bn(thermal, &mut bn_raw);
                push_bn(flow, &mut bn_raw);
            }
        }
        raw.extend(bn_raw);
        raw.into_iter().map(|p| unsafe { &mut *p }).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        fn cast_layers<T: Scalar, U: Scalar>(layers: &[Layer<T>]) -> Vec<Layer<U>> {
            layers
                .iter()
                .map(|l| match l {
                    Layer::Conv {
                        spec,
                        weights,
                        bias,
                    } => Layer::Conv {
                        spec: spec.clone(),
                        weights: weights.cast(),
                        bias: bias.cast(),
                    },
                    Layer::BatchNorm { name, state } => Layer::BatchNorm {
                        name: name.clone(),
                        state: state.cast(),
                    },
                    Layer::Act(a) => Layer::Act(*a),
                    Layer::Flatten => Layer::Flatten,
                    Layer::Dense(d) => Layer::Dense(DenseLayer {
                        name: d.name.clone(),
                        weights: d.weights.cast(),
                        bias: d.bias.cast(),
                    }),
                })
                .collect()
        }
        Model {
            role: self.role,
            net: match &self.net {
                Net::Seq(layers) => Net::Seq(cast_layers(layers)),
                Net::Joint {
                    thermal,
                    flow,
                    head,
                } => Net::Joint {
                    thermal: cast_layers(thermal),
                    flow: cast_layers(flow),
                    head: DenseLayer {
                        name: head.name.clone(),
                        weights: head.weights.cast(),
                        bias: head.bias.cast(),
                    },
                },
            },
        }
    }

    /// Total learnable parameter count.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }
}
