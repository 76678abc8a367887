//! Builders for the four networks. Every layer's output is checked against
//! its normative shape at build time; a mismatch is a build error naming the
//! layer.

use super::{DenseLayer, Layer, Model, Net, Role};
use crate::error::{Error, Result};
use crate::tensor::{
    same_conv_padding, transposed_crop, Activation, BatchNormState, ConvLayerSpec, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// (depth, height, width, channels) of a thermal input window.
pub const THERMAL_INPUT_SHAPE: [usize; 4] = [8, 64, 64, 1];
/// (depth, height, width, channels) of a flow input window.
pub const FLOW_INPUT_SHAPE: [usize; 4] = [7, 64, 64, 1];

pub const WEIGHT_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Thermal,
    Flow,
}

/// One row of the architecture table: kernel, stride, channels and the
/// normative output shape.
struct LayerPlan {
    name: &'static str,
    kernel: (usize, usize, usize),
    stride: (usize, usize, usize),
    out: [usize; 4],
    transposed: bool,
    batchnorm: bool,
    activation: Activation,
}

fn encoder_plan(input: [usize; 4]) -> Vec<LayerPlan> {
    let d = input[0];
    vec![
        LayerPlan {
            name: "enc1",
            kernel: (5, 3, 3),
            stride: (1, 1, 1),
            out: [d, 64, 64, 16],
            transposed: false,
            batchnorm: false,
            activation: Activation::LeakyRelu,
        },
        LayerPlan {
            name: "enc2",
            kernel: (5, 3, 3),
            stride: (1, 2, 2),
            out: [d, 32, 32, 8],
            transposed: false,
            batchnorm: false,
            activation: Activation::LeakyRelu,
        },
        LayerPlan {
            name: "enc3",
            kernel: (5, 3, 3),
            stride: (2, 2, 2),
            out: [4, 16, 16, 8],
            transposed: false,
            batchnorm: false,
            activation: Activation::LeakyRelu,
        },
        LayerPlan {
            name: "enc4",
            kernel: (5, 3, 3),
            stride: (2, 2, 2),
            out: [2, 8, 8, 8],
            transposed: false,
            batchnorm: false,
            activation: Activation::LeakyRelu,
        },
    ]
}

fn decoder_plan(input: [usize; 4]) -> Vec<LayerPlan> {
    let d = input[0];
    // The flow decoder's second layer reconstructs the odd temporal length
    // with a 2x2 filter of temporal depth 4.
    let dec2_kernel = if d == 7 { (4, 2, 2) } else { (5, 3, 3) };
    vec![
        LayerPlan {
            name: "dec1",
            kernel: (5, 3, 3),
            stride: (2, 2, 2),
            out: [4, 16, 16, 8],
            transposed: true,
            batchnorm: false,
            activation: Activation::LeakyRelu,
        },
        LayerPlan {
            name: "dec2",
            kernel: dec2_kernel,
            stride: (2, 2, 2),
            out: [d, 32, 32, 8],
            transposed: true,
            batchnorm: false,
            activation: Activation::LeakyRelu,
        },
        LayerPlan {
            name: "dec3",
            kernel: (5, 3, 3),
            stride: (1, 2, 2),
            out: [d, 64, 64, 16],
            transposed: true,
            batchnorm: false,
            activation: Activation::LeakyRelu,
        },
        LayerPlan {
            name: "dec4",
            kernel: (5, 3, 3),
            stride: (1, 1, 1),
            out: [d, 64, 64, 1],
            transposed: true,
            batchnorm: false,
            activation: Activation::Tanh,
        },
    ]
}

/// Realizes a plan into layers, checking each normative shape.
fn realize(
    prefix: &str,
    input: [usize; 4],
    plan: &[LayerPlan],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Layer<f32>>, [usize; 4])> {
    let mut layers = Vec::new();
    let mut cur = input;
    for p in plan {
        let name = if prefix.is_empty() {
            p.name.to_string()
        } else {
            format!("{prefix}{}", p.name)
        };
        let in_dhw = (cur[0], cur[1], cur[2]);
        let out_dhw = (p.out[0], p.out[1], p.out[2]);
        let mk_pad = |axis_in: usize, k: usize, s: usize, axis_out: usize| {
            if p.transposed {
                transposed_crop(axis_in, k, s, axis_out)
            } else {
                same_conv_padding(axis_in, k, s, axis_out)
            }
        };
        let padding = [
            mk_pad(in_dhw.0, p.kernel.0, p.stride.0, out_dhw.0).map_err(|e| {
                Error::ModelBuild {
                    layer: name.clone(),
                    reason: e.to_string(),
                }
            })?,
            mk_pad(in_dhw.1, p.kernel.1, p.stride.1, out_dhw.1).map_err(|e| {
                Error::ModelBuild {
                    layer: name.clone(),
                    reason: e.to_string(),
                }
            })?,
            mk_pad(in_dhw.2, p.kernel.2, p.stride.2, out_dhw.2).map_err(|e| {
                Error::ModelBuild {
                    layer: name.clone(),
                    reason: e.to_string(),
                }
            })?,
        ];
        let spec = ConvLayerSpec {
            name: name.clone(),
            kernel: p.kernel,
            in_channels: cur[3],
            out_channels: p.out[3],
            stride: p.stride,
            padding,
            has_batchnorm: p.batchnorm,
            activation: p.activation,
            transposed: p.transposed,
        };
        let got = spec.output_dhw(in_dhw).map_err(|e| Error::ModelBuild {
            layer: name.clone(),
            reason: e.to_string(),
        })?;
        if got != out_dhw {
            return Err(Error::ModelBuild {
                layer: name.clone(),
                reason: format!("computed output {got:?} differs from normative {out_dhw:?}"),
            });
        }
        let weights = Tensor::randn(&spec.weight_shape(), WEIGHT_INIT_STD, rng);
        let bias = Tensor::zeros(&[spec.out_channels]);
        layers.push(Layer::Conv {
            spec,
            weights,
            bias,
        });
        if p.batchnorm {
            layers.push(Layer::BatchNorm {
                name: format!("{name}.bn"),
                state: BatchNormState::new(p.out[3]),
            });
        }
        layers.push(Layer::Act(p.activation));
        cur = p.out;
    }
    Ok((layers, cur))
}

fn build_3dcae(role: Role, input: [usize; 4], seed: u64) -> Result<Model<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut layers, mid) = realize("", input, &encoder_plan(input), &mut rng)?;
    if mid != [2, 8, 8, 8] {
        return Err(Error::ModelBuild {
            layer: "enc4".into(),
            reason: format!("bottleneck {mid:?}, expected [2, 8, 8, 8]"),
        });
    }
    let (dec, out) = realize("", mid, &decoder_plan(input), &mut rng)?;
    layers.extend(dec);
    if out != input {
        return Err(Error::ModelBuild {
            layer: "dec4".into(),
            reason: format!("reconstruction shape {out:?} differs from input {input:?}"),
        });
    }
    Ok(Model {
        role,
        net: Net::Seq(layers),
    })
}

/// Thermal 3D convolutional autoencoder, (8,64,64,1) -> (8,64,64,1).
pub fn build_thermal_3dcae(seed: u64) -> Result<Model<f32>> {
    build_3dcae(Role::ThermalReconstructor, THERMAL_INPUT_SHAPE, seed)
}

/// Flow 3D convolutional autoencoder, (7,64,64,1) -> (7,64,64,1).
pub fn build_flow_3dcae(seed: u64) -> Result<Model<f32>> {
    build_3dcae(Role::FlowReconstructor, FLOW_INPUT_SHAPE, seed)
}

fn discriminator_layers(
    prefix: &str,
    input: [usize; 4],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Layer<f32>>, usize)> {
    // Same stack as the 3DCAE encoder, with batchnorm on every layer except
    // the input layer.
    let mut plan = encoder_plan(input);
    for (i, p) in plan.iter_mut().enumerate() {
        p.batchnorm = i > 0;
    }
    let (mut layers, bottleneck) = realize(prefix, input, &plan, rng)?;
    layers.push(Layer::Flatten);
    Ok((layers, bottleneck.iter().product()))
}

fn dense(name: &str, features: usize, rng: &mut ChaCha8Rng) -> DenseLayer<f32> {
    DenseLayer {
        name: name.to_string(),
        weights: Tensor::randn(&[features, 1], WEIGHT_INIT_STD, rng),
        bias: Tensor::zeros(&[1]),
    }
}

/// Per-channel 3DCNN discriminator: encoder stack, flatten, one sigmoid unit.
pub fn build_discriminator(channel: Channel, seed: u64) -> Result<Model<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input, role) = match channel {
        Channel::Thermal => (THERMAL_INPUT_SHAPE, Role::ThermalDiscriminator),
        Channel::Flow => (FLOW_INPUT_SHAPE, Role::FlowDiscriminator),
    };
    let (mut layers, features) = discriminator_layers("", input, &mut rng)?;
    layers.push(Layer::Dense(dense("head", features, &mut rng)));
    layers.push(Layer::Act(Activation::Sigmoid));
    Ok(Model {
        role,
        net: Net::Seq(layers),
    })
}

/// Joint discriminator: both channel encoders in parallel, flattened
/// bottlenecks concatenated into a single sigmoid neuron.
pub fn build_joint_discriminator(seed: u64) -> Result<Model<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (thermal, ft) = discriminator_layers("t_", THERMAL_INPUT_SHAPE, &mut rng)?;
    let (flow, ff) = discriminator_layers("f_", FLOW_INPUT_SHAPE, &mut rng)?;
    let head = dense("head", ft + ff, &mut rng);
    Ok(Model {
        role: Role::JointDiscriminator,
        net: Net::Joint {
            thermal,
            flow,
            head,
        },
    })
}
