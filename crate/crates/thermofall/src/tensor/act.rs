use super::{Scalar, Tensor};

/// Elementwise nonlinearity. The leaky slope is fixed at 0.2 throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Sigmoid,
    None,
}

pub const LEAKY_SLOPE: f64 = 0.2;

/// Applies the activation elementwise.
pub fn activation_apply<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let slope = T::of_f64(LEAKY_SLOPE);
    match kind {
        Activation::LeakyRelu => input.map(|v| if v >= T::zero() { v } else { v * slope }),
        Activation::Tanh => input.map(|v| v.tanh()),
        Activation::Sigmoid => input.map(|v| T::one() / (T::one() + (-v).exp())),
        Activation::None => input.clone(),
    }
}

/// Backward pass. All three nonlinearities have derivatives expressible in
/// the forward output, so only `output` is cached.
pub fn activation_backward<T: Scalar>(
    output: &Tensor<T>,
    grad_output: &Tensor<T>,
    kind: Activation,
) -> Tensor<T> {
    let slope = T::of_f64(LEAKY_SLOPE);
    let one = T::one();
    let data: Vec<T> = output
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&y, &g)| match kind {
            Activation::LeakyRelu => {
                if y >= T::zero() {
                    g
                } else {
                    g * slope
                }
            }
            Activation::Tanh => g * (one - y * y),
            Activation::Sigmoid => g * y * (one - y),
            Activation::None => g,
        })
        .collect();
    Tensor::from_vec(output.shape(), data).unwrap()
}
