//! Optimizers: plain SGD for the discriminators, Adadelta for the
//! autoencoders.

use super::Tensor;

/// Per-parameter Adadelta accumulators.
#[derive(Clone, Debug, Default)]
pub struct AdadeltaState {
    pub acc_grad: Vec<f32>,
    pub acc_update: Vec<f32>,
}

/// Optimizer kind plus hyperparameters and accumulator state. One instance
/// owns the state for a whole parameter list, indexed in parameter order.
#[derive(Clone, Debug)]
pub enum OptimizerState {
    Sgd {
        learning_rate: f32,
    },
    Adadelta {
        rho: f32,
        epsilon: f32,
        /// Step-size multiplier on the Adadelta update (1.0 is the classic rule).
        learning_rate: f32,
        slots: Vec<AdadeltaState>,
    },
}

impl OptimizerState {
    pub fn sgd(learning_rate: f32) -> Self {
        OptimizerState::Sgd { learning_rate }
    }

    pub fn adadelta(rho: f32, epsilon: f32, learning_rate: f32) -> Self {
        OptimizerState::Adadelta {
            rho,
            epsilon,
            learning_rate,
            slots: Vec::new(),
        }
    }

    /// Applies one update to an indexed parameter tensor.
    pub fn step(&mut self, slot: usize, param: &mut Tensor<f32>, grad: &Tensor<f32>) {
        debug_assert_eq!(param.shape(), grad.shape());
        match self {
            OptimizerState::Sgd { learning_rate } => sgd_step(param, grad, *learning_rate),
            OptimizerState::Adadelta {
                rho,
                epsilon,
                learning_rate,
                slots,
            } => {
                while slots.len() <= slot {
                    slots.push(AdadeltaState::default());
                }
                let st = &mut slots[slot];
                if st.acc_grad.is_empty() {
                    st.acc_grad = vec![0.0; param.len()];
                    st.acc_update = vec![0.0; param.len()];
                }
                adadelta_step(param, grad, st, *rho, *epsilon, *learning_rate);
            }
        }
    }
}

/// p <- p - lr * g
pub fn sgd_step(param: &mut Tensor<f32>, grad: &Tensor<f32>, learning_rate: f32) {
    for (p, &g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= learning_rate * g;
    }
}

/// Standard Adadelta recurrences on the squared-gradient and squared-update
/// accumulators; the update is applied opposite the gradient.
pub fn adadelta_step(
    param: &mut Tensor<f32>,
    grad: &Tensor<f32>,
    state: &mut AdadeltaState,
    rho: f32,
    epsilon: f32,
    learning_rate: f32,
) {
    debug_assert_eq!(param.len(), state.acc_grad.len());
    for i in 0..param.len() {
        let g = grad.data()[i];
        let eg = rho * state.acc_grad[i] + (1.0 - rho) * g * g;
        state.acc_grad[i] = eg;
        let delta = -((state.acc_update[i] + epsilon).sqrt() / (eg + epsilon).sqrt()) * g;
        state.acc_update[i] = rho * state.acc_update[i] + (1.0 - rho) * delta * delta;
        param.data_mut()[i] += learning_rate * delta;
    }
}
