//! Hand-derived differentiable layers.

mod conv;
mod init;
mod linear;
mod loss;
mod pool;

pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvContext, ConvParams};
pub use init::Init;
pub use linear::{linear_backward, linear_forward, Linear, LinearContext};
pub use loss::{softmax_xent_backward, softmax_xent_forward, SoftmaxCrossEntropy, XentContext};
pub use pool::{maxpool2d_backward, maxpool2d_forward, MaxPool2d, PoolContext};

use crate::activations::{ActivationLayer, ActivationParams, Mode};
use crate::error::{Error, Result};
use crate::param::{ParamKind, ParamMut};
use crate::tensor::{Real, Tensor};

/// `[N, ...] -> [N, prod(...)]`
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_dims: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward<T: Real>(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let n = x.dims()[0];
        let rest = x.len() / n;
        if record {
            self.input_dims = Some(x.dims().to_vec());
        }
        x.clone().reshape(&[n, rest])
    }

    pub fn backward<T: Real>(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let dims = self
            .input_dims
            .take()
            .ok_or_else(|| Error::State("flatten backward without forward".into()))?;
        d_out.clone().reshape(&dims)
    }
}

/// One node of a sequential network.
#[derive(Debug, Clone)]
pub enum Layer<T: Real> {
    Conv(Conv2d<T>),
    MaxPool(MaxPool2d),
    Activation(ActivationLayer<T>),
    Flatten(Flatten),
    Linear(Linear<T>),
}

impl<T: Real> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::MaxPool(_) => "maxpool",
            Layer::Activation(_) => "act",
            Layer::Flatten(_) => "flatten",
            Layer::Linear(_) => "fc",
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, record: bool) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.forward(x, record),
            Layer::MaxPool(l) => l.forward(x, record),
            Layer::Activation(l) => {
                let y = l.forward(x, mode)?;
                if !record {
                    l.clear_context();
                }
                Ok(y)
            }
            Layer::Flatten(l) => l.forward(x, record),
            Layer::Linear(l) => l.forward(x, record),
        }
    }

    /// Returns the input gradient, or `None` when a first conv layer skips it.
    pub fn backward(
        &mut self,
        d_out: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv(l) => l.backward(d_out, need_input_grad),
            Layer::MaxPool(l) => l.backward(d_out).map(Some),
            Layer::Activation(l) => l.backward(d_out).map(Some),
            Layer::Flatten(l) => l.backward(d_out).map(Some),
            Layer::Linear(l) => l.backward(d_out).map(Some),
        }
    }

    pub fn clear_context(&mut self) {
        match self {
            Layer::Conv(l) => l.clear_context(),
            Layer::MaxPool(l) => l.clear_context(),
            Layer::Activation(l) => l.clear_context(),
            Layer::Flatten(l) => l.input_dims = None,
            Layer::Linear(l) => l.clear_context(),
        }
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        match self {
            Layer::Conv(l) => l.params_mut(prefix, out),
            Layer::Linear(l) => l.params_mut(prefix, out),
            Layer::Activation(l) => match l.params_mut() {
                ActivationParams::AReLU(st) => {
                    out.push(ParamMut {
                        name: format!("{prefix}.alpha"),
                        kind: ParamKind::Alpha,
                        dims: vec![1],
                        value: std::slice::from_mut(&mut st.alpha),
                        grad: std::slice::from_mut(&mut st.grad_alpha),
                    });
                    out.push(ParamMut {
                        name: format!("{prefix}.beta"),
                        kind: ParamKind::Beta,
                        dims: vec![1],
                        value: std::slice::from_mut(&mut st.beta),
                        grad: std::slice::from_mut(&mut st.grad_beta),
                    });
                }
                ActivationParams::PReLU(st) => out.push(ParamMut {
                    name: format!("{prefix}.slope"),
                    kind: ParamKind::PReluSlope,
                    dims: vec![1],
                    value: std::slice::from_mut(&mut st.slope),
                    grad: std::slice::from_mut(&mut st.grad_slope),
                }),
                ActivationParams::None => {}
            },
            Layer::MaxPool(_) | Layer::Flatten(_) => {}
        }
    }
}
