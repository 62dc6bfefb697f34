//! Activation functions: AReLU with its ELSA attention map, and the baseline
//! roster it is compared against.

mod arelu;
mod baseline;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub use arelu::{
    arelu_backward, arelu_forward, clamp_c, elsa_attention, AReLUState, ActivationContext,
    ALPHA_MAX, ALPHA_MIN,
};
pub use baseline::{baseline_backward, baseline_forward, PReluState, SELU_ALPHA, SELU_LAMBDA};

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    AReLU,
    ReLU,
    LReLU { slope: f64 },
    ReLU6,
    RReLU { lower: f64, upper: f64 },
    Elu { alpha: f64 },
    Celu { alpha: f64 },
    Selu,
    Gelu,
    Sigmoid,
    Tanh,
    Softplus,
    Swish,
    PReLU,
}

impl ActivationKind {
    /// Every kind with its default hyperparameters, in config-name order.
    pub const ALL: [ActivationKind; 14] = [
        ActivationKind::AReLU,
        ActivationKind::ReLU,
        ActivationKind::LReLU { slope: 0.01 },
        ActivationKind::ReLU6,
        ActivationKind::RReLU {
            lower: 1.0 / 8.0,
            upper: 1.0 / 3.0,
        },
        ActivationKind::Elu { alpha: 1.0 },
        ActivationKind::Celu { alpha: 1.0 },
        ActivationKind::Selu,
        ActivationKind::Gelu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Softplus,
        ActivationKind::Swish,
        ActivationKind::PReLU,
    ];

    pub fn lrelu() -> Self {
        ActivationKind::ALL[2]
    }

    pub fn rrelu() -> Self {
        ActivationKind::ALL[4]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::AReLU => "arelu",
            ActivationKind::ReLU => "relu",
            ActivationKind::LReLU { .. } => "lrelu",
            ActivationKind::ReLU6 => "relu6",
            ActivationKind::RReLU { .. } => "rrelu",
            ActivationKind::Elu { .. } => "elu",
            ActivationKind::Celu { .. } => "celu",
            ActivationKind::Selu => "selu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Swish => "swish",
            ActivationKind::PReLU => "prelu",
        }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, ActivationKind::AReLU | ActivationKind::PReLU)
    }

    /// Points where the function is not differentiable.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            ActivationKind::AReLU
            | ActivationKind::ReLU
            | ActivationKind::LReLU { .. }
            | ActivationKind::RReLU { .. }
            | ActivationKind::PReLU
            | ActivationKind::Selu => &[0.0],
            ActivationKind::ReLU6 => &[0.0, 6.0],
            _ => &[],
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase();
        ActivationKind::ALL
            .iter()
            .find(|k| k.name() == wanted)
            .copied()
            .ok_or_else(|| Error::config(format!("unknown activation '{s}'")))
    }
}

/// Learnable parameters carried by an activation layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationParams<T: Real> {
    None,
    AReLU(AReLUState<T>),
    PReLU(PReluState<T>),
}

/// An activation as a network layer: kind, learnable state, and the forward
/// context kept for backward.
#[derive(Debug, Clone)]
pub struct ActivationLayer<T: Real> {
    kind: ActivationKind,
    params: ActivationParams<T>,
    ctx: Option<ActivationContext<T>>,
    rng: ChaCha8Rng,
}

impl<T: Real> ActivationLayer<T> {
    /// `alpha`/`beta` are only used by AReLU. `seed` drives RReLU sampling.
    pub fn new(kind: ActivationKind, alpha: f64, beta: f64, seed: u64) -> Self {
        let params = match kind {
            ActivationKind::AReLU => ActivationParams::AReLU(AReLUState::new(alpha, beta)),
            ActivationKind::PReLU => ActivationParams::PReLU(PReluState::default()),
            _ => ActivationParams::None,
        };
        ActivationLayer {
            kind,
            params,
            ctx: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    pub fn params(&self) -> &ActivationParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ActivationParams<T> {
        &mut self.params
    }

    pub fn arelu_state(&self) -> Option<&AReLUState<T>> {
        match &self.params {
            ActivationParams::AReLU(s) => Some(s),
            _ => None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (y, ctx) = match &self.params {
            ActivationParams::AReLU(st) => arelu_forward(x, st),
            ActivationParams::PReLU(st) => {
                baseline_forward(&self.kind, x, mode, Some(st), &mut self.rng)?
            }
            ActivationParams::None => baseline_forward(&self.kind, x, mode, None, &mut self.rng)?,
        };
        self.ctx = Some(ctx);
        Ok(y)
    }

    /// Consumes the cached context; parameter gradients are accumulated.
    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let ctx = self
            .ctx
            .take()
            .ok_or_else(|| Error::State(format!("{} backward without forward", self.kind)))?;
        match &mut self.params {
            ActivationParams::AReLU(st) => Ok(arelu_backward(&ctx, st, d_out)?.0),
            ActivationParams::PReLU(st) => {
                let (dx, d_slope) = baseline_backward(&self.kind, &ctx, d_out, Some(st))?;
                st.grad_slope += T::of(d_slope.unwrap_or(0.0));
                Ok(dx)
            }
            ActivationParams::None => Ok(baseline_backward(&self.kind, &ctx, d_out, None)?.0),
        }
    }

    pub fn clear_context(&mut self) {
        self.ctx = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
        }
        assert_eq!(
            "ReLU".parse::<ActivationKind>().unwrap(),
            ActivationKind::ReLU
        );
        assert!(matches!(
            "maxout".parse::<ActivationKind>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn only_arelu_and_prelu_are_learnable() {
        let learnable: Vec<_> = ActivationKind::ALL
            .iter()
            .filter(|k| k.is_learnable())
            .collect();
        assert_eq!(
            learnable,
            vec![&ActivationKind::AReLU, &ActivationKind::PReLU]
        );
        for k in ActivationKind::ALL {
            let layer = ActivationLayer::<f32>::new(k, 0.9, 2.0, 0);
            assert_eq!(
                matches!(layer.params(), ActivationParams::None),
                !k.is_learnable()
            );
        }
    }

    #[test]
    fn layer_backward_without_forward_is_a_state_error() {
        let mut layer = ActivationLayer::<f64>::new(ActivationKind::AReLU, 0.9, 2.0, 0);
        let g = Tensor::from_f64(&[1], &[1.0]).unwrap();
        assert!(matches!(layer.backward(&g), Err(Error::State(_))));
        let x = Tensor::from_f64(&[1], &[-1.0]).unwrap();
        layer.forward(&x, Mode::Train).unwrap();
        layer.backward(&g).unwrap();
        assert!(matches!(layer.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn prelu_layer_accumulates_slope_gradient() {
        let mut layer = ActivationLayer::<f64>::new(ActivationKind::PReLU, 0.0, 0.0, 0);
        let x = Tensor::from_f64(&[2], &[-2.0, 1.0]).unwrap();
        let g = Tensor::from_f64(&[2], &[3.0, 1.0]).unwrap();
        for _ in 0..2 {
            layer.forward(&x, Mode::Train).unwrap();
            layer.backward(&g).unwrap();
        }
        match layer.params() {
            ActivationParams::PReLU(st) => assert_eq!(st.grad_slope, -12.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
