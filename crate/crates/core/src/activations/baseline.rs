//! The non-attention activation catalog plus PReLU.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::arelu::ActivationContext;
use super::{sigmoid, ActivationKind, Mode};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

/// Learnable negative slope of a PReLU layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PReluState<T: Real> {
    pub slope: T,
    pub grad_slope: T,
}

impl<T: Real> PReluState<T> {
    pub const DEFAULT_SLOPE: f64 = 0.25;

    pub fn new(slope: f64) -> Self {
        PReluState {
            slope: T::of(slope),
            grad_slope: T::zero(),
        }
    }
}

impl<T: Real> Default for PReluState<T> {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SLOPE)
    }
}

fn gelu_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Value of a parameter-free activation at `x`. `neg_slope` carries the
/// PReLU slope or the RReLU slope in effect for this element.
pub(crate) fn scalar_value(kind: &ActivationKind, x: f64, neg_slope: f64) -> f64 {
    use ActivationKind::*;
    match *kind {
        ReLU => x.max(0.0),
        LReLU { .. } | RReLU { .. } | PReLU => {
            if x >= 0.0 {
                x
            } else {
                neg_slope * x
            }
        }
        ReLU6 => x.clamp(0.0, 6.0),
        Elu { alpha } => {
            if x >= 0.0 {
                x
            } else {
                alpha * x.exp_m1()
            }
        }
        Celu { alpha } => {
            if x >= 0.0 {
                x
            } else {
                alpha * (x / alpha).exp_m1()
            }
        }
        Selu => {
            if x >= 0.0 {
                SELU_LAMBDA * x
            } else {
                SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
            }
        }
        Gelu => x * gelu_cdf(x),
        Sigmoid => sigmoid(x),
        Tanh => x.tanh(),
        Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        Swish => x * sigmoid(x),
        AReLU => unreachable!("AReLU is handled by arelu_forward"),
    }
}

/// Derivative matching [`scalar_value`]; kinks take the `x >= 0` branch.
pub(crate) fn scalar_derivative(kind: &ActivationKind, x: f64, neg_slope: f64) -> f64 {
    use ActivationKind::*;
    match *kind {
        ReLU => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        LReLU { .. } | RReLU { .. } | PReLU => {
            if x >= 0.0 {
                1.0
            } else {
                neg_slope
            }
        }
        ReLU6 => {
            if (0.0..6.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        }
        Elu { alpha } => {
            if x >= 0.0 {
                1.0
            } else {
                alpha * x.exp()
            }
        }
        Celu { alpha } => {
            if x >= 0.0 {
                1.0
            } else {
                (x / alpha).exp()
            }
        }
        Selu => {
            if x >= 0.0 {
                SELU_LAMBDA
            } else {
                SELU_LAMBDA * SELU_ALPHA * x.exp()
            }
        }
        Gelu => gelu_cdf(x) + x * gelu_pdf(x),
        Sigmoid => {
            let s = sigmoid(x);
            s * (1.0 - s)
        }
        Tanh => {
            let t = x.tanh();
            1.0 - t * t
        }
        Softplus => sigmoid(x),
        Swish => {
            let s = sigmoid(x);
            s + x * s * (1.0 - s)
        }
        AReLU => unreachable!("AReLU is handled by arelu_backward"),
    }
}

/// Forward pass of a baseline activation.
///
/// `prelu` must be supplied for [`ActivationKind::PReLU`]; `rng` is drawn from
/// only by RReLU in [`Mode::Train`].
pub fn baseline_forward<T: Real, R: Rng + ?Sized>(
    kind: &ActivationKind,
    x: &Tensor<T>,
    mode: Mode,
    prelu: Option<&PReluState<T>>,
    rng: &mut R,
) -> Result<(Tensor<T>, ActivationContext<T>)> {
    let mut sampled = None;
    let y = match *kind {
        ActivationKind::AReLU => {
            return Err(Error::config("AReLU is not a baseline activation"));
        }
        ActivationKind::ReLU => x.map(|v| if v >= T::zero() { v } else { T::zero() }),
        ActivationKind::LReLU { slope } => {
            let s = T::of(slope);
            x.map(|v| if v >= T::zero() { v } else { s * v })
        }
        ActivationKind::PReLU => {
            let st =
                prelu.ok_or_else(|| Error::State("PReLU forward without slope state".into()))?;
            let s = st.slope;
            x.map(|v| if v >= T::zero() { v } else { s * v })
        }
        ActivationKind::RReLU { lower, upper } => match mode {
            Mode::Eval => {
                let s = T::of(0.5 * (lower + upper));
                x.map(|v| if v >= T::zero() { v } else { s * v })
            }
            Mode::Train => {
                let slopes: Vec<T> = (0..x.len())
                    .map(|_| T::of(rng.random_range(lower..=upper)))
                    .collect();
                let data = x
                    .data()
                    .iter()
                    .zip(&slopes)
                    .map(|(&v, &s)| if v >= T::zero() { v } else { s * v })
                    .collect();
                sampled = Some(slopes);
                Tensor::from_parts(x.shape().clone(), data)
            }
        },
        ref k => x.map(|v| T::of(scalar_value(k, v.f64(), 0.0))),
    };
    Ok((
        y,
        ActivationContext {
            input: x.clone(),
            sampled_slopes: sampled,
        },
    ))
}

/// Backward pass of a baseline activation: `(d_x, d_slope)`, where `d_slope`
/// is only present for PReLU and equals `sum_{x<0} x * d_out`.
pub fn baseline_backward<T: Real>(
    kind: &ActivationKind,
    ctx: &ActivationContext<T>,
    d_out: &Tensor<T>,
    prelu: Option<&PReluState<T>>,
) -> Result<(Tensor<T>, Option<f64>)> {
    let x = &ctx.input;
    if x.shape() != d_out.shape() {
        return Err(Error::contract(format!(
            "{} backward: d_out {:?} does not match cached input {:?}",
            kind,
            d_out.dims(),
            x.dims()
        )));
    }
    let zero = T::zero();
    let one = T::one();
    let piecewise = |s: T| {
        let data = x
            .data()
            .iter()
            .zip(d_out.data())
            .map(|(&v, &g)| if v >= zero { g } else { s * g })
            .collect();
        Tensor::from_parts(x.shape().clone(), data)
    };
    let out = match *kind {
        ActivationKind::AReLU => {
            return Err(Error::config("AReLU is not a baseline activation"));
        }
        ActivationKind::ReLU => (piecewise(zero), None),
        ActivationKind::LReLU { slope } => (piecewise(T::of(slope)), None),
        ActivationKind::PReLU => {
            let st =
                prelu.ok_or_else(|| Error::State("PReLU backward without slope state".into()))?;
            let mut d_slope = 0.0;
            for (&v, &g) in x.data().iter().zip(d_out.data()) {
                if v < zero {
                    d_slope += v.f64() * g.f64();
                }
            }
            (piecewise(st.slope), Some(d_slope))
        }
        ActivationKind::RReLU { lower, upper } => match &ctx.sampled_slopes {
            None => (piecewise(T::of(0.5 * (lower + upper))), None),
            Some(slopes) => {
                let data = x
                    .data()
                    .iter()
                    .zip(d_out.data())
                    .zip(slopes)
                    .map(|((&v, &g), &s)| if v >= zero { g } else { s * g })
                    .collect();
                (Tensor::from_parts(x.shape().clone(), data), None)
            }
        },
        ActivationKind::ReLU6 => {
            let six = T::of(6.0);
            let data = x
                .data()
                .iter()
                .zip(d_out.data())
                .map(|(&v, &g)| if v >= zero && v < six { g * one } else { zero })
                .collect();
            (Tensor::from_parts(x.shape().clone(), data), None)
        }
        ref k => {
            let data = x
                .data()
                .iter()
                .zip(d_out.data())
                .map(|(&v, &g)| T::of(scalar_derivative(k, v.f64(), 0.0)) * g)
                .collect();
            (Tensor::from_parts(x.shape().clone(), data), None)
        }
    };
    Ok(out)
}
