//! AReLU: ReLU plus an element-wise sign-based attention (ELSA) residue.
//!
//! For each element of the pre-activation volume the attention map picks
//! `C(alpha)` on the negative side and `sigmoid(beta)` on the non-negative
//! side, so the activation is
//!
//! ```text
//! F(x) = C(alpha) * x          x <  0
//!        (1 + sigmoid(beta)) * x   x >= 0
//! ```
//!
//! `alpha` and `beta` are one scalar pair per layer, shared by every element.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::sigmoid;

pub const ALPHA_MIN: f64 = 0.01;
pub const ALPHA_MAX: f64 = 0.99;

/// Clamp `C(alpha)` into `[0.01, 0.99]`.
#[inline]
pub fn clamp_c(alpha: f64) -> f64 {
    alpha.clamp(ALPHA_MIN, ALPHA_MAX)
}

/// The learnable `(alpha, beta)` pair of one AReLU layer and its gradient
/// accumulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AReLUState<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub grad_alpha: T,
    pub grad_beta: T,
}

impl<T: Real> AReLUState<T> {
    pub const DEFAULT_ALPHA: f64 = 0.9;
    pub const DEFAULT_BETA: f64 = 2.0;

    pub fn new(alpha: f64, beta: f64) -> Self {
        AReLUState {
            alpha: T::of(alpha),
            beta: T::of(beta),
            grad_alpha: T::zero(),
            grad_beta: T::zero(),
        }
    }

    /// Slope applied to negative inputs.
    pub fn negative_slope(&self) -> f64 {
        clamp_c(self.alpha.f64())
    }

    /// Slope applied to non-negative inputs, always in `(1, 2)`.
    pub fn positive_slope(&self) -> f64 {
        1.0 + sigmoid(self.beta.f64())
    }

    /// True when `alpha` sits outside the clamp interval and its gradient is
    /// detached.
    pub fn alpha_detached(&self) -> bool {
        let a = self.alpha.f64();
        !(ALPHA_MIN..=ALPHA_MAX).contains(&a)
    }

    pub fn zero_grad(&mut self) {
        self.grad_alpha = T::zero();
        self.grad_beta = T::zero();
    }
}

impl<T: Real> Default for AReLUState<T> {
    fn default() -> Self {
        Self::new(Self::DEFAULT_ALPHA, Self::DEFAULT_BETA)
    }
}

/// Cached forward input, consumed by the matching backward.
#[derive(Debug, Clone)]
pub struct ActivationContext<T: Real> {
    pub(crate) input: Tensor<T>,
    /// Per-element negative slopes drawn by RReLU in training mode.
    pub(crate) sampled_slopes: Option<Vec<T>>,
}

impl<T: Real> ActivationContext<T> {
    pub fn input(&self) -> &Tensor<T> {
        &self.input
    }
}

/// ELSA attention map: `C(alpha)` where `v < 0`, `sigmoid(beta)` elsewhere.
pub fn elsa_attention<T: Real>(v: &Tensor<T>, alpha: f64, beta: f64) -> Tensor<T> {
    let neg = T::of(clamp_c(alpha));
    let pos = T::of(sigmoid(beta));
    v.map(|x| if x < T::zero() { neg } else { pos })
}

pub fn arelu_forward<T: Real>(
    x: &Tensor<T>,
    state: &AReLUState<T>,
) -> (Tensor<T>, ActivationContext<T>) {
    let neg = T::of(state.negative_slope());
    let pos = T::of(state.positive_slope());
    let y = x.map(|v| if v < T::zero() { neg * v } else { pos * v });
    let ctx = ActivationContext {
        input: x.clone(),
        sampled_slopes: None,
    };
    (y, ctx)
}

/// Backward pass. Returns `(d_x, d_alpha, d_beta)` and also adds the two
/// parameter gradients into `state`'s accumulators.
///
/// `d_alpha` is zero while `alpha` lies outside `[0.01, 0.99]`.
pub fn arelu_backward<T: Real>(
    ctx: &ActivationContext<T>,
    state: &mut AReLUState<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, f64, f64)> {
    let x = &ctx.input;
    if x.shape() != d_out.shape() {
        return Err(Error::contract(format!(
            "arelu backward: d_out {:?} does not match cached input {:?}",
            d_out.dims(),
            x.dims()
        )));
    }
    let neg = T::of(state.negative_slope());
    let s = sigmoid(state.beta.f64());
    let pos = T::of(1.0 + s);

    // Eight independent accumulators so the sums do not serialize on add latency.
    const LANES: usize = 8;
    let mut d_x = vec![T::zero(); x.len()];
    let (mut neg_acc, mut pos_acc) = ([0.0f64; LANES], [0.0f64; LANES]);
    let mut chunks = x
        .data()
        .chunks_exact(LANES)
        .zip(d_out.data().chunks_exact(LANES));
    let mut dst = d_x.chunks_exact_mut(LANES);
    for ((xs, gs), ds) in chunks.by_ref().zip(dst.by_ref()) {
        for l in 0..LANES {
            let negative = xs[l] < T::zero();
            let prod = xs[l].f64() * gs[l].f64();
            ds[l] = gs[l] * if negative { neg } else { pos };
            neg_acc[l] += if negative { prod } else { 0.0 };
            pos_acc[l] += if negative { 0.0 } else { prod };
        }
    }
    let tail = x.len() - x.len() % LANES;
    let rest = x.data()[tail..].iter().zip(&d_out.data()[tail..]);
    for ((&xi, &gi), d) in rest.zip(&mut d_x[tail..]) {
        let prod = xi.f64() * gi.f64();
        if xi < T::zero() {
            *d = neg * gi;
            neg_acc[0] += prod;
        } else {
            *d = pos * gi;
            pos_acc[0] += prod;
        }
    }
    let neg_sum: f64 = neg_acc.iter().sum();
    let pos_sum: f64 = pos_acc.iter().sum();
    let d_alpha = if state.alpha_detached() { 0.0 } else { neg_sum };
    let d_beta = s * (1.0 - s) * pos_sum;
    state.grad_alpha += T::of(d_alpha);
    state.grad_beta += T::of(d_beta);
    Ok((Tensor::from_parts(x.shape().clone(), d_x), d_alpha, d_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(xs: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[xs.len()], xs).unwrap()
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_c(0.5), 0.5);
        assert_eq!(clamp_c(-1.0), 0.01);
        assert_eq!(clamp_c(2.0), 0.99);
    }

    #[test]
    fn elsa_examples() {
        assert_eq!(
            elsa_attention(&t(&[-1.0, 1.0]), 0.5, 0.0).data(),
            &[0.5, 0.5]
        );
        assert_eq!(
            elsa_attention(&t(&[-1.0, 1.0]), 2.0, 0.0).data(),
            &[0.99, 0.5]
        );
        let s = elsa_attention(&t(&[-3.0, 4.0]), 0.25, 1.0);
        assert_eq!(s.data()[0], 0.25);
        assert_relative_eq!(s.data()[1], 0.731_058_578_630_004_9, epsilon = 1e-15);
    }

    #[test]
    fn forward_examples() {
        let st = AReLUState::<f64>::new(0.5, 0.0);
        assert_eq!(
            arelu_forward(&t(&[-2.0, 0.0, 2.0]), &st).0.data(),
            &[-1.0, 0.0, 3.0]
        );
        let st = AReLUState::<f64>::new(0.25, 1.0);
        let y = arelu_forward(&t(&[-2.0, 3.0]), &st).0;
        assert_eq!(y.data()[0], -0.5);
        assert_relative_eq!(y.data()[1], 5.193_175_735_890_015, epsilon = 1e-14);
        let st = AReLUState::<f64>::new(-3.0, 7.0);
        assert_eq!(arelu_forward(&t(&[0.0]), &st).0.data(), &[0.0]);
    }

    #[test]
    fn backward_example() {
        let mut st = AReLUState::<f64>::new(0.5, 0.0);
        let (_, ctx) = arelu_forward(&t(&[-2.0, -3.0, 1.0]), &st);
        let (dx, da, db) = arelu_backward(&ctx, &mut st, &t(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(dx.data(), &[0.5, 0.5, 1.5]);
        assert_eq!(da, -5.0);
        assert_eq!(db, 0.25);
        assert_eq!(st.grad_alpha, -5.0);
        assert_eq!(st.grad_beta, 0.25);
    }

    #[test]
    fn backward_accumulates() {
        let mut st = AReLUState::<f64>::new(0.5, 0.0);
        let (_, ctx) = arelu_forward(&t(&[-1.0, 2.0]), &st);
        let g = t(&[1.0, 1.0]);
        arelu_backward(&ctx, &mut st, &g).unwrap();
        arelu_backward(&ctx, &mut st, &g).unwrap();
        assert_eq!(st.grad_alpha, -2.0);
        assert_eq!(st.grad_beta, 1.0);
    }

    #[test]
    fn no_negative_inputs_means_zero_alpha_grad() {
        let mut st = AReLUState::<f64>::new(0.3, 0.7);
        let (_, ctx) = arelu_forward(&t(&[5.0]), &st);
        let (_, da, _) = arelu_backward(&ctx, &mut st, &t(&[1.0])).unwrap();
        assert_eq!(da, 0.0);
    }

    #[test]
    fn alpha_outside_clamp_is_detached() {
        let mut st = AReLUState::<f64>::new(0.995, 0.0);
        let (_, ctx) = arelu_forward(&t(&[-1.0]), &st);
        let (dx, da, _) = arelu_backward(&ctx, &mut st, &t(&[2.0])).unwrap();
        assert_eq!(da, 0.0);
        assert_relative_eq!(dx.data()[0], 1.98, epsilon = 1e-15);
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let mut st = AReLUState::<f64>::default();
        let (_, ctx) = arelu_forward(&t(&[1.0, 2.0]), &st);
        assert!(matches!(
            arelu_backward(&ctx, &mut st, &t(&[1.0])),
            Err(Error::Contract(_))
        ));
    }
}
