//! Mutable views over trainable values, used by optimizers and checkpoints.

use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    /// AReLU suppression factor; projected into the clamp interval after a step.
    Alpha,
    /// AReLU amplification parameter.
    Beta,
    PReluSlope,
}

impl ParamKind {
    pub fn is_activation(self) -> bool {
        matches!(
            self,
            ParamKind::Alpha | ParamKind::Beta | ParamKind::PReluSlope
        )
    }
}

/// Optimizer grouping of a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamGroup {
    pub weight_decay: f64,
    pub clamp_alpha: bool,
    /// Activation scalars can be routed to the momentum rule even when the
    /// network weights use Adam.
    pub activation: bool,
}

/// A trainable tensor or scalar together with its gradient accumulator.
pub struct ParamMut<'a, T: Real> {
    pub name: String,
    pub kind: ParamKind,
    pub dims: Vec<usize>,
    pub value: &'a mut [T],
    pub grad: &'a mut [T],
}

impl<T: Real> ParamMut<'_, T> {
    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}
