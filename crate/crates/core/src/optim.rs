//! SGD with classical momentum and Adam over [`ParamMut`] views.
//!
//! SGD follows `v := mu*v + lr*(g + wd*theta); theta := theta - v` for every
//! parameter. AReLU `alpha` values are projected back into `[0.01, 0.99]`
//! after each step.

use std::fmt;
use std::str::FromStr;

use crate::activations::{ALPHA_MAX, ALPHA_MIN};
use crate::error::{Error, Result};
use crate::param::{ParamGroup, ParamKind, ParamMut};
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// The clamp interval in `T`, rounded inward so a stored `alpha` never lies
/// outside `[0.01, 0.99]` when widened back to `f64`.
fn alpha_bounds<T: Real>() -> (T, T) {
    let mut lo = T::of(ALPHA_MIN);
    if lo.f64() < ALPHA_MIN {
        lo = lo + lo * T::epsilon();
    }
    let mut hi = T::of(ALPHA_MAX);
    if hi.f64() > ALPHA_MAX {
        hi = hi - hi * T::epsilon() / T::of(2.0);
    }
    (lo, hi)
}

/// Which update rule the activation scalars follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationRule {
    /// Same optimizer as the network weights.
    Shared,
    /// Always the momentum rule, with the configured `lr` and `momentum`.
    Momentum,
}

impl FromStr for ActivationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shared" => Ok(ActivationRule::Shared),
            "momentum" => Ok(ActivationRule::Momentum),
            other => Err(Error::config(format!(
                "unknown activation optimizer rule '{other}'"
            ))),
        }
    }
}

impl fmt::Display for ActivationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationRule::Shared => "shared",
            ActivationRule::Momentum => "momentum",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Apply `weight_decay` to activation scalars as well.
    pub decay_activation_params: bool,
    pub activation_rule: ActivationRule,
}

impl OptimConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::Sgd,
            lr,
            momentum,
            ..Self::adam(lr)
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::Adam,
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_activation_params: false,
            activation_rule: ActivationRule::Shared,
        }
    }

    pub fn group_for(&self, kind: ParamKind) -> ParamGroup {
        let activation = kind.is_activation();
        ParamGroup {
            weight_decay: if activation && !self.decay_activation_params {
                0.0
            } else {
                self.weight_decay
            },
            clamp_alpha: kind == ParamKind::Alpha,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lr,
            self.momentum,
            self.weight_decay,
            self.beta1,
            self.beta2,
            self.eps,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("optimizer hyperparameters must be finite"));
        }
        if self.lr <= 0.0 {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight decay must be >= 0"));
        }
        Ok(())
    }
}

/// One momentum step on a parameter slice.
pub fn sgd_momentum_step<T: Real>(
    value: &mut [T],
    grad: &[T],
    velocity: &mut [T],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    let (lr, mu, wd) = (T::of(lr), T::of(momentum), T::of(weight_decay));
    for ((theta, &g), v) in value.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + lr * (g + wd * *theta);
        *theta -= *v;
    }
}

/// One bias-corrected Adam step; `step` is the already-incremented counter.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Real>(
    value: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    cfg: &OptimConfig,
    weight_decay: f64,
) {
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let one = T::one();
    let c1 = T::of(1.0 - cfg.beta1.powi(step as i32));
    let c2 = T::of(1.0 - cfg.beta2.powi(step as i32));
    let (lr, eps, wd) = (T::of(cfg.lr), T::of(cfg.eps), T::of(weight_decay));
    for (((theta, &g), m), v) in value
        .iter_mut()
        .zip(grad)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        let g = g + wd * *theta;
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone)]
enum Slot<T: Real> {
    Momentum(Vec<T>),
    Adam { m: Vec<T>, v: Vec<T> },
}

#[derive(Debug, Clone)]
struct ParamState<T: Real> {
    name: String,
    slot: Slot<T>,
}

/// Optimizer with per-parameter buffers, matched to parameters by position
/// and name.
#[derive(Debug, Clone)]
pub struct Optimizer<T: Real> {
    cfg: OptimConfig,
    step: u64,
    states: Vec<ParamState<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(cfg: OptimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            step: 0,
            states: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn rule_for(&self, group: &ParamGroup) -> OptimizerKind {
        if group.activation && self.cfg.activation_rule == ActivationRule::Momentum {
            OptimizerKind::Sgd
        } else {
            self.cfg.kind
        }
    }

    /// Applies one update to every parameter. Fails without touching any
    /// value if a gradient is non-finite.
    pub fn step(&mut self, params: &mut [ParamMut<'_, T>]) -> Result<()> {
        for p in params.iter() {
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient {} at {}[{}]",
                    p.grad[i], p.name, i
                )));
            }
        }
        if self.states.is_empty() {
            for p in params.iter() {
                let rule = self.rule_for(&self.cfg.group_for(p.kind));
                let n = p.value.len();
                let slot = match rule {
                    OptimizerKind::Sgd => Slot::Momentum(vec![T::zero(); n]),
                    OptimizerKind::Adam => Slot::Adam {
                        m: vec![T::zero(); n],
                        v: vec![T::zero(); n],
                    },
                };
                self.states.push(ParamState {
                    name: p.name.clone(),
                    slot,
                });
            }
        }
        if self.states.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} parameters, got {}",
                self.states.len(),
                params.len()
            )));
        }
        self.step += 1;
        for (p, st) in params.iter_mut().zip(&mut self.states) {
            if st.name != p.name {
                return Err(Error::State(format!(
                    "parameter order changed: expected {}, got {}",
                    st.name, p.name
                )));
            }
            let group = self.cfg.group_for(p.kind);
            match &mut st.slot {
                Slot::Momentum(vel) => sgd_momentum_step(
                    p.value,
                    p.grad,
                    vel,
                    self.cfg.lr,
                    self.cfg.momentum,
                    group.weight_decay,
                ),
                Slot::Adam { m, v } => adam_step(
                    p.value,
                    p.grad,
                    m,
                    v,
                    self.step,
                    &self.cfg,
                    group.weight_decay,
                ),
            }
            if group.clamp_alpha {
                let (lo, hi) = alpha_bounds::<T>();
                for a in p.value.iter_mut() {
                    *a = a.max(lo).min(hi);
                }
            }
        }
        Ok(())
    }
}

pub fn zero_grads<T: Real>(params: &mut [ParamMut<'_, T>]) {
    for p in params {
        p.zero_grad();
    }
}
