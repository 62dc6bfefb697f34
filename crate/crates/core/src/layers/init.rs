use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Weight initialization schemes. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Kaiming-uniform over fan-in with leaky slope `a = sqrt(5)`:
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`. This is the stock default of
    /// mainstream deep-learning frameworks for conv and linear layers.
    KaimingUniform,
    /// Kaiming-uniform with the ReLU gain: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
    HeUniform,
    Uniform(f64),
    Zeros,
}

impl Init {
    pub fn bound(&self, fan_in: usize) -> f64 {
        match *self {
            Init::KaimingUniform => 1.0 / (fan_in as f64).sqrt(),
            Init::HeUniform => (6.0 / fan_in as f64).sqrt(),
            Init::Uniform(b) => b,
            Init::Zeros => 0.0,
        }
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(
        &self,
        dims: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        let mut t = Tensor::zeros(dims)?;
        let b = self.bound(fan_in);
        if b > 0.0 {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = T::of(rng.random_range(-b..b)));
        }
        Ok(t)
    }

    pub fn name(&self) -> String {
        match self {
            Init::KaimingUniform => "kaiming_uniform".into(),
            Init::HeUniform => "he_uniform".into(),
            Init::Uniform(b) => format!("uniform:{b}"),
            Init::Zeros => "zeros".into(),
        }
    }
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kaiming_uniform" => Ok(Init::KaimingUniform),
            "he_uniform" => Ok(Init::HeUniform),
            "zeros" => Ok(Init::Zeros),
            other => match other.strip_prefix("uniform:") {
                Some(b) => b
                    .parse::<f64>()
                    .ok()
                    .filter(|b| b.is_finite() && *b >= 0.0)
                    .map(Init::Uniform)
                    .ok_or_else(|| Error::config(format!("bad uniform bound in '{s}'"))),
                None => Err(Error::config(format!("unknown init '{s}'"))),
            },
        }
    }
}
