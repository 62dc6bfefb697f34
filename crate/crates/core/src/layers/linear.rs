use rand::Rng;

use crate::error::{Error, Result};
use crate::param::{ParamKind, ParamMut};
use crate::tensor::{matmul, Real, Shape, Tensor};

use super::init::Init;

#[derive(Debug, Clone)]
pub struct LinearContext<T: Real> {
    input: Tensor<T>,
}

fn check<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (n, din) = match *x.dims() {
        [n, d] => (n, d),
        _ => {
            return Err(Error::contract(format!(
                "linear expects [N, D] input, got {:?}",
                x.dims()
            )))
        }
    };
    let dout = match *w.dims() {
        [o, i] if i == din => o,
        _ => {
            return Err(Error::contract(format!(
                "linear weight {:?} incompatible with input {:?}",
                w.dims(),
                x.dims()
            )))
        }
    };
    if b.dims() != [dout] {
        return Err(Error::contract(format!(
            "linear bias {:?}, expected [{dout}]",
            b.dims()
        )));
    }
    Ok((n, din, dout))
}

/// `y = x · wᵀ + b`
pub fn linear_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(Tensor<T>, LinearContext<T>)> {
    let (n, din, dout) = check(x, w, b)?;
    let mut y = vec![T::zero(); n * dout];
    for row in y.chunks_mut(dout) {
        row.copy_from_slice(b.data());
    }
    matmul(x.data(), false, w.data(), true, &mut y, n, din, dout, true);
    Ok((
        Tensor::from_parts(Shape::new([n, dout]).expect("valid"), y),
        LinearContext { input: x.clone() },
    ))
}

/// `(d_x, d_w, d_b)` for the map above; `w` is the weight used in forward.
pub fn linear_backward<T: Real>(
    ctx: &LinearContext<T>,
    w: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let x = &ctx.input;
    let (n, din) = (x.dims()[0], x.dims()[1]);
    let dout = w.dims()[0];
    if d_out.dims() != [n, dout] {
        return Err(Error::contract(format!(
            "linear backward: d_out {:?}, expected [{n}, {dout}]",
            d_out.dims()
        )));
    }
    let mut dx = vec![T::zero(); n * din];
    matmul(
        d_out.data(),
        false,
        w.data(),
        false,
        &mut dx,
        n,
        dout,
        din,
        false,
    );
    let mut dw = vec![T::zero(); dout * din];
    matmul(
        d_out.data(),
        true,
        x.data(),
        false,
        &mut dw,
        dout,
        n,
        din,
        false,
    );
    let mut db = vec![0.0f64; dout];
    for row in d_out.data().chunks(dout) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g.f64();
        }
    }
    Ok((
        Tensor::from_parts(x.shape().clone(), dx),
        Tensor::from_parts(w.shape().clone(), dw),
        Tensor::from_parts(
            Shape::new([dout]).expect("valid"),
            db.into_iter().map(T::of).collect(),
        ),
    ))
}

#[derive(Debug, Clone)]
pub struct Linear<T: Real> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    ctx: Option<LinearContext<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(din: usize, dout: usize, init: Init, rng: &mut R) -> Result<Self> {
        let weight = init.sample(&[dout, din], din, rng)?;
        Ok(Self::from_parts(weight, Tensor::zeros(&[dout])?))
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Linear {
            grad_weight: Tensor::from_parts(weight.shape().clone(), vec![T::zero(); weight.len()]),
            grad_bias: Tensor::from_parts(bias.shape().clone(), vec![T::zero(); bias.len()]),
            weight,
            bias,
            ctx: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let (y, ctx) = linear_forward(x, &self.weight, &self.bias)?;
        if record {
            self.ctx = Some(ctx);
        }
        Ok(y)
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let ctx = self
            .ctx
            .take()
            .ok_or_else(|| Error::State("linear backward without forward".into()))?;
        let (dx, dw, db) = linear_backward(&ctx, &self.weight, d_out)?;
        for (a, &g) in self.grad_weight.data_mut().iter_mut().zip(dw.data()) {
            *a += g;
        }
        for (a, &g) in self.grad_bias.data_mut().iter_mut().zip(db.data()) {
            *a += g;
        }
        Ok(dx)
    }

    pub fn clear_context(&mut self) {
        self.ctx = None;
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        out.push(ParamMut {
            name: format!("{prefix}.weight"),
            kind: ParamKind::Weight,
            dims: self.weight.dims().to_vec(),
            value: self.weight.data_mut(),
            grad: self.grad_weight.data_mut(),
        });
        out.push(ParamMut {
            name: format!("{prefix}.bias"),
            kind: ParamKind::Bias,
            dims: self.bias.dims().to_vec(),
            value: self.bias.data_mut(),
            grad: self.grad_bias.data_mut(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], xs: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(dims, xs).unwrap()
    }

    #[test]
    fn forward_examples() {
        let (y, _) = linear_forward(
            &t(&[1, 2], &[1.0, 2.0]),
            &t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]),
            &t(&[2], &[0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
        let (y, _) = linear_forward(
            &t(&[1, 2], &[1.0, 1.0]),
            &t(&[1, 2], &[2.0, 3.0]),
            &t(&[1], &[1.0]),
        )
        .unwrap();
        assert_eq!(y.data(), &[6.0]);
        let (y, _) = linear_forward(
            &t(&[3, 2], &[0.0; 6]),
            &t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]),
            &t(&[2], &[0.5, -0.5]),
        )
        .unwrap();
        assert_eq!(y.data(), &[0.5, -0.5, 0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn identity_backward() {
        let w = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let (_, ctx) = linear_forward(&t(&[1, 2], &[1.0, 2.0]), &w, &t(&[2], &[0.0, 0.0])).unwrap();
        let (dx, dw, db) = linear_backward(&ctx, &w, &t(&[1, 2], &[1.0, 1.0])).unwrap();
        assert_eq!(dx.data(), &[1.0, 1.0]);
        assert_eq!(dw.data(), &[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(db.data(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_upstream() {
        let w = t(&[2, 3], &[1.0, -2.0, 0.5, 0.1, 0.2, 0.3]);
        let (_, ctx) = linear_forward(
            &t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            &w,
            &t(&[2], &[0.0, 0.0]),
        )
        .unwrap();
        let (dx, dw, db) = linear_backward(&ctx, &w, &t(&[2, 2], &[0.0; 4])).unwrap();
        assert!(dx
            .data()
            .iter()
            .chain(dw.data())
            .chain(db.data())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn mismatches_are_rejected() {
        let r = linear_forward(
            &t(&[1, 3], &[1.0; 3]),
            &t(&[2, 2], &[1.0; 4]),
            &t(&[2], &[0.0; 2]),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
        let r = linear_forward(
            &t(&[1, 2], &[1.0; 2]),
            &t(&[2, 2], &[1.0; 4]),
            &t(&[3], &[0.0; 3]),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
