//! Max pooling with floor-mode output size.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct PoolContext {
    input_dims: [usize; 4],
    /// Linear input offset of the winning element for every output element.
    argmax: Vec<usize>,
}

impl PoolContext {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

fn pool<T: Real>(x: &Tensor<T>, window: usize, stride: usize) -> Result<(Tensor<T>, PoolContext)> {
    let [n, c, h, w] = match *x.dims() {
        [n, c, h, w] => [n, c, h, w],
        _ => {
            return Err(Error::contract(format!(
                "maxpool expects 4-D input, got {:?}",
                x.dims()
            )))
        }
    };
    if window == 0 || stride == 0 {
        return Err(Error::contract("maxpool window and stride must be >= 1"));
    }
    if window > h || window > w {
        return Err(Error::contract(format!(
            "maxpool window {window} larger than input {h}x{w}"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        if window == 2 && stride == 2 {
            for r in 0..oh {
                let top = base + 2 * r * w;
                let (r0, r1) = (&data[top..top + w], &data[top + w..top + 2 * w]);
                for q in 0..ow {
                    // candidates in linear-index order; strict > keeps the first on ties
                    let cands = [
                        (r0[2 * q], 2 * q),
                        (r0[2 * q + 1], 2 * q + 1),
                        (r1[2 * q], w + 2 * q),
                        (r1[2 * q + 1], w + 2 * q + 1),
                    ];
                    let (mut best, mut off) = cands[0];
                    for &(v, o) in &cands[1..] {
                        if v > best {
                            best = v;
                            off = o;
                        }
                    }
                    out.push(best);
                    argmax.push(top + off);
                }
            }
            continue;
        }
        for r in 0..oh {
            for q in 0..ow {
                let mut best_off = base + r * stride * w + q * stride;
                let mut best = data[best_off];
                for i in 0..window {
                    let row = base + (r * stride + i) * w + q * stride;
                    for (j, &v) in data[row..row + window].iter().enumerate() {
                        // strict comparison keeps the lowest index on ties
                        if v > best {
                            best = v;
                            best_off = row + j;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_off);
            }
        }
    }
    let y = Tensor::from_parts(Shape::new([n, c, oh, ow]).expect("valid pool output"), out);
    Ok((
        y,
        PoolContext {
            input_dims: [n, c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2d_forward<T: Real>(
    x: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, PoolContext)> {
    pool(x, window, stride)
}

pub fn maxpool2d_backward<T: Real>(ctx: &PoolContext, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    if d_out.len() != ctx.argmax.len() {
        return Err(Error::contract(format!(
            "maxpool backward: d_out has {} elements, forward produced {}",
            d_out.len(),
            ctx.argmax.len()
        )));
    }
    let mut dx = vec![T::zero(); ctx.input_dims.iter().product()];
    for (&off, &g) in ctx.argmax.iter().zip(d_out.data()) {
        dx[off] += g;
    }
    Ok(Tensor::from_parts(
        Shape::new(ctx.input_dims).expect("cached dims"),
        dx,
    ))
}

#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
    ctx: Option<PoolContext>,
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> Self {
        MaxPool2d {
            window,
            stride,
            ctx: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.window > h || self.window > w {
            return Err(Error::contract(format!(
                "maxpool window {} larger than input {h}x{w}",
                self.window
            )));
        }
        Ok((
            (h - self.window) / self.stride + 1,
            (w - self.window) / self.stride + 1,
        ))
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let (y, ctx) = pool(x, self.window, self.stride)?;
        if record {
            self.ctx = Some(ctx);
        }
        Ok(y)
    }

    pub fn backward<T: Real>(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let ctx = self
            .ctx
            .take()
            .ok_or_else(|| Error::State("maxpool backward without forward".into()))?;
        maxpool2d_backward(&ctx, d_out)
    }

    pub fn clear_context(&mut self) {
        self.ctx = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], xs: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(dims, xs).unwrap()
    }

    #[test]
    fn picks_the_maximum() {
        let (y, _) = maxpool2d_forward(&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let (y, ctx) = maxpool2d_forward(&t(&[1, 1, 2, 2], &[5.0; 4]), 2, 2).unwrap();
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(ctx.argmax(), &[0]);
        let dx = maxpool2d_backward(&ctx, &t(&[1, 1, 1, 1], &[1.0])).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ascending_four_by_four() {
        let xs: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let (y, _) = maxpool2d_forward(&t(&[1, 1, 4, 4], &xs), 2, 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn floor_mode_drops_the_remainder() {
        let xs: Vec<f64> = (0..49).map(|v| v as f64).collect();
        let (y, _) = maxpool2d_forward(&t(&[1, 1, 7, 7], &xs), 2, 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 3, 3]);
        assert_eq!(y.data()[8], 40.0);
    }

    #[test]
    fn backward_routes_to_winner() {
        let (_, ctx) = maxpool2d_forward(&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap();
        let dx = maxpool2d_backward(&ctx, &t(&[1, 1, 1, 1], &[7.0])).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn oversized_window_is_rejected() {
        assert!(matches!(
            maxpool2d_forward(&t(&[1, 1, 2, 2], &[1.0; 4]), 3, 1),
            Err(Error::Contract(_))
        ));
    }
}
