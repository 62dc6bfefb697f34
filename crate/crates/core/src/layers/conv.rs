//! 2-D cross-correlation via im2col + GEMM.

use rand::Rng;

use crate::error::{Error, Result};
use crate::param::{ParamKind, ParamMut};
use crate::tensor::{matmul, Real, Shape, Tensor};

use super::init::Init;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Real> {
    /// `[out_ch, in_ch, kh, kw]`
    pub weight: Tensor<T>,
    /// `[out_ch]`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        if weight.dims().len() != 4 {
            return Err(Error::contract(format!(
                "conv weight must be 4-D, got {:?}",
                weight.dims()
            )));
        }
        if bias.dims() != [weight.dims()[0]] {
            return Err(Error::contract(format!(
                "conv bias {:?} does not match {} output channels",
                bias.dims(),
                weight.dims()[0]
            )));
        }
        if stride == 0 {
            return Err(Error::contract("conv stride must be >= 1"));
        }
        Ok(ConvParams {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.dims()[2], self.weight.dims()[3])
    }

    /// Output spatial extent for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < kh || pw < kw {
            return Err(Error::contract(format!(
                "kernel {kh}x{kw} larger than padded input {ph}x{pw}"
            )));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }
}

/// Forward cache: the unfolded input patches, `[C_in*kh*kw, N*H'*W']`.
#[derive(Debug, Clone)]
pub struct ConvContext<T: Real> {
    input_dims: [usize; 4],
    out_hw: (usize, usize),
    cols: Vec<T>,
}

/// Output columns `q` in `[lo, hi)` whose input column `q * s - pad + kj`
/// falls inside `[0, w)`.
fn valid_cols(w: usize, ow: usize, s: usize, pad: usize, kj: usize) -> (usize, usize) {
    let lo = if kj >= pad { 0 } else { (pad - kj).div_ceil(s) };
    let hi = if w + pad <= kj {
        0
    } else {
        ((w + pad - kj - 1) / s + 1).min(ow)
    };
    (lo, hi.max(lo))
}

fn im2col<T: Real>(x: &[T], dims: [usize; 4], p: &ConvParams<T>, out_hw: (usize, usize)) -> Vec<T> {
    let [n, c, h, w] = dims;
    let (kh, kw) = p.kernel();
    let (oh, ow) = out_hw;
    let plane = oh * ow;
    let width = n * plane;
    let mut cols = vec![T::zero(); c * kh * kw * width];
    let (pad, s) = (p.padding, p.stride);
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let dst_row = &mut cols[row * width..(row + 1) * width];
                let (q_lo, q_hi) = valid_cols(w, ow, s, pad, kj);
                for b in 0..n {
                    let src = &x[(b * c + ci) * h * w..(b * c + ci + 1) * h * w];
                    let dst = &mut dst_row[b * plane..(b + 1) * plane];
                    for r in 0..oh {
                        let ih = r * s + ki;
                        if ih < pad || ih - pad >= h {
                            continue;
                        }
                        let src_row = &src[(ih - pad) * w..(ih - pad + 1) * w];
                        let d = &mut dst[r * ow + q_lo..r * ow + q_hi];
                        if s == 1 {
                            let first = q_lo + kj - pad;
                            d.copy_from_slice(&src_row[first..first + d.len()]);
                        } else {
                            for (qi, v) in d.iter_mut().enumerate() {
                                *v = src_row[(q_lo + qi) * s + kj - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(
    cols: &[T],
    dims: [usize; 4],
    p: &ConvParams<T>,
    out_hw: (usize, usize),
) -> Vec<T> {
    let [n, c, h, w] = dims;
    let (kh, kw) = p.kernel();
    let (oh, ow) = out_hw;
    let plane = oh * ow;
    let width = n * plane;
    let mut x = vec![T::zero(); n * c * h * w];
    let (pad, s) = (p.padding, p.stride);
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let src_row = &cols[row * width..(row + 1) * width];
                let (q_lo, q_hi) = valid_cols(w, ow, s, pad, kj);
                for b in 0..n {
                    let dst = &mut x[(b * c + ci) * h * w..(b * c + ci + 1) * h * w];
                    let src = &src_row[b * plane..(b + 1) * plane];
                    for r in 0..oh {
                        let ih = r * s + ki;
                        if ih < pad || ih - pad >= h {
                            continue;
                        }
                        let dst_row = &mut dst[(ih - pad) * w..(ih - pad + 1) * w];
                        let g = &src[r * ow + q_lo..r * ow + q_hi];
                        if s == 1 {
                            let first = q_lo + kj - pad;
                            for (d, &v) in dst_row[first..first + g.len()].iter_mut().zip(g) {
                                *d += v;
                            }
                        } else {
                            for (qi, &v) in g.iter().enumerate() {
                                dst_row[(q_lo + qi) * s + kj - pad] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

fn input_dims<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<[usize; 4]> {
    match *x.dims() {
        [n, c, h, w] if c == p.in_channels() => Ok([n, c, h, w]),
        _ => Err(Error::contract(format!(
            "conv expects [N, {}, H, W] input, got {:?}",
            p.in_channels(),
            x.dims()
        ))),
    }
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
) -> Result<(Tensor<T>, ConvContext<T>)> {
    let dims = input_dims(x, p)?;
    let (oh, ow) = p.output_hw(dims[2], dims[3])?;
    let cols = im2col(x.data(), dims, p, (oh, ow));
    let y = conv_apply(&cols, dims[0], p, (oh, ow));
    Ok((
        y,
        ConvContext {
            input_dims: dims,
            out_hw: (oh, ow),
            cols,
        },
    ))
}

fn conv_apply<T: Real>(
    cols: &[T],
    n: usize,
    p: &ConvParams<T>,
    (oh, ow): (usize, usize),
) -> Tensor<T> {
    let cout = p.out_channels();
    let k = p.weight.len() / cout;
    let plane = oh * ow;
    let width = n * plane;
    let mut tmp = vec![T::zero(); cout * width];
    matmul(
        p.weight.data(),
        false,
        cols,
        false,
        &mut tmp,
        cout,
        k,
        width,
        false,
    );
    let mut y = vec![T::zero(); n * cout * plane];
    for co in 0..cout {
        let b = p.bias.data()[co];
        for bi in 0..n {
            let src = &tmp[co * width + bi * plane..co * width + (bi + 1) * plane];
            let dst = &mut y[(bi * cout + co) * plane..(bi * cout + co + 1) * plane];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    Tensor::from_parts(Shape::new([n, cout, oh, ow]).expect("valid conv output"), y)
}

/// `(d_x, d_weight, d_bias)`.
pub type ConvGrads<T> = (Option<Tensor<T>>, Tensor<T>, Tensor<T>);

/// Gradients of one conv application: `(d_x, d_weight, d_bias)`.
/// `d_x` is skipped (returned as `None`) when `want_input_grad` is false.
pub fn conv2d_backward<T: Real>(
    ctx: &ConvContext<T>,
    p: &ConvParams<T>,
    d_out: &Tensor<T>,
    want_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let [n, _, _, _] = ctx.input_dims;
    let (oh, ow) = ctx.out_hw;
    let cout = p.out_channels();
    if d_out.dims() != [n, cout, oh, ow] {
        return Err(Error::contract(format!(
            "conv backward: d_out {:?}, expected {:?}",
            d_out.dims(),
            [n, cout, oh, ow]
        )));
    }
    let k = p.weight.len() / cout;
    let plane = oh * ow;
    let width = n * plane;

    let mut gathered = vec![T::zero(); cout * width];
    let mut d_bias = vec![T::zero(); cout];
    for bi in 0..n {
        for co in 0..cout {
            let src = &d_out.data()[(bi * cout + co) * plane..(bi * cout + co + 1) * plane];
            gathered[co * width + bi * plane..co * width + (bi + 1) * plane].copy_from_slice(src);
        }
    }
    for (co, db) in d_bias.iter_mut().enumerate() {
        let s: f64 = gathered[co * width..(co + 1) * width]
            .iter()
            .map(|v| v.f64())
            .sum();
        *db = T::of(s);
    }

    let mut d_weight = vec![T::zero(); cout * k];
    matmul(
        &gathered,
        false,
        &ctx.cols,
        true,
        &mut d_weight,
        cout,
        width,
        k,
        false,
    );

    let d_x = if want_input_grad {
        let mut d_cols = vec![T::zero(); k * width];
        matmul(
            p.weight.data(),
            true,
            &gathered,
            false,
            &mut d_cols,
            k,
            cout,
            width,
            false,
        );
        let dx = col2im(&d_cols, ctx.input_dims, p, ctx.out_hw);
        Some(Tensor::from_parts(
            Shape::new(ctx.input_dims).expect("cached dims"),
            dx,
        ))
    } else {
        None
    };
    Ok((
        d_x,
        Tensor::from_parts(p.weight.shape().clone(), d_weight),
        Tensor::from_parts(p.bias.shape().clone(), d_bias),
    ))
}

/// Convolution layer: parameters, gradient accumulators and forward cache.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Real> {
    pub params: ConvParams<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    /// False for the first layer of a network, whose input needs no gradient.
    pub propagate_input_grad: bool,
    ctx: Option<ConvContext<T>>,
}

impl<T: Real> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = [out_ch, in_ch, kernel, kernel];
        let weight = init.sample(&dims, in_ch * kernel * kernel, rng)?;
        let bias = Tensor::zeros(&[out_ch])?;
        Ok(Self::from_params(ConvParams::new(
            weight, bias, stride, padding,
        )?))
    }

    pub fn from_params(params: ConvParams<T>) -> Self {
        Conv2d {
            grad_weight: Tensor::from_parts(
                params.weight.shape().clone(),
                vec![T::zero(); params.weight.len()],
            ),
            grad_bias: Tensor::from_parts(
                params.bias.shape().clone(),
                vec![T::zero(); params.bias.len()],
            ),
            params,
            propagate_input_grad: true,
            ctx: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        if record {
            let (y, ctx) = conv2d_forward(x, &self.params)?;
            self.ctx = Some(ctx);
            Ok(y)
        } else {
            let dims = input_dims(x, &self.params)?;
            let out_hw = self.params.output_hw(dims[2], dims[3])?;
            let cols = im2col(x.data(), dims, &self.params, out_hw);
            Ok(conv_apply(&cols, dims[0], &self.params, out_hw))
        }
    }

    pub fn backward(
        &mut self,
        d_out: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let ctx = self
            .ctx
            .take()
            .ok_or_else(|| Error::State("conv backward without forward".into()))?;
        let want = need_input_grad || self.propagate_input_grad;
        let (dx, dw, db) = conv2d_backward(&ctx, &self.params, d_out, want)?;
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
            dims: self.params.weight.dims().to_vec(),
            value: self.params.weight.data_mut(),
            grad: self.grad_weight.data_mut(),
        });
        out.push(ParamMut {
            name: format!("{prefix}.bias"),
            kind: ParamKind::Bias,
            dims: self.params.bias.dims().to_vec(),
            value: self.params.bias.data_mut(),
            grad: self.grad_bias.data_mut(),
        });
    }
}
