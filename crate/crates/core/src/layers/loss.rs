//! Mean-reduced softmax cross-entropy with max-subtraction.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct XentContext {
    probs: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
}

pub fn softmax_xent_forward<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, XentContext)> {
    let (n, k) = match *logits.dims() {
        [n, k] => (n, k),
        _ => {
            return Err(Error::contract(format!(
                "logits must be [N, K], got {:?}",
                logits.dims()
            )))
        }
    };
    if labels.len() != n {
        return Err(Error::contract(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::contract(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut loss = 0.0;
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
        let mut z = 0.0;
        let start = probs.len();
        for v in row {
            let e = (v.f64() - max).exp();
            z += e;
            probs.push(e);
        }
        for p in &mut probs[start..] {
            *p /= z;
        }
        // -log softmax = log z - (x_label - max)
        loss += z.ln() - (row[label].f64() - max);
    }
    Ok((
        loss / n as f64,
        XentContext {
            probs,
            labels: labels.to_vec(),
            classes: k,
        },
    ))
}

/// `(softmax - one_hot) / N`
pub fn softmax_xent_backward<T: Real>(ctx: &XentContext) -> Tensor<T> {
    let n = ctx.labels.len();
    let k = ctx.classes;
    let mut d = Vec::with_capacity(n * k);
    for (row, &label) in ctx.probs.chunks(k).zip(&ctx.labels) {
        for (j, &p) in row.iter().enumerate() {
            let g = if j == label { p - 1.0 } else { p };
            d.push(T::of(g / n as f64));
        }
    }
    Tensor::from_parts(Shape::new([n, k]).expect("valid"), d)
}

#[derive(Debug, Clone, Default)]
pub struct SoftmaxCrossEntropy {
    ctx: Option<XentContext>,
}

impl SoftmaxCrossEntropy {
    pub fn forward<T: Real>(&mut self, logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        let (loss, ctx) = softmax_xent_forward(logits, labels)?;
        self.ctx = Some(ctx);
        Ok(loss)
    }

    pub fn backward<T: Real>(&mut self) -> Result<Tensor<T>> {
        let ctx = self
            .ctx
            .take()
            .ok_or_else(|| Error::State("loss backward without forward".into()))?;
        Ok(softmax_xent_backward(&ctx))
    }

    pub fn clear_context(&mut self) {
        self.ctx = None;
    }
}
