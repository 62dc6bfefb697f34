//! Sequential networks and the MNIST-Conv reference architecture.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activations::{AReLUState, ActivationKind, ActivationLayer, ActivationParams, Mode};
use crate::error::{Error, Result};
use crate::layers::{Conv2d, Flatten, Init, Layer, Linear, MaxPool2d, SoftmaxCrossEntropy};
use crate::optim::zero_grads;
use crate::param::ParamMut;
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ARLU";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Description of an MNIST-Conv network: three `conv3x3(pad 1) -> maxpool(2,2)
/// -> activation` blocks, then `flatten -> linear -> softmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistConvSpec {
    pub activation: ActivationKind,
    pub widths: [usize; 3],
    pub in_channels: usize,
    pub input_hw: (usize, usize),
    pub classes: usize,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub init: Init,
}

impl MnistConvSpec {
    pub fn new(activation: ActivationKind) -> Self {
        MnistConvSpec {
            activation,
            ..Default::default()
        }
    }

    /// Spatial extents after each conv/pool block.
    pub fn spatial_trace(&self) -> Result<Vec<(usize, usize)>> {
        let mut hw = self.input_hw;
        let mut trace = vec![hw];
        for block in 0..3 {
            // 3x3 conv with padding 1 preserves the extent; pool(2, 2) floors
            if hw.0 < 2 || hw.1 < 2 {
                return Err(Error::Shape {
                    dims: vec![self.in_channels, self.input_hw.0, self.input_hw.1],
                    reason: format!(
                        "spatial extent {hw:?} too small for pooling in block {}",
                        block + 1
                    ),
                });
            }
            hw = (hw.0 / 2, hw.1 / 2);
            trace.push(hw);
        }
        Ok(trace)
    }

    pub fn flat_features(&self) -> Result<usize> {
        let (h, w) = *self.spatial_trace()?.last().expect("non-empty trace");
        Ok(self.widths[2] * h * w)
    }
}

impl Default for MnistConvSpec {
    fn default() -> Self {
        MnistConvSpec {
            activation: ActivationKind::AReLU,
            widths: [32, 64, 128],
            in_channels: 1,
            input_hw: (28, 28),
            classes: 10,
            alpha_init: AReLUState::<f32>::DEFAULT_ALPHA,
            beta_init: AReLUState::<f32>::DEFAULT_BETA,
            init: Init::KaimingUniform,
        }
    }
}

/// Ordered layers with a softmax cross-entropy head.
#[derive(Debug, Clone)]
pub struct SequentialModel<T: Real> {
    layers: Vec<Layer<T>>,
    names: Vec<String>,
    loss: SoftmaxCrossEntropy,
    /// Per-sample input dims, e.g. `[1, 28, 28]`.
    input_dims: Vec<usize>,
    classes: usize,
    pending_backward: bool,
}

pub fn build_mnist_conv<T: Real>(spec: &MnistConvSpec, seed: u64) -> Result<SequentialModel<T>> {
    if spec.widths.contains(&0) || spec.in_channels == 0 || spec.classes < 2 {
        return Err(Error::config(format!("invalid MNIST-Conv spec {spec:?}")));
    }
    if !(spec.alpha_init.is_finite() && spec.beta_init.is_finite()) {
        return Err(Error::config("alpha/beta initial values must be finite"));
    }
    let flat = spec.flat_features()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SequentialModel::new(
        vec![spec.in_channels, spec.input_hw.0, spec.input_hw.1],
        spec.classes,
    );
    let mut in_ch = spec.in_channels;
    for (i, &out_ch) in spec.widths.iter().enumerate() {
        let b = i + 1;
        let mut conv = Conv2d::new(in_ch, out_ch, 3, 1, 1, spec.init, &mut rng)?;
        conv.propagate_input_grad = i > 0;
        model.push(format!("conv{b}"), Layer::Conv(conv));
        model.push(format!("pool{b}"), Layer::MaxPool(MaxPool2d::new(2, 2)));
        let act_seed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(b as u64);
        model.push(
            format!("act{b}"),
            Layer::Activation(ActivationLayer::new(
                spec.activation,
                spec.alpha_init,
                spec.beta_init,
                act_seed,
            )),
        );
        in_ch = out_ch;
    }
    model.push("flatten".into(), Layer::Flatten(Flatten::default()));
    model.push(
        "fc".into(),
        Layer::Linear(Linear::new(flat, spec.classes, spec.init, &mut rng)?),
    );
    Ok(model)
}

impl<T: Real> SequentialModel<T> {
    pub fn new(input_dims: Vec<usize>, classes: usize) -> Self {
        SequentialModel {
            layers: Vec::new(),
            names: Vec::new(),
            loss: SoftmaxCrossEntropy::default(),
            input_dims,
            classes,
            pending_backward: false,
        }
    }

    pub fn push(&mut self, name: String, layer: Layer<T>) {
        self.names.push(name);
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.dims().len() != self.input_dims.len() + 1 || x.dims()[1..] != self.input_dims[..] {
            return Err(Error::contract(format!(
                "model expects [N, {:?}] input, got {:?}",
                self.input_dims,
                x.dims()
            )));
        }
        Ok(())
    }

    /// Runs every layer and returns logits. With `record` each layer keeps
    /// what its backward needs.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, record: bool) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, record)?;
        }
        Ok(h)
    }

    /// Training-mode forward plus mean cross-entropy; caches contexts.
    pub fn forward_loss(&mut self, x: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
        let logits = self.forward(x, Mode::Train, true)?;
        let loss = self.loss.forward(&logits, labels)?;
        self.pending_backward = true;
        Ok((loss, logits))
    }

    /// Accumulates gradients of the last `forward_loss` into every parameter.
    pub fn backward(&mut self) -> Result<()> {
        self.backward_impl(false).map(|_| ())
    }

    /// Like [`backward`](Self::backward) but also returns the loss gradient
    /// with respect to the model input.
    pub fn backward_with_input_grad(&mut self) -> Result<Tensor<T>> {
        self.backward_impl(true)?
            .ok_or_else(|| Error::State("input gradient was not propagated".into()))
    }

    fn backward_impl(&mut self, want_input: bool) -> Result<Option<Tensor<T>>> {
        if !self.pending_backward {
            return Err(Error::State(
                "backward called without a preceding forward_loss".into(),
            ));
        }
        self.pending_backward = false;
        let mut grad = Some(self.loss.backward::<T>()?);
        for layer in self.layers.iter_mut().rev() {
            let g = grad
                .take()
                .ok_or_else(|| Error::State("gradient chain interrupted".into()))?;
            grad = layer.backward(&g, want_input)?;
        }
        Ok(grad)
    }

    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.forward(x, Mode::Eval, false)?;
        Ok(argmax_rows(&logits))
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for (layer, name) in self.layers.iter_mut().zip(&self.names) {
            layer.params_mut(name, &mut out);
        }
        out
    }

    pub fn zero_grads(&mut self) {
        zero_grads(&mut self.params_mut());
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }

    pub fn activation_param_count(&mut self) -> usize {
        self.params_mut()
            .iter()
            .filter(|p| p.kind.is_activation())
            .map(|p| p.value.len())
            .sum()
    }

    /// `(alpha, beta)` of every AReLU layer, in network order.
    pub fn arelu_params(&self) -> Vec<(f64, f64)> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Activation(a) => match a.params() {
                    ActivationParams::AReLU(s) => Some((s.alpha.f64(), s.beta.f64())),
                    _ => None,
                },
                _ => None,
            })
            .collect()
    }

    pub fn clear_contexts(&mut self) {
        for l in &mut self.layers {
            l.clear_context();
        }
        self.loss.clear_context();
        self.pending_backward = false;
    }

    /// Writes every parameter as `(name, shape, f32 LE values)` records.
    pub fn save_checkpoint(&mut self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let params = self.params_mut();
        buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in &params {
            buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            buf.extend_from_slice(p.name.as_bytes());
            buf.extend_from_slice(&(p.dims.len() as u32).to_le_bytes());
            for &d in &p.dims {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.iter() {
                buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads parameter values into a model of the same architecture.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let records = parse_checkpoint(&bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })?;
        let mut params = self.params_mut();
        if records.len() != params.len() {
            return Err(Error::Consistency(format!(
                "checkpoint has {} tensors, model has {}",
                records.len(),
                params.len()
            )));
        }
        for (p, rec) in params.iter_mut().zip(records) {
            if p.name != rec.name || p.dims != rec.dims {
                return Err(Error::Consistency(format!(
                    "checkpoint record {} {:?} does not match model parameter {} {:?}",
                    rec.name, rec.dims, p.name, p.dims
                )));
            }
            for (dst, &v) in p.value.iter_mut().zip(&rec.values) {
                *dst = T::of(v as f64);
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Record {
    name: String,
    dims: Vec<usize>,
    values: Vec<f32>,
}

fn parse_checkpoint(bytes: &[u8]) -> std::result::Result<Vec<Record>, String> {
    let mut cur = bytes;
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        if cur.len() < n {
            return Err("truncated checkpoint".into());
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err("bad magic, expected 'ARLU'".into());
    }
    let u32_of = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let version = u32_of(take(4)?);
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let count = u32_of(take(4)?) as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32_of(take(4)?) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| "non-UTF-8 name".to_string())?;
        let rank = u32_of(take(4)?) as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32_of(take(4)?) as usize);
        }
        let numel: usize = dims.iter().product();
        let raw = take(numel * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(Record { name, dims, values });
    }
    if !cur.is_empty() {
        return Err(format!("{} trailing bytes", cur.len()));
    }
    Ok(records)
}

/// Row-wise argmax with lowest-index tie-breaking.
pub fn argmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    let k = *logits.dims().last().expect("rank >= 1");
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
