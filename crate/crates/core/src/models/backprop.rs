use super::{ClassifierModel, ConvBlock, DenseBlock, Layer, ModelError};
use crate::numerics::{dot, softmax_cross_entropy, Tensor3};

/// Gradient of one parameterized layer, laid out like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrad {
    fn zeros_like(w: &[f64], b: &[f64]) -> Self {
        Self {
            weights: vec![0.0; w.len()],
            bias: vec![0.0; b.len()],
        }
    }

    fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|g| *g *= s);
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().chain(&self.bias).map(|g| g * g).sum()
    }
}

/// Per-layer gradients indexed by stack position; frozen and
/// parameter-free layers hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Option<ParamGrad>>,
}

impl Gradients {
    pub fn zeros(model: &ClassifierModel) -> Self {
        Self {
            blocks: model
                .layers
                .iter()
                .map(|s| match (s.frozen, s.layer.params()) {
                    (false, Some((w, b))) => Some(ParamGrad::zeros_like(w, b)),
                    _ => None,
                })
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().flatten().map(ParamGrad::norm_sq).sum::<f64>().sqrt()
    }

    fn scale(&mut self, s: f64) {
        self.blocks.iter_mut().flatten().for_each(|g| g.scale(s));
    }
}

/// Cached activations of one forward pass, possibly starting part-way
/// through the stack.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Stack index of the first layer evaluated.
    pub start: usize,
    /// `acts[0]` is the input to layer `start`; `acts[j + 1]` is the output of
    /// layer `start + j`.
    pub acts: Vec<Vec<f64>>,
    /// Winning input index per pooled element, for pool layers.
    pub argmax: Vec<Vec<usize>>,
    /// (height, width, channels) entering each layer, plus the final output shape.
    pub shapes: Vec<(usize, usize, usize)>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn conv_forward(input: &[f64], (h, w, c): (usize, usize, usize), b: &ConvBlock) -> Vec<f64> {
    let k = b.kernel_size;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let pl = b.patch_len();
    let mut out = vec![0.0; oh * ow * b.out_channels];
    let mut patch = vec![0.0; pl];
    for r in 0..oh {
        for col in 0..ow {
            gather_patch(input, w, c, k, r, col, &mut patch);
            let base = (r * ow + col) * b.out_channels;
            for (o, wk) in b.weights.chunks_exact(pl).enumerate() {
                out[base + o] = b.activation.apply(dot(wk, &patch) + b.bias[o]);
            }
        }
    }
    out
}

#[inline]
fn gather_patch(input: &[f64], w: usize, c: usize, k: usize, r: usize, col: usize, out: &mut [f64]) {
    let run = k * c;
    for dr in 0..k {
        let start = ((r + dr) * w + col) * c;
        out[dr * run..(dr + 1) * run].copy_from_slice(&input[start..start + run]);
    }
}

#[inline]
fn scatter_patch(grad: &mut [f64], w: usize, c: usize, k: usize, r: usize, col: usize, patch: &[f64]) {
    let run = k * c;
    for dr in 0..k {
        let start = ((r + dr) * w + col) * c;
        for (g, p) in grad[start..start + run].iter_mut().zip(&patch[dr * run..(dr + 1) * run]) {
            *g += p;
        }
    }
}

fn pool_forward(input: &[f64], (h, w, c): (usize, usize, usize)) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow * c];
    let mut arg = vec![0; oh * ow * c];
    for r in 0..oh {
        for col in 0..ow {
            for ch in 0..c {
                let mut best_i = ((2 * r) * w + 2 * col) * c + ch;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ((2 * r + dr) * w + 2 * col + dc) * c + ch;
                    if input[i] > input[best_i] {
                        best_i = i;
                    }
                }
                let o = (r * ow + col) * c + ch;
                out[o] = input[best_i];
                arg[o] = best_i;
            }
        }
    }
    (out, arg)
}

fn dense_forward_block(input: &[f64], d: &DenseBlock) -> Vec<f64> {
    d.weights
        .chunks_exact(d.n_in)
        .zip(&d.bias)
        .map(|(row, b)| d.activation.apply(dot(row, input) + b))
        .collect()
}

impl ClassifierModel {
    fn check_input(&self, x: &Tensor3) -> Result<(), ModelError> {
        if x.shape() != self.input_shape {
            return Err(ModelError::InputShape {
                expected: self.input_shape,
                actual: x.shape(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate activation.
    pub fn forward_trace(&self, x: &Tensor3) -> Result<Trace, ModelError> {
        self.check_input(x)?;
        Ok(self.forward_from(0, x.data().to_vec(), self.input_shape))
    }

    /// Runs layers `start..` on `input`, which must have the shape entering
    /// layer `start`.
    pub fn forward_from(&self, start: usize, input: Vec<f64>, shape: (usize, usize, usize)) -> Trace {
        let mut acts = vec![input];
        let mut argmax = Vec::with_capacity(self.layers.len() - start);
        let mut shapes = vec![shape];
        for slot in &self.layers[start..] {
            let shape = *shapes.last().unwrap();
            let input = acts.last().unwrap();
            let (out, arg, next) = match &slot.layer {
                Layer::Conv(b) => {
                    let k = b.kernel_size;
                    let next = (shape.0 - k + 1, shape.1 - k + 1, b.out_channels);
                    (conv_forward(input, shape, b), Vec::new(), next)
                }
                Layer::MaxPool2 => {
                    let (o, a) = pool_forward(input, shape);
                    (o, a, (shape.0 / 2, shape.1 / 2, shape.2))
                }
                Layer::Dense(d) | Layer::Output(d) => (dense_forward_block(input, d), Vec::new(), (1, 1, d.n_out)),
            };
            acts.push(out);
            argmax.push(arg);
            shapes.push(next);
        }
        Trace {
            start,
            acts,
            argmax,
            shapes,
        }
    }

    /// Output of layers `..end` for one image, with its shape.
    pub fn prefix_features(&self, x: &Tensor3, end: usize) -> Result<(Vec<f64>, (usize, usize, usize)), ModelError> {
        self.check_input(x)?;
        let mut t = self.forward_from(0, x.data().to_vec(), self.input_shape);
        let shape = t.shapes[end];
        Ok((t.acts.swap_remove(end), shape))
    }

    /// Logits for one image.
    pub fn logits(&self, x: &Tensor3) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward_trace(x)?.acts.pop().unwrap_or_default())
    }

    /// Mean cross-entropy of a batch.
    pub fn batch_loss(&self, batch: &[(&Tensor3, usize)]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (x, y) in batch {
            let (loss, _) = softmax_cross_entropy(&self.logits(x)?, *y)?;
            total += loss;
        }
        Ok(total / batch.len() as f64)
    }

    /// Lowest stack index whose parameters receive gradient; nothing below
    /// it needs an input gradient.
    pub fn lowest_trainable(&self) -> Option<usize> {
        self.layers.iter().position(|s| !s.frozen && s.layer.is_parameterized())
    }

    /// Adds one sample's loss gradient into `grads`; returns (loss, predicted class).
    pub fn accumulate_gradients(
        &self,
        x: &Tensor3,
        label: usize,
        grads: &mut Gradients,
    ) -> Result<(f64, usize), ModelError> {
        self.check_input(x)?;
        self.accumulate_gradients_from(0, x.data().to_vec(), self.input_shape, label, grads)
    }

    /// As [`Self::accumulate_gradients`], starting from the input of layer
    /// `start`; every parameterized layer below `start` must be frozen.
    pub fn accumulate_gradients_from(
        &self,
        start: usize,
        input: Vec<f64>,
        shape: (usize, usize, usize),
        label: usize,
        grads: &mut Gradients,
    ) -> Result<(f64, usize), ModelError> {
        let trace = self.forward_from(start, input, shape);
        let (loss, probs) = softmax_cross_entropy(trace.logits(), label)?;
        let predicted = argmax_first(&probs);
        let Some(lowest) = self.lowest_trainable() else {
            return Ok((loss, predicted));
        };
        if lowest < start {
            return Err(ModelError::Invalid(format!(
                "layer {lowest} is trainable but the pass starts at layer {start}"
            )));
        }
        let mut delta = probs;
        delta[label] -= 1.0;
        for i in (lowest..self.layers.len()).rev() {
            let j = i - start;
            let slot = &self.layers[i];
            let input = &trace.acts[j];
            let output = &trace.acts[j + 1];
            let need_input = i > lowest;
            let grad = grads.blocks[i].as_mut();
            delta = match &slot.layer {
                Layer::Dense(d) | Layer::Output(d) => dense_backward(d, input, output, &delta, grad, need_input),
                Layer::Conv(b) => conv_backward(b, input, trace.shapes[j], output, &delta, grad, need_input),
                Layer::MaxPool2 => {
                    let mut g = vec![0.0; input.len()];
                    for (d, &src) in delta.iter().zip(&trace.argmax[j]) {
                        g[src] += d;
                    }
                    g
                }
            };
        }
        Ok((loss, predicted))
    }

    /// Exact gradients of the mean batch loss for every unfrozen parameter.
    pub fn backward_gradients(&self, batch: &[(&Tensor3, usize)]) -> Result<(f64, Gradients), ModelError> {
        let mut grads = Gradients::zeros(self);
        let mut loss = 0.0;
        for (x, y) in batch {
            loss += self.accumulate_gradients(x, *y, &mut grads)?.0;
        }
        let n = batch.len().max(1) as f64;
        grads.scale(1.0 / n);
        Ok((loss / n, grads))
    }
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn dense_backward(
    d: &DenseBlock,
    input: &[f64],
    output: &[f64],
    delta: &[f64],
    grad: Option<&mut ParamGrad>,
    need_input: bool,
) -> Vec<f64> {
    let dz: Vec<f64> = delta
        .iter()
        .zip(output)
        .map(|(g, y)| g * d.activation.derivative_from_output(*y))
        .collect();
    if let Some(g) = grad {
        for (o, &dzo) in dz.iter().enumerate() {
            if dzo == 0.0 {
                continue;
            }
            g.bias[o] += dzo;
            for (gw, x) in g.weights[o * d.n_in..(o + 1) * d.n_in].iter_mut().zip(input) {
                *gw += dzo * x;
            }
        }
    }
    if !need_input {
        return Vec::new();
    }
    let mut dx = vec![0.0; d.n_in];
    for (o, &dzo) in dz.iter().enumerate() {
        if dzo == 0.0 {
            continue;
        }
        for (gx, w) in dx.iter_mut().zip(&d.weights[o * d.n_in..(o + 1) * d.n_in]) {
            *gx += dzo * w;
        }
    }
    dx
}

fn conv_backward(
    b: &ConvBlock,
    input: &[f64],
    (h, w, c): (usize, usize, usize),
    output: &[f64],
    delta: &[f64],
    mut grad: Option<&mut ParamGrad>,
    need_input: bool,
) -> Vec<f64> {
    let k = b.kernel_size;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let pl = b.patch_len();
    let n = b.out_channels;
    let mut patch = vec![0.0; pl];
    let mut patch_grad = vec![0.0; pl];
    let mut dx = if need_input { vec![0.0; input.len()] } else { Vec::new() };
    for r in 0..oh {
        for col in 0..ow {
            let base = (r * ow + col) * n;
            if grad.is_some() {
                gather_patch(input, w, c, k, r, col, &mut patch);
            }
            if need_input {
                patch_grad.iter_mut().for_each(|g| *g = 0.0);
            }
            for o in 0..n {
                let dz = delta[base + o] * b.activation.derivative_from_output(output[base + o]);
                if dz == 0.0 {
                    continue;
                }
                if let Some(g) = grad.as_deref_mut() {
                    g.bias[o] += dz;
                    for (gw, x) in g.weights[o * pl..(o + 1) * pl].iter_mut().zip(&patch) {
                        *gw += dz * x;
                    }
                }
                if need_input {
                    for (gp, wv) in patch_grad.iter_mut().zip(&b.weights[o * pl..(o + 1) * pl]) {
                        *gp += dz * wv;
                    }
                }
            }
            if need_input {
                scatter_patch(&mut dx, w, c, k, r, col, &patch_grad);
            }
        }
    }
    dx
}
