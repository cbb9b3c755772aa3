//! A small 1-D convolutional network engine written directly against flat
//! `f64` buffers: forward and backward passes for conv / max-pool /
//! dropout / dense / softmax layers, cross-entropy loss, Adam updates, and
//! per-channel input standardization.
//!
//! All weights of a network live in one flat parameter vector with a
//! per-layer layout of offsets. Gradients use the same layout, which keeps
//! the optimizer, finite-difference checking, and persistence trivial.
//!
//! Determinism: initialization, dropout masks, and batch order are all
//! driven by explicit seeds, and batch gradients are reduced in sample
//! order, so identical seeds give bitwise-identical training runs.

mod persist;
mod train;

pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model};
pub(crate) use persist::{Reader, Writer};
pub use train::{train, Model, TrainConfig, TrainHistory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::channels::{Segment, N_CHANNELS};
use crate::par;
use crate::{Error, Result};

/// Positions × channels grid, row-major by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    pub len: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(len: usize, channels: usize) -> Tensor2D {
        Tensor2D {
            len,
            channels,
            data: vec![0.0; len * channels],
        }
    }

    pub fn from_data(len: usize, channels: usize, data: Vec<f64>) -> Tensor2D {
        assert_eq!(data.len(), len * channels, "tensor data length mismatch");
        Tensor2D {
            len,
            channels,
            data,
        }
    }

    pub fn get(&self, pos: usize, ch: usize) -> f64 {
        self.data[pos * self.channels + ch]
    }
}

/// One layer of a network. Convolutions apply a Leaky ReLU activation;
/// pooling and convolution both use SAME padding (output length
/// `ceil(input / stride)`).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        kernel_size: usize,
        n_kernels: usize,
        stride: usize,
        leaky_slope: f64,
    },
    MaxPool {
        pool_size: usize,
        stride: usize,
    },
    Dropout {
        p: f64,
    },
    Dense {
        units: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn conv(kernel_size: usize, n_kernels: usize) -> LayerSpec {
        LayerSpec::Conv {
            kernel_size,
            n_kernels,
            stride: 1,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn maxpool(pool_size: usize) -> LayerSpec {
        LayerSpec::MaxPool {
            pool_size,
            stride: 1,
        }
    }
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_DROPOUT_P: f64 = 0.5;

/// Where one layer's parameters sit in the flat vector, and its shapes.
#[derive(Debug, Clone, PartialEq)]
struct LayerLayout {
    weight_off: usize,
    weight_len: usize,
    bias_off: usize,
    bias_len: usize,
    in_len: usize,
    in_ch: usize,
    out_len: usize,
    out_ch: usize,
}

/// SAME-padding output length.
pub fn same_out_len(input_len: usize, stride: usize) -> usize {
    input_len.div_ceil(stride)
}

/// Zeros (or −∞ for pooling) added on the left under SAME padding; the
/// remainder of the padding goes on the right.
pub fn same_pad_left(input_len: usize, window: usize, stride: usize) -> usize {
    let out = same_out_len(input_len, stride);
    let span = (out - 1) * stride + window;
    span.saturating_sub(input_len) / 2
}

/// A feed-forward network: ordered layers plus one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_len: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
    pub seed: u64,
    layouts: Vec<LayerLayout>,
}

fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.len() < 2 {
        return Err(Error::shape(
            "network needs at least dense + softmax layers",
        ));
    }
    match layers[layers.len() - 1] {
        LayerSpec::Softmax => {}
        _ => return Err(Error::shape("last layer must be softmax")),
    }
    match layers[layers.len() - 2] {
        LayerSpec::Dense { .. } => {}
        _ => return Err(Error::shape("second-to-last layer must be dense")),
    }
    for (i, l) in layers.iter().enumerate().take(layers.len() - 2) {
        match l {
            LayerSpec::Dense { .. } | LayerSpec::Softmax => {
                return Err(Error::shape(format!(
                    "dense/softmax allowed only at the end (found at layer {i})"
                )))
            }
            LayerSpec::Conv {
                kernel_size,
                n_kernels,
                stride,
                ..
            } => {
                if *kernel_size == 0 || *n_kernels == 0 || !(1..=2).contains(stride) {
                    return Err(Error::shape(format!("invalid conv layer {i}: {l:?}")));
                }
            }
            LayerSpec::MaxPool { pool_size, stride } => {
                if *pool_size == 0 || !(1..=2).contains(stride) {
                    return Err(Error::shape(format!("invalid pool layer {i}: {l:?}")));
                }
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(p) {
                    return Err(Error::shape(format!("dropout p {p} outside [0, 1)")));
                }
            }
        }
    }
    Ok(())
}

fn build_layouts(
    input_len: usize,
    input_channels: usize,
    layers: &[LayerSpec],
) -> Result<(Vec<LayerLayout>, usize)> {
    let mut layouts = Vec::with_capacity(layers.len());
    let mut len = input_len;
    let mut ch = input_channels;
    let mut off = 0usize;
    for layer in layers {
        let (weight_len, bias_len, out_len, out_ch) = match layer {
            LayerSpec::Conv {
                kernel_size,
                n_kernels,
                stride,
                ..
            } => (
                kernel_size * ch * n_kernels,
                *n_kernels,
                same_out_len(len, *stride),
                *n_kernels,
            ),
            LayerSpec::MaxPool { stride, .. } => (0, 0, same_out_len(len, *stride), ch),
            LayerSpec::Dropout { .. } => (0, 0, len, ch),
            LayerSpec::Dense { units } => (len * ch * units, *units, 1, *units),
            LayerSpec::Softmax => (0, 0, len, ch),
        };
        layouts.push(LayerLayout {
            weight_off: off,
            weight_len,
            bias_off: off + weight_len,
            bias_len,
            in_len: len,
            in_ch: ch,
            out_len,
            out_ch,
        });
        off += weight_len + bias_len;
        len = out_len;
        ch = out_ch;
    }
    Ok((layouts, off))
}

/// Check a layer spec against the structural rules and walk the shapes it
/// produces, without allocating parameters. Returns `(length, channels)`
/// after each layer.
pub fn validate_network_spec(
    input_len: usize,
    input_channels: usize,
    layers: &[LayerSpec],
) -> Result<Vec<(usize, usize)>> {
    validate_layers(layers)?;
    let (layouts, _) = build_layouts(input_len, input_channels, layers)?;
    Ok(layouts.iter().map(|l| (l.out_len, l.out_ch)).collect())
}

impl Network {
    /// Build a network and initialize it: zero biases, weights from a
    /// seeded normal with std `sqrt(2 / fan_in)`.
    pub fn new(
        input_len: usize,
        input_channels: usize,
        layers: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Network> {
        validate_layers(&layers)?;
        let (layouts, n_params) = build_layouts(input_len, input_channels, &layers)?;
        let mut net = Network {
            input_len,
            input_channels,
            layers,
            params: vec![0.0; n_params],
            seed,
            layouts,
        };
        net.init_weights(seed);
        Ok(net)
    }

    fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for (layer, layout) in self.layers.iter().zip(&self.layouts) {
            let fan_in = match layer {
                LayerSpec::Conv { kernel_size, .. } => kernel_size * layout.in_ch,
                LayerSpec::Dense { .. } => layout.in_len * layout.in_ch,
                _ => continue,
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            for i in 0..layout.weight_len {
                self.params[layout.weight_off + i] = normal.sample(&mut rng);
            }
            // Biases stay zero.
        }
    }

    /// Rebuild a network from stored parts (no re-initialization); the
    /// parameter vector must match the layout exactly.
    pub fn from_parts(
        input_len: usize,
        input_channels: usize,
        layers: Vec<LayerSpec>,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Network> {
        validate_layers(&layers)?;
        let (layouts, n_params) = build_layouts(input_len, input_channels, &layers)?;
        if params.len() != n_params {
            return Err(Error::format(format!(
                "parameter vector has {} values; layout needs {n_params}",
                params.len()
            )));
        }
        Ok(Network {
            input_len,
            input_channels,
            layers,
            params,
            seed,
            layouts,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Output shape after every layer, for shape validation and reporting.
    pub fn output_shapes(&self) -> Vec<(usize, usize)> {
        self.layouts.iter().map(|l| (l.out_len, l.out_ch)).collect()
    }

    pub fn n_dropout_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dropout { .. }))
            .count()
    }

    fn check_input(&self, x: &Tensor2D) -> Result<()> {
        if x.len != self.input_len || x.channels != self.input_channels {
            return Err(Error::shape(format!(
                "input {}×{} does not match network input {}×{}",
                x.len, x.channels, self.input_len, self.input_channels
            )));
        }
        Ok(())
    }

    /// Inference forward pass (dropout is the identity).
    pub fn forward(&self, x: &Tensor2D) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let cache = self.forward_cached(x, None, 0);
        Ok(cache.activations.last().unwrap().data.clone())
    }

    /// Forward pass retaining everything the backward pass needs. When a
    /// dropout plan is given, dropout layers multiply by the sample's
    /// precomputed masks; otherwise they are the identity.
    fn forward_cached(
        &self,
        x: &Tensor2D,
        plan: Option<&DropoutPlan>,
        sample: usize,
    ) -> ForwardCache {
        let n = self.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut argmax: Vec<Option<Vec<usize>>> = Vec::with_capacity(n);
        activations.push(x.clone());
        let mut dropout_idx = 0usize;
        for (li, layer) in self.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let layout = &self.layouts[li];
            let (out, arg) = match layer {
                LayerSpec::Conv {
                    kernel_size,
                    n_kernels,
                    stride,
                    leaky_slope,
                } => {
                    let w = &self.params[layout.weight_off..layout.weight_off + layout.weight_len];
                    let b = &self.params[layout.bias_off..layout.bias_off + layout.bias_len];
                    (
                        conv1d_forward(
                            input,
                            w,
                            b,
                            *kernel_size,
                            *n_kernels,
                            *stride,
                            *leaky_slope,
                        ),
                        None,
                    )
                }
                LayerSpec::MaxPool { pool_size, stride } => {
                    let (out, arg) = maxpool1d_forward(input, *pool_size, *stride);
                    (out, Some(arg))
                }
                LayerSpec::Dropout { .. } => {
                    let mut out = input.clone();
                    if let Some(plan) = plan {
                        let mask = &plan.masks[sample][dropout_idx];
                        for (v, m) in out.data.iter_mut().zip(mask) {
                            *v *= m;
                        }
                    }
                    dropout_idx += 1;
                    (out, None)
                }
                LayerSpec::Dense { units } => {
                    let w = &self.params[layout.weight_off..layout.weight_off + layout.weight_len];
                    let b = &self.params[layout.bias_off..layout.bias_off + layout.bias_len];
                    (dense_forward(input, w, b, *units), None)
                }
                LayerSpec::Softmax => (
                    Tensor2D::from_data(input.len, input.channels, softmax(&input.data)),
                    None,
                ),
            };
            activations.push(out);
            argmax.push(arg);
        }
        ForwardCache {
            activations,
            argmax,
        }
    }

    /// Mean loss and mean gradient over a batch. Per-sample passes run in
    /// parallel; the reduction is sequential in sample order.
    pub fn batch_loss_grad(
        &self,
        xs: &[Tensor2D],
        ys: &[usize],
        plan: Option<&DropoutPlan>,
    ) -> (f64, Vec<f64>) {
        assert_eq!(xs.len(), ys.len());
        let per_sample = par::map_range(xs.len(), |i| {
            let cache = self.forward_cached(&xs[i], plan, i);
            let probs = &cache.activations.last().unwrap().data;
            let loss = cross_entropy_loss(probs, ys[i]);
            let grad = self.backward(&cache, ys[i], plan, i);
            (loss, grad)
        });
        let b = xs.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (l, g) in &per_sample {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        for g in &mut grad {
            *g /= b;
        }
        (loss / b, grad)
    }

    /// Mean loss only (used by finite-difference checking).
    pub fn batch_loss(&self, xs: &[Tensor2D], ys: &[usize], plan: Option<&DropoutPlan>) -> f64 {
        let losses = par::map_range(xs.len(), |i| {
            let cache = self.forward_cached(&xs[i], plan, i);
            cross_entropy_loss(&cache.activations.last().unwrap().data, ys[i])
        });
        losses.iter().sum::<f64>() / xs.len() as f64
    }

    /// Gradient of one sample's cross-entropy w.r.t. every parameter.
    fn backward(
        &self,
        cache: &ForwardCache,
        y: usize,
        plan: Option<&DropoutPlan>,
        sample: usize,
    ) -> Vec<f64> {
        let n = self.layers.len();
        debug_assert!(matches!(self.layers[n - 1], LayerSpec::Softmax));
        let mut grad = vec![0.0; self.params.len()];
        let probs = &cache.activations[n].data;
        // Softmax + cross-entropy differentiate jointly to p − onehot(y),
        // so the loop starts below the softmax layer.
        let mut delta: Vec<f64> = probs.clone();
        delta[y] -= 1.0;

        let mut dropout_idx = self.n_dropout_layers();
        for li in (0..n - 1).rev() {
            let layout = &self.layouts[li];
            let input = &cache.activations[li];
            let output = &cache.activations[li + 1];
            delta = match &self.layers[li] {
                LayerSpec::Dense { units } => {
                    let w = &self.params[layout.weight_off..layout.weight_off + layout.weight_len];
                    let gw = &mut grad[layout.weight_off..layout.weight_off + layout.weight_len];
                    let features = layout.in_len * layout.in_ch;
                    let mut next = vec![0.0; features];
                    for f in 0..features {
                        let xf = input.data[f];
                        let row = f * units;
                        let mut acc = 0.0;
                        for j in 0..*units {
                            gw[row + j] += xf * delta[j];
                            acc += w[row + j] * delta[j];
                        }
                        next[f] = acc;
                    }
                    let gb = &mut grad[layout.bias_off..layout.bias_off + layout.bias_len];
                    for j in 0..*units {
                        gb[j] += delta[j];
                    }
                    next
                }
                LayerSpec::Dropout { .. } => {
                    dropout_idx -= 1;
                    if let Some(plan) = plan {
                        let mask = &plan.masks[sample][dropout_idx];
                        delta.iter().zip(mask).map(|(d, m)| d * m).collect()
                    } else {
                        delta
                    }
                }
                LayerSpec::MaxPool { .. } => {
                    let arg = cache.argmax[li].as_ref().expect("pool argmax cached");
                    let mut next = vec![0.0; input.data.len()];
                    for (o, &src) in arg.iter().enumerate() {
                        next[src] += delta[o];
                    }
                    next
                }
                LayerSpec::Conv {
                    kernel_size,
                    n_kernels,
                    stride,
                    leaky_slope,
                } => {
                    let w = &self.params[layout.weight_off..layout.weight_off + layout.weight_len];
                    let c_in = layout.in_ch;
                    let pad_left = same_pad_left(layout.in_len, *kernel_size, *stride) as isize;
                    let mut next = vec![0.0; input.data.len()];
                    {
                        let (gw_all, rest) =
                            grad[layout.weight_off..].split_at_mut(layout.weight_len);
                        let gb = &mut rest[..layout.bias_len];
                        let mut dz = vec![0.0; *n_kernels];
                        for l in 0..layout.out_len {
                            let out_base = l * n_kernels;
                            for (k, dzk) in dz.iter_mut().enumerate() {
                                let out_v = output.data[out_base + k];
                                *dzk = delta[out_base + k]
                                    * if out_v >= 0.0 { 1.0 } else { *leaky_slope };
                                gb[k] += *dzk;
                            }
                            for d in 0..*kernel_size {
                                let p = (l * stride + d) as isize - pad_left;
                                if p < 0 || p >= layout.in_len as isize {
                                    continue;
                                }
                                let p = p as usize;
                                for c in 0..c_in {
                                    let xv = input.data[p * c_in + c];
                                    let wrow = (d * c_in + c) * n_kernels;
                                    let mut acc = 0.0;
                                    for (k, dzk) in dz.iter().enumerate() {
                                        gw_all[wrow + k] += xv * dzk;
                                        acc += w[wrow + k] * dzk;
                                    }
                                    next[p * c_in + c] += acc;
                                }
                            }
                        }
                    }
                    next
                }
                LayerSpec::Softmax => unreachable!("softmax only at the end"),
            };
        }
        grad
    }
}

/// Per-layer forward-pass record for one sample.
struct ForwardCache {
    /// `activations[0]` is the input; `activations[i + 1]` the output of
    /// layer `i`.
    activations: Vec<Tensor2D>,
    argmax: Vec<Option<Vec<usize>>>,
}

/// Convolution with SAME zero padding and Leaky ReLU activation.
/// `w` is laid out `[position][in_channel][kernel]`, kernel fastest.
pub fn conv1d_forward(
    x: &Tensor2D,
    w: &[f64],
    b: &[f64],
    kernel_size: usize,
    n_kernels: usize,
    stride: usize,
    leaky_slope: f64,
) -> Tensor2D {
    let out_len = same_out_len(x.len, stride);
    let pad_left = same_pad_left(x.len, kernel_size, stride) as isize;
    let c_in = x.channels;
    let mut out = Tensor2D::zeros(out_len, n_kernels);
    let mut acc = vec![0.0; n_kernels];
    for l in 0..out_len {
        acc.copy_from_slice(b);
        for d in 0..kernel_size {
            let p = (l * stride + d) as isize - pad_left;
            if p < 0 || p >= x.len as isize {
                continue;
            }
            let p = p as usize;
            for c in 0..c_in {
                let xv = x.data[p * c_in + c];
                let wrow = (d * c_in + c) * n_kernels;
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += xv * w[wrow + k];
                }
            }
        }
        let out_base = l * n_kernels;
        for (k, a) in acc.iter().enumerate() {
            out.data[out_base + k] = if *a >= 0.0 { *a } else { leaky_slope * a };
        }
    }
    out
}

/// Per-channel windowed maximum with SAME padding (−∞ sentinel, never
/// selected). Also returns, per output element, the flat input index that
/// won, for gradient routing.
pub fn maxpool1d_forward(x: &Tensor2D, pool_size: usize, stride: usize) -> (Tensor2D, Vec<usize>) {
    let out_len = same_out_len(x.len, stride);
    let pad_left = same_pad_left(x.len, pool_size, stride) as isize;
    let ch = x.channels;
    let mut out = Tensor2D::zeros(out_len, ch);
    let mut argmax = vec![0usize; out_len * ch];
    for l in 0..out_len {
        for c in 0..ch {
            let mut best = f64::NEG_INFINITY;
            let mut best_idx = usize::MAX;
            let mut first_idx = usize::MAX;
            for d in 0..pool_size {
                let p = (l * stride + d) as isize - pad_left;
                if p < 0 || p >= x.len as isize {
                    continue;
                }
                let idx = p as usize * ch + c;
                if first_idx == usize::MAX {
                    first_idx = idx;
                }
                if x.data[idx] > best {
                    best = x.data[idx];
                    best_idx = idx;
                }
            }
            assert!(
                first_idx != usize::MAX,
                "pool window fell entirely outside the input"
            );
            if best_idx == usize::MAX {
                // Every candidate was NaN or -inf, so no comparison won.
                // Forward the first candidate so non-finite values surface
                // in the loss instead of panicking here.
                best = x.data[first_idx];
                best_idx = first_idx;
            }
            out.data[l * ch + c] = best;
            argmax[l * ch + c] = best_idx;
        }
    }
    (out, argmax)
}

fn dense_forward(x: &Tensor2D, w: &[f64], b: &[f64], units: usize) -> Tensor2D {
    let features = x.data.len();
    let mut logits = b.to_vec();
    for f in 0..features {
        let xf = x.data[f];
        if xf == 0.0 {
            continue;
        }
        let row = f * units;
        for (j, l) in logits.iter_mut().enumerate() {
            *l += xf * w[row + j];
        }
    }
    Tensor2D::from_data(1, units, logits)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// −ln(p_y), floored at p = 1e-12 so impossible-class labels stay finite.
/// A non-finite probability (from overflowed parameters) passes through as
/// NaN instead of being clamped, so callers can detect divergence.
pub fn cross_entropy_loss(probs: &[f64], y: usize) -> f64 {
    let p = probs[y];
    if !p.is_finite() {
        return f64::NAN;
    }
    -p.max(1e-12).ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Precomputed dropout masks for one batch: `masks[sample][dropout_layer]`
/// holds one multiplier per unit, either 0 or 1/(1−p) (inverted dropout).
/// Precomputing keeps parallel per-sample passes deterministic and lets
/// finite differences reuse the exact masks of the analytic pass.
pub struct DropoutPlan {
    masks: Vec<Vec<Vec<f64>>>,
}

impl DropoutPlan {
    pub fn draw(net: &Network, batch: usize, rng: &mut ChaCha20Rng) -> DropoutPlan {
        let sizes: Vec<(usize, f64)> = net
            .layers
            .iter()
            .zip(&net.layouts)
            .filter_map(|(l, layout)| match l {
                LayerSpec::Dropout { p } => Some((layout.in_len * layout.in_ch, *p)),
                _ => None,
            })
            .collect();
        let masks = (0..batch)
            .map(|_| {
                sizes
                    .iter()
                    .map(|&(n, p)| {
                        let keep = 1.0 / (1.0 - p);
                        (0..n)
                            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        DropoutPlan { masks }
    }

    /// All-keep masks (dropout disabled but exercising the plan path).
    pub fn disabled(net: &Network, batch: usize) -> DropoutPlan {
        let sizes: Vec<usize> = net
            .layers
            .iter()
            .zip(&net.layouts)
            .filter_map(|(l, layout)| match l {
                LayerSpec::Dropout { .. } => Some(layout.in_len * layout.in_ch),
                _ => None,
            })
            .collect();
        DropoutPlan {
            masks: (0..batch)
                .map(|_| sizes.iter().map(|&n| vec![1.0; n]).collect())
                .collect(),
        }
    }

    pub fn mask(&self, sample: usize, dropout_layer: usize) -> &[f64] {
        &self.masks[sample][dropout_layer]
    }
}

/// Standalone inverted dropout on a flat buffer: training zeroes units
/// with probability `p` and scales survivors by 1/(1−p); inference is the
/// identity.
pub fn apply_dropout(x: &[f64], p: f64, training: bool, rng: &mut ChaCha20Rng) -> Vec<f64> {
    if !training || p == 0.0 {
        return x.to_vec();
    }
    let keep = 1.0 / (1.0 - p);
    x.iter()
        .map(|v| {
            if rng.random::<f64>() < p {
                0.0
            } else {
                v * keep
            }
        })
        .collect()
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> AdamState {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// One Adam update; the step counter increments before bias correction.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Per-channel standardization parameters fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; N_CHANNELS],
    pub std: [f64; N_CHANNELS],
}

impl Standardizer {
    /// Fit means and stds per channel over the valid (non-padded) rows of
    /// the given segments. Channels with no spread get std 1 so the
    /// transform stays defined.
    pub fn fit(segments: &[Segment]) -> Standardizer {
        let mut sum = [0.0; N_CHANNELS];
        let mut n = 0u64;
        for s in segments {
            for row in 0..s.n_valid {
                for (c, acc) in sum.iter_mut().enumerate() {
                    *acc += s.get(row, c);
                }
            }
            n += s.n_valid as u64;
        }
        let n = (n.max(1)) as f64;
        let mean = sum.map(|s| s / n);
        let mut var = [0.0; N_CHANNELS];
        for s in segments {
            for row in 0..s.n_valid {
                for (c, acc) in var.iter_mut().enumerate() {
                    let d = s.get(row, c) - mean[c];
                    *acc += d * d;
                }
            }
        }
        let std = var.map(|v| {
            let sd = (v / n).sqrt();
            if sd < 1e-9 {
                1.0
            } else {
                sd
            }
        });
        Standardizer { mean, std }
    }

    pub fn identity() -> Standardizer {
        Standardizer {
            mean: [0.0; N_CHANNELS],
            std: [1.0; N_CHANNELS],
        }
    }

    /// Standardize every row of a segment (padding rows included, with the
    /// same parameters) into a network input tensor.
    pub fn transform(&self, segment: &Segment) -> Tensor2D {
        let len = segment.segment_len();
        let mut t = Tensor2D::zeros(len, N_CHANNELS);
        for row in 0..len {
            for c in 0..N_CHANNELS {
                t.data[row * N_CHANNELS + c] = (segment.get(row, c) - self.mean[c]) / self.std[c];
            }
        }
        t
    }
}

/// Testing utility: central finite-difference gradient of the batch loss,
/// reusing the given dropout plan so the analytic and numeric passes see
/// the same function.
pub fn numeric_gradient(
    net: &Network,
    xs: &[Tensor2D],
    ys: &[usize],
    plan: Option<&DropoutPlan>,
    h: f64,
) -> Vec<f64> {
    let mut probe = net.clone();
    let mut grad = vec![0.0; net.params.len()];
    for i in 0..net.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let plus = probe.batch_loss(xs, ys, plan);
        probe.params[i] = orig - h;
        let minus = probe.batch_loss(xs, ys, plan);
        probe.params[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Worst relative disagreement between two gradient vectors. Entries where
/// both sides are below 1e-9 in absolute difference count as exact.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff <= 1e-9 {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
