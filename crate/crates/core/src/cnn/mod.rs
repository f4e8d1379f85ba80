//! Small convolutional classifier: forward pass, exact gradients, SGD with
//! momentum, transfer initialization and a compact binary model format.
//!
//! Activations are stored channel-major (`c`, `y`, `x`); [`Tensor::from_image`]
//! converts from the interleaved image layout.

mod gemm;
mod io;
mod layers;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imageproc::Image;
use crate::{Error, Result};

pub use io::{MODEL_MAGIC, MODEL_VERSION};
pub use train::{pretrain_auxiliary, train, EpochLog, LabeledSet, TrainConfig, TrainLog};

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub const fn units(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Network input size used by the proposal classifier.
pub const INPUT_SHAPE: Shape = Shape::new(3, 64, 64);

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "tensor data has {} values, shape {shape} needs {}",
                data.len(),
                shape.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor contains non-finite values"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_image(img: &Image) -> Self {
        let (w, h, d) = (img.width(), img.height(), img.depth());
        let mut data = vec![0.0; w * h * d];
        for (i, px) in img.data().chunks_exact(d).enumerate() {
            for (c, v) in px.iter().enumerate() {
                data[c * w * h + i] = *v as f64;
            }
        }
        Self {
            shape: Shape::new(d, h, w),
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize, pad: usize, stride: usize },
    Relu,
    MaxPool { window: usize, stride: usize },
    FullyConnected { units: usize },
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Convolution filters and biases.
    Conv,
    /// Hidden fully connected layers.
    FullyConnected,
    /// The final fully connected layer producing class logits.
    Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub group: Option<ParamGroup>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

/// Default proposal-classifier layout for `classes` outputs.
pub fn default_architecture(classes: usize) -> Vec<LayerSpec> {
    let conv = |filters| LayerSpec::Conv {
        filters,
        kernel: 3,
        pad: 1,
        stride: 1,
    };
    let pool = LayerSpec::MaxPool { window: 2, stride: 2 };
    vec![
        conv(16),
        LayerSpec::Relu,
        pool,
        conv(32),
        LayerSpec::Relu,
        pool,
        conv(64),
        LayerSpec::Relu,
        pool,
        LayerSpec::FullyConnected { units: 256 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { units: 64 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { units: classes },
        LayerSpec::Softmax,
    ]
}

fn output_shape(index: usize, spec: &LayerSpec, input: Shape) -> Result<Shape> {
    let shape_err = |detail: String| Error::Shape {
        layer: format!("{index} ({spec:?})"),
        detail,
    };
    match *spec {
        LayerSpec::Conv { filters, kernel, pad, stride } => {
            if filters == 0 || kernel == 0 || stride == 0 {
                return Err(shape_err("filters, kernel and stride must be positive".into()));
            }
            let (h, w) = (input.height + 2 * pad, input.width + 2 * pad);
            if h < kernel || w < kernel {
                return Err(shape_err(format!("kernel {kernel} does not fit padded input {h}x{w}")));
            }
            Ok(Shape::new(filters, (h - kernel) / stride + 1, (w - kernel) / stride + 1))
        }
        LayerSpec::MaxPool { window, stride } => {
            if window == 0 || stride == 0 {
                return Err(shape_err("window and stride must be positive".into()));
            }
            if input.height < window || input.width < window {
                return Err(shape_err(format!("pool window {window} larger than input {}x{}", input.height, input.width)));
            }
            Ok(Shape::new(input.channels, (input.height - window) / stride + 1, (input.width - window) / stride + 1))
        }
        LayerSpec::FullyConnected { units } => {
            if units == 0 {
                return Err(shape_err("units must be positive".into()));
            }
            Ok(Shape::units(units))
        }
        LayerSpec::Relu | LayerSpec::Softmax => Ok(input),
    }
}

impl CnnModel {
    /// Builds a zero-initialized model, checking shape consistency end to end.
    pub fn new(input: Shape, specs: &[LayerSpec]) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::Shape {
                layer: "input".into(),
                detail: "empty input shape".into(),
            });
        }
        match specs.last() {
            Some(LayerSpec::Softmax) => {}
            _ => {
                return Err(Error::Shape {
                    layer: "output".into(),
                    detail: "last layer must be softmax".into(),
                })
            }
        }
        let last_fc = specs
            .iter()
            .rposition(|s| matches!(s, LayerSpec::FullyConnected { .. }))
            .ok_or_else(|| Error::Shape {
                layer: "output".into(),
                detail: "model needs a fully connected classification layer".into(),
            })?;
        if last_fc + 2 != specs.len() {
            return Err(Error::Shape {
                layer: format!("{last_fc}"),
                detail: "classification layer must feed the softmax directly".into(),
            });
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for (i, spec) in specs.iter().enumerate() {
            if matches!(spec, LayerSpec::Softmax) && i + 1 != specs.len() {
                return Err(Error::Shape {
                    layer: format!("{i} ({spec:?})"),
                    detail: "softmax is only allowed as the last layer".into(),
                });
            }
            let out = output_shape(i, spec, shape)?;
            let (group, nw, nb) = match *spec {
                LayerSpec::Conv { filters, kernel, .. } => (Some(ParamGroup::Conv), filters * shape.channels * kernel * kernel, filters),
                LayerSpec::FullyConnected { units } => {
                    let g = if i == last_fc { ParamGroup::Classifier } else { ParamGroup::FullyConnected };
                    (Some(g), units * shape.len(), units)
                }
                _ => (None, 0, 0),
            };
            layers.push(Layer {
                spec: *spec,
                input: shape,
                output: out,
                group,
                weights: vec![0.0; nw],
                bias: vec![0.0; nb],
            });
            shape = out;
        }
        Ok(Self { input, layers })
    }

    /// He-normal weights, zero biases.
    pub fn init_he(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = match layer.spec {
                LayerSpec::Conv { kernel, .. } => layer.input.channels * kernel * kernel,
                LayerSpec::FullyConnected { .. } => layer.input.len(),
                _ => continue,
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
            layer.bias.fill(0.0);
        }
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.output.len()).unwrap_or(0)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameter blocks in a fixed order: each parametrized layer's weights,
    /// then its biases.
    pub fn parameters(&self) -> Vec<(ParamGroup, &[f64])> {
        let mut out = Vec::new();
        for l in &self.layers {
            if let Some(g) = l.group {
                out.push((g, l.weights.as_slice()));
                out.push((g, l.bias.as_slice()));
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Some(g) = l.group {
                out.push((g, l.weights.as_mut_slice()));
                out.push((g, l.bias.as_mut_slice()));
            }
        }
        out
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape != self.input || input.data.len() != self.input.len() {
            return Err(Error::Shape {
                layer: "input".into(),
                detail: format!("expected {}, got {}", self.input, input.shape),
            });
        }
        Ok(())
    }

    /// Class probabilities for one input.
    pub fn forward(&self, input: &Tensor) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut act = input.data.clone();
        for layer in &self.layers {
            act = layers::forward(layer, &act);
        }
        Ok(act)
    }

    /// Loss and exact gradients of the cross-entropy loss for one labelled input.
    pub fn backward(&self, input: &Tensor, label: usize) -> Result<(f64, Gradients)> {
        self.check_input(input)?;
        if label >= self.num_classes() {
            return Err(Error::invalid(format!("label {label} out of range for {} classes", self.num_classes())));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.data.clone());
        for layer in &self.layers {
            let next = layers::forward(layer, acts.last().expect("input pushed"));
            acts.push(next);
        }
        let probs = acts.last().expect("softmax output");
        let loss = cross_entropy(probs, label);
        let mut delta: Vec<f64> = probs.clone();
        delta[label] -= 1.0;
        let logits = delta.clone();

        let mut blocks: Vec<(ParamGroup, Vec<f64>)> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if matches!(layer.spec, LayerSpec::Softmax) {
                continue;
            }
            let (d_in, grads) = layers::backward(layer, &acts[i], &acts[i + 1], &delta, i > 0);
            if let (Some(g), Some((dw, db))) = (layer.group, grads) {
                blocks.push((g, db));
                blocks.push((g, dw));
            }
            delta = d_in;
        }
        blocks.reverse();
        Ok((loss, Gradients { blocks, logits }))
    }
}

/// Gradients laid out like [`CnnModel::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<(ParamGroup, Vec<f64>)>,
    /// Gradient of the loss with respect to the pre-softmax logits.
    pub logits: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Binary cross entropy of a two-class probability vector; `pred[1]` is the
/// positive-class probability.
pub fn bce_loss(pred: &[f64], label: usize) -> f64 {
    let p = pred[1].clamp(PROB_EPS, 1.0 - PROB_EPS);
    let y = label as f64;
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}

/// Multi-class cross entropy; equals [`bce_loss`] for two classes.
pub fn cross_entropy(pred: &[f64], label: usize) -> f64 {
    -pred[label].clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

/// Copies the convolutional stage of `pretrained` and draws every fully
/// connected and classification parameter from N(0, `init_std`²). The
/// classification layer gets `target_classes` outputs.
pub fn transfer_init(pretrained: &CnnModel, target_classes: usize, init_std: f64, seed: u64) -> Result<CnnModel> {
    if target_classes < 2 {
        return Err(Error::invalid("transfer target needs at least two classes"));
    }
    if !(init_std > 0.0 && init_std.is_finite()) {
        return Err(Error::invalid("init std must be positive"));
    }
    let first_fc = pretrained
        .layers
        .iter()
        .position(|l| matches!(l.spec, LayerSpec::FullyConnected { .. }))
        .ok_or_else(|| Error::Shape {
            layer: "classifier".into(),
            detail: "pretrained model has no fully connected stage".into(),
        })?;
    if !pretrained.layers[..first_fc].iter().any(|l| l.group == Some(ParamGroup::Conv)) {
        return Err(Error::Shape {
            layer: "conv".into(),
            detail: "pretrained model has no convolutional stage".into(),
        });
    }
    let mut specs: Vec<LayerSpec> = pretrained.layers.iter().map(|l| l.spec).collect();
    let n = specs.len();
    specs[n - 2] = LayerSpec::FullyConnected { units: target_classes };
    let mut model = CnnModel::new(pretrained.input, &specs)?;
    for (dst, src) in model.layers[..first_fc].iter_mut().zip(&pretrained.layers[..first_fc]) {
        dst.weights.clone_from(&src.weights);
        dst.bias.clone_from(&src.bias);
    }
    let normal = Normal::new(0.0, init_std).expect("validated std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut model.layers[first_fc..] {
        for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *v = normal.sample(&mut rng);
        }
    }
    Ok(model)
}

/// Pedestrian probability (class 1) for each crop, in input order.
pub fn classify_proposals(model: &CnnModel, crops: &[Tensor]) -> Result<Vec<f64>> {
    crops.iter().map(|c| model.forward(c).map(|p| p[1])).collect()
}
