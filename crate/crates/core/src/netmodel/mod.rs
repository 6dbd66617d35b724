//! Feed-forward networks with exact gradients and Hessian-vector products.
//!
//! A network is described by an [`MlpSpec`] and its parameters live in a flat
//! [`ParamVector`]. The canonical layout stores, for each linear layer in
//! order, the weight matrix (row-major, `out x in`), the bias, and for
//! batch-normalized hidden layers the scale `gamma` followed by the shift
//! `beta`. Batch normalization sits between the linear map and the
//! activation.

mod backprop;
mod hvp;

pub(crate) use backprop::grad_with_output;
pub use backprop::{bn_batch_statistics, forward_loss, grad, per_example_grads, ForwardOutput};
pub use hvp::{hessian_operator, hvp_fd, hvp_pearlmutter, HessianOperator, HvpMethod};

use crate::rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in forward or backward pass")]
    NonFinite,
    #[error("per-example gradients need frozen batch-norm statistics")]
    BnBatchStatsUnsupported,
    #[error("pearlmutter hvp does not support batch-norm layers")]
    BnUnsupported,
    #[error("finite-difference hvp needs a non-zero direction")]
    ZeroDirection,
    #[error("layer {0} has no batch normalization")]
    NoBnLayer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// First derivative expressed through the pre-activation `x` and output `y`.
    pub(crate) fn d1(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn d2(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * y * (1.0 - y * y),
            Activation::Relu | Activation::Identity => 0.0,
        }
    }

    fn default_gain(self) -> f64 {
        match self {
            Activation::Relu => std::f64::consts::SQRT_2,
            Activation::Tanh | Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    /// Per-example loss is the plain sum of squared output errors.
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Weights ~ N(0, (gain / sqrt(fan_in))^2). A missing gain picks sqrt(2)
    /// after relu layers and 1 otherwise.
    GaussianScaled {
        #[serde(default)]
        gain: Option<f64>,
    },
    /// Every weight and bias set to the constant; gamma = 1, beta = 0.
    Constant { value: f64 },
}

impl Default for Init {
    fn default() -> Self {
        Init::GaussianScaled { gain: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    /// One entry per hidden layer.
    pub activations: Vec<Activation>,
    /// One entry per hidden layer; empty means no batch norm anywhere.
    #[serde(default)]
    pub batch_norm: Vec<bool>,
    pub loss: LossKind,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub seed: u64,
}

/// Offsets of one linear layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlots {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: usize,
    pub bias: usize,
    /// `(gamma, beta)` offsets when the layer is batch-normalized.
    pub bn: Option<(usize, usize)>,
}

impl MlpSpec {
    /// Uniform-activation convenience constructor without batch norm.
    pub fn new(layer_sizes: &[usize], activation: Activation, loss: LossKind, seed: u64) -> Self {
        let hidden = layer_sizes.len().saturating_sub(2);
        Self {
            layer_sizes: layer_sizes.to_vec(),
            activations: vec![activation; hidden],
            batch_norm: vec![],
            loss,
            init: Init::default(),
            seed,
        }
    }

    pub fn with_batch_norm(mut self) -> Self {
        self.batch_norm = vec![true; self.hidden_layers()];
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidSpec(m.to_string()));
        if self.layer_sizes.len() < 2 {
            return bad("need at least input and output sizes");
        }
        if self.layer_sizes.contains(&0) {
            return bad("layer sizes must be positive");
        }
        let hidden = self.hidden_layers();
        if self.activations.len() != hidden {
            return bad("one activation per hidden layer required");
        }
        if !self.batch_norm.is_empty() && self.batch_norm.len() != hidden {
            return bad("batch_norm must be empty or list one flag per hidden layer");
        }
        if self.loss == LossKind::SoftmaxCrossEntropy && self.output_size() < 2 {
            return bad("softmax cross-entropy needs at least two classes");
        }
        if let Init::GaussianScaled { gain: Some(g) } = self.init {
            if !(g.is_finite() && g >= 0.0) {
                return bad("init gain must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_layers(&self) -> usize {
        self.layer_sizes.len().saturating_sub(2)
    }

    pub fn num_linear(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn has_bn(&self, hidden_layer: usize) -> bool {
        self.batch_norm.get(hidden_layer).copied().unwrap_or(false)
    }

    pub fn any_bn(&self) -> bool {
        self.batch_norm.iter().any(|&b| b)
    }

    pub fn layout(&self) -> Vec<LayerSlots> {
        let mut off = 0;
        let mut out = Vec::with_capacity(self.num_linear());
        for l in 0..self.num_linear() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let weight = off;
            off += fan_in * fan_out;
            let bias = off;
            off += fan_out;
            let bn = if l < self.hidden_layers() && self.has_bn(l) {
                let g = off;
                off += fan_out;
                let b = off;
                off += fan_out;
                Some((g, b))
            } else {
                None
            };
            out.push(LayerSlots {
                fan_in,
                fan_out,
                weight,
                bias,
                bn,
            });
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layout()
            .last()
            .map(|s| match s.bn {
                Some((_, b)) => b + s.fan_out,
                None => s.bias + s.fan_out,
            })
            .unwrap_or(0)
    }

    /// Deterministic initial parameters for this spec's seed.
    pub fn init_params(&self) -> Result<ParamVector, NetError> {
        self.validate()?;
        let mut values = vec![0.0; self.num_params()];
        let mut r = rng::rng(self.seed);
        for (l, slot) in self.layout().iter().enumerate() {
            let w = &mut values[slot.weight..slot.weight + slot.fan_in * slot.fan_out];
            match self.init {
                Init::GaussianScaled { gain } => {
                    let gain = gain.unwrap_or_else(|| {
                        self.activations.get(l).map_or(1.0, |a| a.default_gain())
                    });
                    let sd = gain / (slot.fan_in as f64).sqrt();
                    for x in w.iter_mut() {
                        *x = sd * rng::standard_normal(&mut r);
                    }
                }
                Init::Constant { value } => {
                    w.fill(value);
                    values[slot.bias..slot.bias + slot.fan_out].fill(value);
                }
            }
            if let Some((g, _)) = slot.bn {
                values[g..g + slot.fan_out].fill(1.0);
            }
        }
        Ok(ParamVector(values))
    }
}

/// Flat parameter (or gradient, or direction) vector in canonical layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    /// Row-major `n x width` regression targets.
    Targets {
        values: Vec<f64>,
        width: usize,
    },
}

/// A set of examples: row-major `n x d` inputs plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub dim: usize,
    pub labels: Labels,
}

impl Batch {
    pub fn classification(inputs: Vec<f64>, dim: usize, labels: Vec<usize>) -> Self {
        Self {
            inputs,
            dim,
            labels: Labels::Classes(labels),
        }
    }

    pub fn regression(inputs: Vec<f64>, dim: usize, targets: Vec<f64>, width: usize) -> Self {
        Self {
            inputs,
            dim,
            labels: Labels::Targets {
                values: targets,
                width,
            },
        }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.inputs.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies out the examples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            inputs.extend_from_slice(&self.inputs[i * self.dim..(i + 1) * self.dim]);
        }
        let labels = match &self.labels {
            Labels::Classes(c) => Labels::Classes(idx.iter().map(|&i| c[i]).collect()),
            Labels::Targets { values, width } => {
                let mut v = Vec::with_capacity(idx.len() * width);
                for &i in idx {
                    v.extend_from_slice(&values[i * width..(i + 1) * width]);
                }
                Labels::Targets {
                    values: v,
                    width: *width,
                }
            }
        };
        Batch {
            inputs,
            dim: self.dim,
            labels,
        }
    }

    pub(crate) fn check(&self, spec: &MlpSpec) -> Result<(), NetError> {
        let n = self.len();
        if n == 0 {
            return Err(NetError::Shape("empty batch".into()));
        }
        if self.dim != spec.input_size() || self.inputs.len() != n * self.dim {
            return Err(NetError::Shape(format!(
                "inputs have dim {} but network expects {}",
                self.dim,
                spec.input_size()
            )));
        }
        match &self.labels {
            Labels::Classes(c) => {
                if c.len() != n {
                    return Err(NetError::Shape(
                        "label count differs from example count".into(),
                    ));
                }
                if let Some(&bad) = c.iter().find(|&&c| c >= spec.output_size()) {
                    return Err(NetError::Shape(format!("label {bad} out of range")));
                }
            }
            Labels::Targets { values, width } => {
                if spec.loss == LossKind::SoftmaxCrossEntropy {
                    return Err(NetError::Shape("cross-entropy needs class labels".into()));
                }
                if *width != spec.output_size() || values.len() != n * width {
                    return Err(NetError::Shape(
                        "target width differs from output size".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-feature statistics for one batch-normalized layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// How batch-norm layers normalize: with the current batch's statistics or
/// with frozen per-layer statistics (one entry per BN layer, in order).
#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a> {
    BatchStats,
    Frozen(&'a [BnStats]),
}

/// Exponential moving average of batch-norm statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnRunningStats {
    pub decay: f64,
    pub layers: Vec<BnStats>,
}

impl BnRunningStats {
    pub fn new(decay: f64, initial: Vec<BnStats>) -> Self {
        Self {
            decay,
            layers: initial,
        }
    }

    pub fn update(&mut self, batch: &[BnStats]) {
        let d = self.decay;
        for (run, cur) in self.layers.iter_mut().zip(batch) {
            for (r, c) in run.mean.iter_mut().zip(&cur.mean) {
                *r = d * *r + (1.0 - d) * c;
            }
            for (r, c) in run.var.iter_mut().zip(&cur.var) {
                *r = d * *r + (1.0 - d) * c;
            }
        }
    }

    pub fn mode(&self) -> BnMode<'_> {
        BnMode::Frozen(&self.layers)
    }
}

/// Euclidean norm of the gamma slice of a batch-normalized hidden layer.
pub fn bn_gamma_norm(
    spec: &MlpSpec,
    theta: &ParamVector,
    layer_index: usize,
) -> Result<f64, NetError> {
    let layout = spec.layout();
    let slot = layout
        .get(layer_index)
        .and_then(|s| s.bn.map(|bn| (bn, s.fan_out)))
        .ok_or(NetError::NoBnLayer(layer_index))?;
    let ((g, _), width) = slot;
    Ok(crate::linalg::norm2(&theta.0[g..g + width]))
}
