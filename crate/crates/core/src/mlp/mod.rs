//! Dense feed-forward binary classifier: ReLU hidden layers, sigmoid head.
//!
//! Dropout exists only at training time (inverted scaling), so an [`MlpModel`]
//! is a plain chain of affine maps and element-wise activations. That chain is
//! what the attribution engines walk through: [`MlpModel::forward_trace`]
//! exposes every pre- and post-activation vector, and
//! [`MlpModel::input_gradient`] runs reverse mode down to the inputs.

mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use train::{train_mlp, MlpConfig};

pub const MODEL_FORMAT: &str = "balshap-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative at `z`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Which scalar of the network is explained: the sigmoid output or the
/// pre-sigmoid score of the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputTarget {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::DimensionMismatch {
                expected: in_dim * out_dim,
                got: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::DimensionMismatch {
                expected: out_dim,
                got: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::config("layer parameters must be finite"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        })
    }

    #[inline]
    pub fn weight_row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }

    /// `z = W a + b`, written into `out`.
    #[inline]
    pub(crate) fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, z) in out.iter_mut().enumerate() {
            let row = self.weight_row(o);
            let mut acc = self.bias[o];
            for (w, a) in row.iter().zip(input) {
                acc += w * a;
            }
            *z = acc;
        }
    }

    /// `W^T g`, written into `out`.
    #[inline]
    pub(crate) fn transpose_mul(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            for (acc, w) in out.iter_mut().zip(self.weight_row(o)) {
                *acc += w * go;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    pub config: Option<MlpConfig>,
}

/// Per-layer quantities of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub input: Vec<f64>,
    /// Pre-activation `z` of every layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-activation `a` of every layer; the last entry holds the output.
    pub post: Vec<Vec<f64>>,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    format: String,
    version: u32,
    input_dim: usize,
    layers: Vec<DenseLayer>,
    #[serde(default)]
    training: TrainingSummary,
}

impl MlpModel {
    /// Assembles a network from explicit layers. Dimensions must chain from
    /// the first layer's input to a single output.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers.first().ok_or(Error::Empty("layer list"))?;
        let input_dim = first.in_dim;
        let mut prev = input_dim;
        for l in &layers {
            if l.in_dim != prev {
                return Err(Error::DimensionMismatch {
                    expected: prev,
                    got: l.in_dim,
                });
            }
            prev = l.out_dim;
        }
        if prev != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: prev,
            });
        }
        Ok(Self {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            input_dim,
            layers,
            training: TrainingSummary::default(),
        })
    }

    pub(crate) fn with_training(mut self, training: TrainingSummary) -> Self {
        self.training = training;
        self
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn training(&self) -> &TrainingSummary {
        &self.training
    }

    pub(crate) fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: len,
            });
        }
        Ok(())
    }

    fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim.max(l.in_dim))
            .max()
            .unwrap_or(1)
    }

    /// Network output for one row, without dimension checks.
    pub(crate) fn eval_unchecked(&self, x: &[f64], target: OutputTarget) -> f64 {
        let width = self.max_width();
        let mut a = vec![0.0; width];
        let mut z = vec![0.0; width];
        a[..x.len()].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.affine(&a[..layer.in_dim], &mut z[..layer.out_dim]);
            if li == last && target == OutputTarget::Logit {
                return z[0];
            }
            for (dst, &src) in a[..layer.out_dim].iter_mut().zip(&z[..layer.out_dim]) {
                *dst = layer.activation.apply(src);
            }
        }
        a[0]
    }

    /// Output for `x` under the chosen target.
    pub fn output(&self, x: &[f64], target: OutputTarget) -> Result<f64> {
        self.check_input(x.len())?;
        Ok(self.eval_unchecked(x, target))
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        self.output(x, OutputTarget::Probability)
    }

    /// Row-wise final-layer output (the sigmoid probability for trained models).
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_input(x.cols())?;
        Ok(x
            .iter_rows()
            .map(|r| self.eval_unchecked(r, OutputTarget::Probability))
            .collect())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ActivationTrace> {
        self.check_input(x.len())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = post.last().map(Vec::as_slice).unwrap_or(x);
            let mut z = vec![0.0; layer.out_dim];
            layer.affine(input, &mut z);
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(a);
        }
        let output = post.last().map(|a| a[0]).unwrap_or(0.0);
        Ok(ActivationTrace {
            input: x.to_vec(),
            pre,
            post,
            output,
        })
    }

    /// Gradient of the output probability with respect to the input row.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.input_gradient_for(x, OutputTarget::Probability)
    }

    pub fn input_gradient_for(&self, x: &[f64], target: OutputTarget) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x)?;
        Ok(self.backprop_gradient(&trace, target))
    }

    pub(crate) fn backprop_gradient(&self, trace: &ActivationTrace, target: OutputTarget) -> Vec<f64> {
        let last = self.layers.len() - 1;
        // gradient with respect to the current layer's pre-activation
        let mut g_z: Vec<f64> = match target {
            OutputTarget::Logit => vec![1.0],
            OutputTarget::Probability => vec![self.layers[last].activation.derivative(trace.pre[last][0])],
        };
        for li in (0..=last).rev() {
            let layer = &self.layers[li];
            let mut g_a = vec![0.0; layer.in_dim];
            layer.transpose_mul(&g_z, &mut g_a);
            if li == 0 {
                return g_a;
            }
            let below = &self.layers[li - 1];
            for (g, &z) in g_a.iter_mut().zip(&trace.pre[li - 1]) {
                *g *= below.activation.derivative(z);
            }
            g_z = g_a;
        }
        unreachable!("network has at least one layer")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let model: MlpModel = read_json(path)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::Unsupported(format!(
                "model file format {:?} v{} (expected {MODEL_FORMAT:?} v{MODEL_VERSION})",
                model.format, model.version
            )));
        }
        let training = model.training.clone();
        Ok(MlpModel::from_layers(model.layers)?.with_training(training))
    }
}
