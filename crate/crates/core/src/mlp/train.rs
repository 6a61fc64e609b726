use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Activation, DenseLayer, MlpModel, TrainingSummary};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    /// Hidden layers (0-based) followed by a dropout layer.
    pub dropout_positions: Vec<usize>,
    /// `[w_minority, w_majority]`.
    pub class_weights: [f64; 2],
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 32, 16, 8],
            dropout_rate: 0.2,
            dropout_positions: vec![0, 1],
            class_weights: [0.92, 0.08],
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs ≥ 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must lie in [0, 1)"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size ≥ 1"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if let Some(p) = self
            .dropout_positions
            .iter()
            .find(|&&p| p >= self.hidden_sizes.len())
        {
            return Err(Error::config(format!(
                "dropout position {p} has no hidden layer"
            )));
        }
        if self.class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("class weights must be positive"));
        }
        Ok(())
    }

    fn sample_weight(&self, label: u8) -> f64 {
        if label == 1 {
            self.class_weights[0]
        } else {
            self.class_weights[1]
        }
    }
}

/// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
fn init_layers(d: usize, cfg: &MlpConfig) -> Vec<DenseLayer> {
    let mut rng = substream(cfg.seed, "mlp/init", 0);
    let mut dims = vec![d];
    dims.extend(&cfg.hidden_sizes);
    dims.push(1);
    dims.windows(2)
        .enumerate()
        .map(|(li, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            let bias = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            let activation = if li + 1 == dims.len() - 1 {
                Activation::Sigmoid
            } else {
                Activation::Relu
            };
            DenseLayer {
                in_dim: fan_in,
                out_dim: fan_out,
                activation,
                weights,
                bias,
            }
        })
        .collect()
}

/// Numerically stable binary cross-entropy on the logit.
#[inline]
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

struct Grads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros(layers: &[DenseLayer]) -> Self {
        Self {
            w: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            b: layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.w.iter_mut().flatten().for_each(|v| *v = 0.0);
        self.b.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
}

/// Scratch buffers for one sample's forward/backward pass.
struct Scratch {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    mask: Vec<Option<Vec<f64>>>,
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(layers: &[DenseLayer], dropout_positions: &[usize]) -> Self {
        Self {
            pre: layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
            post: layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
            mask: (0..layers.len())
                .map(|li| dropout_positions.contains(&li).then(|| vec![1.0; layers[li].out_dim]))
                .collect(),
            delta: layers.iter().map(|l| vec![0.0; l.in_dim.max(l.out_dim)]).collect(),
        }
    }
}

/// Forward pass with optional dropout; returns the last layer's logit.
fn forward_train(
    layers: &[DenseLayer],
    x: &[f64],
    s: &mut Scratch,
    dropout: Option<(f64, &mut crate::rng::Rng)>,
) -> f64 {
    let (keep, mut rng) = match dropout {
        Some((rate, rng)) => (1.0 - rate, Some(rng)),
        None => (1.0, None),
    };
    let last = layers.len() - 1;
    for li in 0..layers.len() {
        let (before, after) = s.post.split_at_mut(li);
        let input: &[f64] = if li == 0 { x } else { &before[li - 1] };
        layers[li].affine(input, &mut s.pre[li]);
        if li == last {
            break;
        }
        let act = layers[li].activation;
        for (a, &z) in after[0].iter_mut().zip(&s.pre[li]) {
            *a = act.apply(z);
        }
        if let (Some(mask), Some(rng)) = (s.mask[li].as_mut(), rng.as_deref_mut()) {
            for (m, a) in mask.iter_mut().zip(after[0].iter_mut()) {
                *m = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                *a *= *m;
            }
        }
    }
    s.pre[last][0]
}

/// Accumulates `scale * dLoss/dparams` for one sample; `dz_out` is the loss
/// derivative with respect to the output logit.
fn backward_train(layers: &[DenseLayer], x: &[f64], s: &mut Scratch, dz_out: f64, grads: &mut Grads) {
    let last = layers.len() - 1;
    let mut g_z = vec![dz_out];
    for li in (0..=last).rev() {
        let layer = &layers[li];
        let input: &[f64] = if li == 0 { x } else { &s.post[li - 1] };
        let gw = &mut grads.w[li];
        for (o, &g) in g_z.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.b[li][o] += g;
            let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (acc, a) in row.iter_mut().zip(input) {
                *acc += g * a;
            }
        }
        if li == 0 {
            break;
        }
        let g_a = &mut s.delta[li][..layer.in_dim];
        layer.transpose_mul(&g_z, g_a);
        let below = &layers[li - 1];
        if let Some(mask) = &s.mask[li - 1] {
            for (g, m) in g_a.iter_mut().zip(mask) {
                *g *= m;
            }
        }
        for (g, &z) in g_a.iter_mut().zip(&s.pre[li - 1]) {
            *g *= below.activation.derivative(z);
        }
        g_z = g_a.to_vec();
    }
}

/// Class-weighted mean cross-entropy, normalized by the total sample weight.
fn weighted_loss(layers: &[DenseLayer], data: &Dataset, cfg: &MlpConfig, s: &mut Scratch) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, &y) in data.features().iter_rows().zip(data.labels()) {
        let z = forward_train(layers, x, s, None);
        let w = cfg.sample_weight(y);
        num += w * bce_with_logit(z, f64::from(y));
        den += w;
    }
    num / den
}

/// Mini-batch SGD on class-weighted binary cross-entropy. Returns the
/// parameters of the epoch with the lowest validation loss.
pub fn train_mlp(train: &Dataset, val: &Dataset, cfg: &MlpConfig) -> Result<MlpModel> {
    cfg.validate()?;
    train.require_both_classes()?;
    if val.n() == 0 {
        return Err(Error::Empty("validation split"));
    }
    if val.d() != train.d() {
        return Err(Error::DimensionMismatch {
            expected: train.d(),
            got: val.d(),
        });
    }

    let mut layers = init_layers(train.d(), cfg);
    let mut grads = Grads::zeros(&layers);
    let mut scratch = Scratch::new(&layers, &cfg.dropout_positions);
    let mut order: Vec<usize> = (0..train.n()).collect();
    let x = train.features();
    let y = train.labels();

    let mut best = (f64::INFINITY, 0usize, layers.clone());
    let mut final_train_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut substream(cfg.seed, "mlp/shuffle", epoch as u64));
        let mut drop_rng = substream(cfg.seed, "mlp/dropout", epoch as u64);
        let mut loss_num = 0.0;
        let mut loss_den = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let wsum: f64 = batch.iter().map(|&i| cfg.sample_weight(y[i])).sum();
            for &i in batch {
                let row = x.row(i);
                let label = f64::from(y[i]);
                let z = forward_train(&layers, row, &mut scratch, Some((cfg.dropout_rate, &mut drop_rng)));
                let w = cfg.sample_weight(y[i]);
                loss_num += w * bce_with_logit(z, label);
                loss_den += w;
                let dz = w * (sigmoid(z) - label) / wsum;
                backward_train(&layers, row, &mut scratch, dz, &mut grads);
            }
            for (li, layer) in layers.iter_mut().enumerate() {
                for (p, g) in layer.weights.iter_mut().zip(&grads.w[li]) {
                    *p -= cfg.learning_rate * g;
                }
                for (p, g) in layer.bias.iter_mut().zip(&grads.b[li]) {
                    *p -= cfg.learning_rate * g;
                }
            }
        }

        final_train_loss = loss_num / loss_den;
        let val_loss = weighted_loss(&layers, val, cfg, &mut scratch);
        if !final_train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if val_loss < best.0 {
            best = (val_loss, epoch, layers.clone());
        }
        log::trace!("epoch {epoch}: train {final_train_loss:.5} val {val_loss:.5}");
    }

    let (best_val_loss, best_epoch, best_layers) = best;
    let summary = TrainingSummary {
        seed: cfg.seed,
        epochs_run: cfg.epochs,
        best_epoch,
        best_val_loss,
        final_train_loss,
        config: Some(cfg.clone()),
    };
    Ok(MlpModel::from_layers(best_layers)?.with_training(summary))
}
