//! DeepLIFT rescale-rule attribution averaged over background rows.
//!
//! For one baseline `b` the multiplier of every unit is propagated from the
//! output down to the inputs: affine layers pass multipliers through `W^T`,
//! element-wise activations scale them by `(a_x - a_b) / (z_x - z_b)`. When
//! the pre-activation difference falls under `epsilon` the derivative at
//! `z_x` is used instead. Contributions `m_i (x_i - b_i)` then add up to
//! `f(x) - f(b)`.

use super::{check_background, check_row, Attribution, ExplainerConfig};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::mlp::{ActivationTrace, MlpModel, OutputTarget};

/// Deep SHAP engine with the background traces computed once.
pub struct DeepExplainer<'a> {
    model: &'a MlpModel,
    baselines: Vec<ActivationTrace>,
    epsilon: f64,
    target: OutputTarget,
    base: f64,
}

impl<'a> DeepExplainer<'a> {
    pub fn new(model: &'a MlpModel, background: &Matrix, cfg: &ExplainerConfig) -> Result<Self> {
        cfg.validate()?;
        check_background(background, model.input_dim())?;
        let baselines: Vec<ActivationTrace> = background
            .iter_rows()
            .map(|b| model.forward_trace(b))
            .collect::<Result<_>>()?;
        let base = baselines.iter().map(|t| target_value(t, cfg.output_target)).sum::<f64>() / baselines.len() as f64;
        Ok(Self {
            model,
            baselines,
            epsilon: cfg.epsilon,
            target: cfg.output_target,
            base,
        })
    }

    pub fn base_value(&self) -> f64 {
        self.base
    }

    /// Input multipliers of `x` against one baseline trace.
    pub fn multipliers(&self, tx: &ActivationTrace, tb: &ActivationTrace) -> Vec<f64> {
        let layers = self.model.layers();
        let last = layers.len() - 1;
        let rescale = |li: usize, u: usize| -> f64 {
            let (zx, zb) = (tx.pre[li][u], tb.pre[li][u]);
            let dz = zx - zb;
            if dz.abs() < self.epsilon {
                layers[li].activation.derivative(zx)
            } else {
                (tx.post[li][u] - tb.post[li][u]) / dz
            }
        };
        // multipliers with respect to the pre-activation of the current layer
        let mut m_z = match self.target {
            OutputTarget::Logit => vec![1.0],
            OutputTarget::Probability => vec![rescale(last, 0)],
        };
        let mut m_a = Vec::new();
        for li in (0..=last).rev() {
            let layer = &layers[li];
            m_a.resize(layer.in_dim, 0.0);
            layer.transpose_mul(&m_z, &mut m_a);
            if li == 0 {
                break;
            }
            m_z.clear();
            m_z.extend(m_a.iter().enumerate().map(|(u, m)| m * rescale(li - 1, u)));
        }
        m_a
    }

    pub fn explain(&self, x: &[f64]) -> Result<Attribution> {
        check_row(x, self.model.input_dim())?;
        let tx = self.model.forward_trace(x)?;
        let mut phi = vec![0.0; x.len()];
        for tb in &self.baselines {
            let m = self.multipliers(&tx, tb);
            for ((p, mi), (xi, bi)) in phi.iter_mut().zip(&m).zip(x.iter().zip(&tb.input)) {
                *p += mi * (xi - bi);
            }
        }
        let n = self.baselines.len() as f64;
        phi.iter_mut().for_each(|p| *p /= n);
        Ok(Attribution {
            phi,
            base: self.base,
            fx: target_value(&tx, self.target),
        })
    }
}

fn target_value(trace: &ActivationTrace, target: OutputTarget) -> f64 {
    match target {
        OutputTarget::Probability => trace.output,
        OutputTarget::Logit => trace.pre.last().map(|z| z[0]).unwrap_or(0.0),
    }
}

/// Deep SHAP values of one row.
pub fn deep_shap(model: &MlpModel, background: &Matrix, x: &[f64], cfg: &ExplainerConfig) -> Result<Attribution> {
    DeepExplainer::new(model, background, cfg)?.explain(x)
}
