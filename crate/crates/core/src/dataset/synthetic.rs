use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::substream;

const BISECTION_ITERS: usize = 50;
const INTERCEPT_BRACKET: (f64, f64) = (-40.0, 40.0);

/// Parameters of the planted-logistic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub event_rate: f64,
    pub n_informative: usize,
    /// One coefficient per informative feature.
    pub effect_sizes: Vec<f64>,
    /// Standard deviation of Gaussian noise added to the linear predictor.
    #[serde(default)]
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Spec with `n_informative` features at effect 1.0 and no latent noise.
    pub fn new(n: usize, d: usize, event_rate: f64, n_informative: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            event_rate,
            n_informative,
            effect_sizes: vec![1.0; n_informative],
            noise_scale: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.event_rate > 0.0 && self.event_rate < 0.5) {
            return Err(Error::config(format!(
                "event_rate must lie in (0, 0.5), got {}",
                self.event_rate
            )));
        }
        if self.n_informative < 1 || self.n_informative > self.d {
            return Err(Error::config(format!(
                "n_informative must lie in [1, d={}], got {}",
                self.d, self.n_informative
            )));
        }
        if self.effect_sizes.len() != self.n_informative {
            return Err(Error::config(format!(
                "effect_sizes has {} entries, expected n_informative = {}",
                self.effect_sizes.len(),
                self.n_informative
            )));
        }
        if self.n == 0 {
            return Err(Error::config("n must be positive"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::config("noise_scale must be finite and >= 0"));
        }
        Ok(())
    }

    /// Column indices carrying a true effect, in the order of `effect_sizes`.
    pub fn informative_indices(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = (0..self.d).collect();
        cols.shuffle(&mut substream(self.seed, "synthetic/informative", 0));
        cols.truncate(self.n_informative);
        cols
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draws standard-normal features and Bernoulli labels from a logistic model
/// over the informative columns.
///
/// The intercept is found by bisection so that the realized event count
/// (with the per-row uniforms held fixed) matches `event_rate`; labels are
/// monotone in the intercept for fixed uniforms, so the search is exact up to
/// one row.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let informative = spec.informative_indices();

    let mut rng = substream(spec.seed, "synthetic/features", 0);
    let data: Vec<f64> = (0..spec.n * spec.d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let features = Matrix::from_vec(spec.n, spec.d, data)?;

    let mut rng = substream(spec.seed, "synthetic/labels", 0);
    let linear: Vec<f64> = features
        .iter_rows()
        .map(|row| {
            let eta: f64 = informative
                .iter()
                .zip(&spec.effect_sizes)
                .map(|(&j, b)| b * row[j])
                .sum();
            let noise = if spec.noise_scale > 0.0 {
                spec.noise_scale * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            eta + noise
        })
        .collect();
    let uniforms: Vec<f64> = (0..spec.n).map(|_| rng.gen::<f64>()).collect();

    let rate_at = |b0: f64| -> f64 {
        let events = linear
            .iter()
            .zip(&uniforms)
            .filter(|(eta, u)| **u < sigmoid(**eta + b0))
            .count();
        events as f64 / spec.n as f64
    };

    let (mut lo, mut hi) = INTERCEPT_BRACKET;
    if rate_at(lo) > spec.event_rate || rate_at(hi) < spec.event_rate {
        return Err(Error::Calibration {
            target: spec.event_rate,
            detail: format!(
                "achievable rates span [{}, {}] over intercepts {:?}",
                rate_at(lo),
                rate_at(hi),
                INTERCEPT_BRACKET
            ),
        });
    }
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) < spec.event_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever endpoint lands closer to the target
    let b0 = if (rate_at(lo) - spec.event_rate).abs() <= (rate_at(hi) - spec.event_rate).abs() {
        lo
    } else {
        hi
    };

    let labels = linear
        .iter()
        .zip(&uniforms)
        .map(|(eta, u)| u8::from(*u < sigmoid(eta + b0)))
        .collect();
    Dataset::with_default_names(features, labels)
}
