use super::{check_background, check_row, Attribution, Model};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest feature count accepted by the enumeration engine.
pub const EXACT_MAX_FEATURES: usize = 14;

/// Value of every coalition, indexed by bitmask: the mean over background
/// rows of `f` evaluated with masked-in features taken from `x`.
pub(crate) fn coalition_values(model: &dyn Model, background: &Matrix, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let n = background.rows() as f64;
    let mut composite = vec![0.0; d];
    (0..1usize << d)
        .map(|mask| {
            let mut sum = 0.0;
            for b in background.iter_rows() {
                for j in 0..d {
                    composite[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                }
                sum += model.eval(&composite);
            }
            sum / n
        })
        .collect()
}

/// `|S|! (d - |S| - 1)! / d!` for each coalition size.
fn shapley_weights(d: usize) -> Vec<f64> {
    // 1 / (d * C(d-1, s))
    let mut binom = vec![1.0f64; d];
    for s in 1..d {
        binom[s] = binom[s - 1] * (d - s) as f64 / s as f64;
    }
    binom.iter().map(|c| 1.0 / (d as f64 * c)).collect()
}

/// Shapley values by full enumeration of the `2^d` coalitions.
pub fn exact_shapley(model: &dyn Model, background: &Matrix, x: &[f64]) -> Result<Attribution> {
    let d = model.n_features();
    check_row(x, d)?;
    check_background(background, d)?;
    if d > EXACT_MAX_FEATURES {
        return Err(Error::Unsupported(format!(
            "exact enumeration supports at most {EXACT_MAX_FEATURES} features, got {d}"
        )));
    }
    let v = coalition_values(model, background, x);
    let w = shapley_weights(d);
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in (0..1usize << d).filter(|m| m & bit == 0) {
            acc += w[mask.count_ones() as usize] * (v[mask | bit] - v[mask]);
        }
        *p = acc;
    }
    Ok(Attribution {
        phi,
        base: v[0],
        fx: model.eval(x),
    })
}
