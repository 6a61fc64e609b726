use serde::{Deserialize, Serialize};

use crate::attribution::{explain_row, ExplainerConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::{MlpModel, OutputTarget};

/// Attribution of one feature before and after swapping in a donor's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub observation: usize,
    pub feature: usize,
    pub donor: Option<usize>,
    pub value_before: f64,
    pub value_after: f64,
    pub phi_before: f64,
    pub phi_after: f64,
    pub output_before: f64,
    pub output_after: f64,
}

/// Nearest other row of `rows` to row `x_index`, measured over all features
/// except `feature` after scaling each column by its standard deviation.
/// Ties go to the lower row index.
pub fn nearest_donor(rows: &Matrix, x_index: usize, feature: usize) -> Result<usize> {
    if rows.rows() < 2 {
        return Err(Error::config("counterfactual probe needs at least two explanation rows"));
    }
    if x_index >= rows.rows() || feature >= rows.cols() {
        return Err(Error::config("probe index out of range"));
    }
    let means = rows.column_means();
    let inv_sd: Vec<f64> = (0..rows.cols())
        .map(|j| {
            let var = rows.iter_rows().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / rows.rows() as f64;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let x = rows.row(x_index);
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, r) in rows.iter_rows().enumerate() {
        if i == x_index {
            continue;
        }
        let d: f64 = (0..rows.cols())
            .filter(|&j| j != feature)
            .map(|j| ((r[j] - x[j]) * inv_sd[j]).powi(2))
            .sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

fn model_output(model: &MlpModel, x: &[f64], target: OutputTarget) -> Result<f64> {
    model.output(x, target)
}

/// Re-explains row `x_index` with `feature` set to `value`.
pub fn probe_with_value(
    model: &MlpModel,
    cfg: &ExplainerConfig,
    background: &Matrix,
    rows: &Matrix,
    x_index: usize,
    feature: usize,
    value: f64,
) -> Result<ProbeResult> {
    if x_index >= rows.rows() || feature >= rows.cols() {
        return Err(Error::config("probe index out of range"));
    }
    let x = rows.row(x_index);
    let mut replaced = x.to_vec();
    replaced[feature] = value;
    let before = explain_row(model, background, x, cfg)?;
    let after = explain_row(model, background, &replaced, cfg)?;
    Ok(ProbeResult {
        observation: x_index,
        feature,
        donor: None,
        value_before: x[feature],
        value_after: value,
        phi_before: before.phi[feature],
        phi_after: after.phi[feature],
        output_before: model_output(model, x, cfg.output_target)?,
        output_after: model_output(model, &replaced, cfg.output_target)?,
    })
}

/// Swaps the probed feature of row `x_index` for the value held by its
/// nearest neighbour in `rows` and re-explains.
pub fn counterfactual_probe(
    model: &MlpModel,
    cfg: &ExplainerConfig,
    background: &Matrix,
    rows: &Matrix,
    x_index: usize,
    feature: usize,
) -> Result<ProbeResult> {
    let donor = nearest_donor(rows, x_index, feature)?;
    let value = rows.get(donor, feature);
    let mut result = probe_with_value(model, cfg, background, rows, x_index, feature, value)?;
    result.donor = Some(donor);
    Ok(result)
}
