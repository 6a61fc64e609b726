//! Flags observations whose attribution runs against their feature's overall
//! value-to-attribution trend.
//!
//! A feature's trend is the sign of the Spearman correlation between its
//! values and its attributions (features with |rho| < 0.1 carry no trend and
//! are skipped). An observation in the upper value tail is expected to carry
//! the trend's sign, one in the lower tail the opposite sign. It is flagged
//! when its attribution has the other sign and
//! `|phi| >= tau * max_i |phi_i|` for that feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_TAIL_QUANTILE: f64 = 0.05;
pub const DEFAULT_TAU: f64 = 0.5;
const MIN_TREND: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalPoint {
    pub observation: usize,
    pub feature: usize,
    pub value: f64,
    /// Position of the value within its feature, in [0, 1].
    pub quantile: f64,
    pub phi: f64,
    /// +1 when larger values push attributions up, -1 otherwise.
    pub trend: i8,
    /// `|phi| / (tau * max |phi|)`; at least 1 for flagged points.
    pub severity: f64,
}

/// Midranks (1-based), ties share their mean rank.
fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || a.len() != b.len() {
        return None;
    }
    pearson(&midranks(a), &midranks(b))
}

pub fn detect_abnormal(phi: &Matrix, values: &Matrix, q: f64, tau: f64) -> Result<Vec<AbnormalPoint>> {
    if phi.rows() != values.rows() || phi.cols() != values.cols() {
        return Err(Error::DimensionMismatch {
            expected: phi.rows() * phi.cols(),
            got: values.rows() * values.cols(),
        });
    }
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::config(format!("tail quantile must lie in (0, 0.5), got {q}")));
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("tau must be positive, got {tau}")));
    }
    let n = phi.rows();
    let mut out = Vec::new();
    if n < 2 {
        return Ok(out);
    }
    for j in 0..phi.cols() {
        let v = values.column(j);
        let p = phi.column(j);
        let Some(rho) = spearman(&v, &p) else {
            log::warn!("feature {j}: constant values or attributions, skipped");
            continue;
        };
        if rho.abs() < MIN_TREND {
            continue;
        }
        let trend: i8 = if rho > 0.0 { 1 } else { -1 };
        let max_abs = p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let threshold = tau * max_abs;
        let quantiles: Vec<f64> = midranks(&v).iter().map(|r| (r - 1.0) / (n - 1) as f64).collect();
        for i in 0..n {
            let expected = if quantiles[i] >= 1.0 - q {
                f64::from(trend)
            } else if quantiles[i] <= q {
                -f64::from(trend)
            } else {
                continue;
            };
            if p[i] * expected < 0.0 && p[i].abs() >= threshold {
                out.push(AbnormalPoint {
                    observation: i,
                    feature: j,
                    value: v[i],
                    quantile: quantiles[i],
                    phi: p[i],
                    trend,
                    severity: p[i].abs() / threshold,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// phi = centered value for 100 points, with the top-valued point's phi
    /// flipped and enlarged.
    pub(crate) fn injected() -> (Matrix, Matrix, usize) {
        let n = 100;
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut phi: Vec<f64> = values.iter().map(|v| (v - 49.5) / 10.0).collect();
        let top = n - 1;
        phi[top] = -12.0;
        (
            Matrix::from_vec(n, 1, phi).unwrap(),
            Matrix::from_vec(n, 1, values).unwrap(),
            top,
        )
    }

    #[test]
    fn flags_exactly_the_injected_point() {
        let (phi, values, top) = injected();
        let flags = detect_abnormal(&phi, &values, DEFAULT_TAIL_QUANTILE, DEFAULT_TAU).unwrap();
        assert_eq!(flags.len(), 1);
        let f = &flags[0];
        assert_eq!((f.observation, f.feature, f.trend), (top, 0, 1));
        assert_eq!(f.quantile, 1.0);
        assert!((f.severity - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_column_has_no_flags() {
        let values = Matrix::from_vec(5, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let phi = Matrix::zeros(5, 1);
        assert!(detect_abnormal(&phi, &values, 0.2, 0.5).unwrap().is_empty());
    }

    #[test]
    fn monotone_has_no_flags() {
        let values = Matrix::from_vec(50, 1, (0..50).map(|i| i as f64).collect()).unwrap();
        let phi = Matrix::from_vec(50, 1, (0..50).map(|i| (i as f64 - 24.5).powi(3)).collect()).unwrap();
        assert!(detect_abnormal(&phi, &values, 0.1, 0.1).unwrap().is_empty());
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
    }

    #[test]
    fn contract_errors() {
        let m = Matrix::zeros(3, 2);
        assert!(detect_abnormal(&m, &Matrix::zeros(3, 1), 0.1, 0.5).is_err());
        assert!(detect_abnormal(&m, &m, 0.5, 0.5).is_err());
        assert!(detect_abnormal(&m, &m, 0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn more_tau_fewer_flags(
            vals in prop::collection::vec(-3.0f64..3.0, 60),
            noise in prop::collection::vec(-2.0f64..2.0, 60),
            t1 in 0.05f64..1.0, dt in 0.0f64..1.0,
        ) {
            let phi: Vec<f64> = vals.iter().zip(&noise).map(|(v, e)| v + e).collect();
            let phi = Matrix::from_vec(30, 2, phi).unwrap();
            let values = Matrix::from_vec(30, 2, vals).unwrap();
            let a = detect_abnormal(&phi, &values, 0.2, t1).unwrap();
            let b = detect_abnormal(&phi, &values, 0.2, t1 + dt).unwrap();
            prop_assert!(b.len() <= a.len());
            for p in &a {
                prop_assert!(p.severity >= 1.0 - 1e-12);
                prop_assert!((0.0..=1.0).contains(&p.quantile));
            }
        }
    }
}
